//! Elicitation prompt templates.
//!
//! Prompts are pure functions of (kind, question, context).

use calibkit_core::Question;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PromptKind {
    Verb,
    VerbTopk,
    PTrue,
    PTrueCand,
    SelfAsk,
    SelfAskCand,
}

impl PromptKind {
    pub fn needs_answer(self) -> bool {
        !matches!(self, PromptKind::Verb | PromptKind::VerbTopk)
    }

    pub fn needs_candidates(self) -> bool {
        matches!(self, PromptKind::PTrueCand | PromptKind::SelfAskCand)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("{0:?} needs the first-turn answer")]
    MissingAnswer(PromptKind),
    #[error("{0:?} needs a candidate list")]
    MissingCandidates(PromptKind),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PromptContext {
    /// The model's first-turn answer.
    pub answer: Option<String>,
    pub candidates: Vec<String>,
    /// List length for top-k elicitation.
    pub k: usize,
}

impl PromptContext {
    pub fn answer(answer: impl Into<String>) -> Self {
        PromptContext {
            answer: Some(answer.into()),
            ..Self::default()
        }
    }

    pub fn with_candidates(mut self, candidates: Vec<String>) -> Self {
        self.candidates = candidates;
        self
    }
}

fn sentence(answer: &str) -> String {
    let a = answer.trim();
    if a.ends_with('.') {
        a.to_string()
    } else {
        format!("{a}.")
    }
}

pub fn build_prompt(
    kind: PromptKind,
    question: &Question,
    ctx: &PromptContext,
) -> Result<String, PromptError> {
    let q = question.text();
    let answer = match (&ctx.answer, kind.needs_answer()) {
        (Some(a), _) => a.trim().to_string(),
        (None, true) => return Err(PromptError::MissingAnswer(kind)),
        (None, false) => String::new(),
    };
    if kind.needs_candidates() && ctx.candidates.is_empty() {
        return Err(PromptError::MissingCandidates(kind));
    }
    let candidates = sentence(&ctx.candidates.join(", "));
    Ok(match kind {
        PromptKind::Verb => format!(
            "[Instruction]\n\
             You are a knowledgeable assistant.\n\
             Please answer the following question and provide your confidence as a numeric value between 0 and 1\n\
             (e.g., 0.85 means you are 85% confident).\n\n\
             [Input]\n\
             Question: {q}\n\n\
             [Output format]\n\
             Answer: {{answer}}\n\
             Confidence: {{confidence between 0 and 1, with two-decimal precision}}"
        ),
        PromptKind::VerbTopk => {
            let k = ctx.k.max(1);
            let lines: Vec<String> = (1..=k)
                .map(|i| format!("{i}. Answer: {{answer_{i}}}, Confidence: {{confidence_{i}}}"))
                .collect();
            format!(
                "[Instruction]\n\
                 You are a knowledgeable assistant.\n\
                 Please list your top-{k} most likely answers to the following question.\n\
                 For each answer, report your numeric confidence between 0 and 1\n\
                 (e.g., 0.85 means 85% confident).\n\
                 Use two-decimal precision for all confidence values.\n\n\
                 [Input]\n\
                 Question: {q}\n\n\
                 [Output format]\n\
                 {}",
                lines.join("\n")
            )
        }
        PromptKind::PTrue => format!(
            "[Instruction]\n\
             You will be given a question and the model's previous answer.\n\
             Please respond with True if the answer is factually correct, or False if it is incorrect.\n\
             Answer strictly with either \"True\" or \"False\" only.\n\n\
             [Input]\n\
             Question: {q}\n\
             Model answer: {}\n\n\
             [Output]",
            sentence(&answer)
        ),
        PromptKind::PTrueCand => format!(
            "[Instruction]\n\
             You will be given a question, the model's answer, and several candidate answers.\n\
             Please respond with True if the model's answer is factually correct,\n\
             or False if it is incorrect.\n\
             Answer strictly with either \"True\" or \"False\" only.\n\n\
             [Input]\n\
             Question: {q}\n\
             Model answer: {}\n\
             Candidate answers: {candidates}\n\n\
             [Output]",
            sentence(&answer)
        ),
        PromptKind::SelfAsk => format!(
            "Question: {q}\n\
             Answer: {}\n\
             How confident are you that your answer is correct?\n\
             Please output only a number between 0 and 1 (e.g., 0.85).",
            sentence(&answer)
        ),
        PromptKind::SelfAskCand => format!(
            "Question: {q}\n\
             Candidate answers: {candidates}\n\
             Considering these candidates, how confident are you that your original answer ({answer}) is correct?\n\
             Please output only a number between 0 and 1 (e.g., 0.85)."
        ),
    })
}

/// Plain first-turn prompt used when no verbalized confidence is wanted.
pub fn answer_prompt(question: &Question) -> String {
    format!(
        "Answer the following question with a single answer and nothing else.\nQuestion: {}\nAnswer:",
        question.text()
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use calibkit_core::Domain;

    fn q() -> Question {
        Question::new(
            "q",
            Domain::Region,
            "What is the capital of France?",
            vec!["Paris".into()],
        )
        .unwrap()
    }

    #[test]
    fn self_ask_template() {
        let p = build_prompt(PromptKind::SelfAsk, &q(), &PromptContext::answer("Paris")).unwrap();
        assert!(p.contains("Please output only a number between 0 and 1"));
        assert!(p.contains("Answer: Paris.\nHow confident are you that your answer is correct?"));
    }

    #[test]
    fn candidate_templates_list_every_candidate() {
        let ctx = PromptContext::answer("Renato Sanches").with_candidates(vec![
            "Renato Sanches".into(),
            "Anthony Martial".into(),
            "Raheem Sterling".into(),
        ]);
        let p = build_prompt(PromptKind::PTrueCand, &q(), &ctx).unwrap();
        assert!(p.contains("Candidate answers: Renato Sanches, Anthony Martial, Raheem Sterling."));
        assert!(p.contains("Model answer: Renato Sanches."));
        let p = build_prompt(PromptKind::SelfAskCand, &q(), &ctx).unwrap();
        assert!(p.contains("your original answer (Renato Sanches) is correct?"));
    }

    #[test]
    fn verb_templates() {
        let p = build_prompt(PromptKind::Verb, &q(), &PromptContext::default()).unwrap();
        assert!(p.contains("Confidence: {confidence between 0 and 1"));
        assert!(p.contains("Question: What is the capital of France?"));
        let ctx = PromptContext {
            k: 3,
            ..PromptContext::default()
        };
        let p = build_prompt(PromptKind::VerbTopk, &q(), &ctx).unwrap();
        assert!(p.contains("top-3 most likely"));
        assert!(p.contains("3. Answer: {answer_3}, Confidence: {confidence_3}"));
    }

    #[test]
    fn second_turn_without_answer_fails() {
        for kind in [
            PromptKind::PTrue,
            PromptKind::PTrueCand,
            PromptKind::SelfAsk,
            PromptKind::SelfAskCand,
        ] {
            assert_eq!(
                build_prompt(kind, &q(), &PromptContext::default()),
                Err(PromptError::MissingAnswer(kind))
            );
        }
        assert_eq!(
            build_prompt(
                PromptKind::SelfAskCand,
                &q(),
                &PromptContext::answer("Paris")
            ),
            Err(PromptError::MissingCandidates(PromptKind::SelfAskCand))
        );
    }

    #[test]
    fn prompts_are_pure() {
        let ctx =
            PromptContext::answer("Paris").with_candidates(vec!["Paris".into(), "Lyon".into()]);
        for kind in [
            PromptKind::PTrueCand,
            PromptKind::SelfAskCand,
            PromptKind::Verb,
        ] {
            assert_eq!(
                build_prompt(kind, &q(), &ctx),
                build_prompt(kind, &q(), &ctx)
            );
        }
    }
}
