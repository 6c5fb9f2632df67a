//! Correctness and equivalence judging.
//!
//! [`Judge`] is the seam between clustering/labelling and whatever decides
//! whether two answers mean the same thing. [`RuleJudge`] compares canonical
//! text and never fails; a remote judge lives in the client crate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{canonicalize, Question};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeSource {
    RuleBased,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub equivalent_or_correct: bool,
    pub source: JudgeSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JudgeError {
    #[error("judge transport failed: {0}")]
    Transport(String),
    #[error("judge reply could not be parsed: {0}")]
    Unparseable(String),
}

pub trait Judge: Sync {
    fn judge_equivalent(&self, a: &str, b: &str) -> Result<JudgeVerdict, JudgeError>;

    fn judge_correct(&self, answer: &str, question: &Question) -> Result<JudgeVerdict, JudgeError>;
}

/// Canonical-text exact match.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleJudge;

impl RuleJudge {
    fn verdict(v: bool) -> JudgeVerdict {
        JudgeVerdict {
            equivalent_or_correct: v,
            source: JudgeSource::RuleBased,
        }
    }
}

impl Judge for RuleJudge {
    fn judge_equivalent(&self, a: &str, b: &str) -> Result<JudgeVerdict, JudgeError> {
        Ok(Self::verdict(canonicalize(a) == canonicalize(b)))
    }

    fn judge_correct(&self, answer: &str, question: &Question) -> Result<JudgeVerdict, JudgeError> {
        let answer = canonicalize(answer);
        Ok(Self::verdict(
            question
                .ground_truth()
                .iter()
                .any(|gt| canonicalize(gt) == answer),
        ))
    }
}

impl<J: Judge + ?Sized> Judge for &J {
    fn judge_equivalent(&self, a: &str, b: &str) -> Result<JudgeVerdict, JudgeError> {
        (**self).judge_equivalent(a, b)
    }

    fn judge_correct(&self, answer: &str, question: &Question) -> Result<JudgeVerdict, JudgeError> {
        (**self).judge_correct(answer, question)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Domain;

    #[test]
    fn rule_judge_canonicalizes() {
        let q = Question::new("q1", Domain::Region, "capital?", vec!["Paris".into()]).unwrap();
        let v = RuleJudge.judge_correct("  PARIS.", &q).unwrap();
        assert!(v.equivalent_or_correct);
        assert_eq!(v.source, JudgeSource::RuleBased);
        assert!(
            !RuleJudge
                .judge_correct("Lyon", &q)
                .unwrap()
                .equivalent_or_correct
        );
        assert!(
            RuleJudge
                .judge_equivalent("Rome!", "rome")
                .unwrap()
                .equivalent_or_correct
        );
        assert!(
            !RuleJudge
                .judge_equivalent("Rome", "Romania")
                .unwrap()
                .equivalent_or_correct
        );
    }
}
