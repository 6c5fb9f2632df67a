//! First-turn sampling and second-turn probes for one question.

use std::sync::OnceLock;

use calibkit_core::estimators::true_probability;
use calibkit_core::{Probes, Question, ResponseSample, SampleBatch, TokenProb};
use regex::Regex;

use crate::client::{ChatRequest, Choice, Client, LlmError};
use crate::parse::{parse_topk, parse_verbalized, parse_verdict};
use crate::prompts::{build_prompt, PromptContext, PromptKind};

/// The answer inside a Verb-format reply and its byte span.
fn answer_span(content: &str) -> Option<(usize, usize)> {
    static ANSWER_LINE: OnceLock<Regex> = OnceLock::new();
    static CONF_LINE: OnceLock<Regex> = OnceLock::new();
    let answer_line = ANSWER_LINE.get_or_init(|| {
        Regex::new(r"(?im)^[ \t*]*answer[ \t*]*[:=][ \t]*(.*?)[ \t]*$").expect("regex")
    });
    let conf_line =
        CONF_LINE.get_or_init(|| Regex::new(r"(?i)^[ \t*]*confidence\b").expect("regex"));
    if let Some(c) = answer_line.captures(content) {
        let m = c.get(1).expect("group");
        return (!m.as_str().is_empty()).then(|| (m.start(), m.end()));
    }
    let mut offset = 0;
    for line in content.split_inclusive('\n') {
        let trimmed = line.trim();
        if !trimmed.is_empty() && !conf_line.is_match(trimmed) {
            let start = offset + line.find(trimmed).expect("substring");
            return Some((start, start + trimmed.len()));
        }
        offset += line.len();
    }
    None
}

/// Turns one completion into a sample. Logprobs are kept only when the
/// tokens spell out the reply exactly; then the tokens overlapping the
/// answer span are the sample's tokens.
pub fn choice_to_sample(choice: &Choice) -> Option<ResponseSample> {
    let (start, end) = answer_span(&choice.text)?;
    let text = choice.text[start..end].to_string();
    let mut tokens = Vec::new();
    if let Some(toks) = &choice.tokens {
        let spelled: String = toks.iter().map(|t| t.token.as_str()).collect();
        if spelled == choice.text {
            let mut pos = 0;
            for t in toks {
                let (s, e) = (pos, pos + t.token.len());
                pos = e;
                if s < end && e > start {
                    match TokenProb::new(t.token.clone(), t.logprob) {
                        Ok(tp) => tokens.push(tp),
                        Err(_) => {
                            tokens.clear();
                            break;
                        }
                    }
                }
            }
        }
    }
    let mut sample = ResponseSample::new(text, tokens);
    sample.verbalized_conf = parse_verbalized(&choice.text[end..]).ok();
    Some(sample)
}

fn collect(client: &Client, req: &ChatRequest) -> Result<Vec<Choice>, LlmError> {
    let mut out = Vec::with_capacity(req.n);
    // Some servers ignore `n`; keep asking until enough choices arrive.
    let mut rounds = 0;
    while out.len() < req.n {
        let mut r = req.clone();
        r.n = req.n - out.len();
        let got = client.chat(&r)?;
        out.extend(got.into_iter().take(req.n - out.len()));
        rounds += 1;
        if rounds > req.n {
            return Err(LlmError::Malformed(
                "endpoint keeps returning no choices".into(),
            ));
        }
    }
    Ok(out)
}

/// Draws `n` answers with the Verb prompt; sample 0 is the chosen answer.
/// Replies with no recognisable answer are dropped and redrawn once.
pub fn sample_answers(
    client: &Client,
    question: &Question,
    n: usize,
) -> Result<SampleBatch, LlmError> {
    let prompt = build_prompt(PromptKind::Verb, question, &PromptContext::default())?;
    let mut samples = Vec::with_capacity(n);
    for _ in 0..2 {
        let need = n.max(1) - samples.len();
        samples.extend(
            collect(client, &ChatRequest::new(prompt.clone(), need))?
                .iter()
                .filter_map(choice_to_sample),
        );
        if samples.len() >= n.max(1) {
            break;
        }
    }
    SampleBatch::new(question.id(), samples, 0).map_err(|e| LlmError::Malformed(e.to_string()))
}

/// Attaches a top-k list to each sample by position; unparseable lists are
/// left empty. Returns the number of parse failures.
pub fn attach_topk(
    client: &Client,
    question: &Question,
    batch: SampleBatch,
    k: usize,
) -> Result<(SampleBatch, usize), LlmError> {
    let ctx = PromptContext {
        k,
        ..PromptContext::default()
    };
    let prompt = build_prompt(PromptKind::VerbTopk, question, &ctx)?;
    let replies = collect(client, &ChatRequest::new(prompt, batch.len()))?;
    let mut failures = 0;
    let mut samples = batch.samples().to_vec();
    for (s, r) in samples.iter_mut().zip(&replies) {
        match parse_topk(&r.text, k) {
            Ok(p) => s.aux = Some(p.pairs),
            Err(_) => failures += 1,
        }
    }
    let rebuilt = SampleBatch::new(batch.question_id(), samples, batch.chosen_index())
        .and_then(|b| b.with_probes(batch.probes().clone()))
        .map_err(|e| LlmError::Malformed(e.to_string()))?;
    Ok((rebuilt, failures))
}

/// Which second-turn queries to run.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRequest {
    pub p_true_consis: bool,
    pub p_true_prob: bool,
    pub self_ask: bool,
    /// Also run the candidate-list variant of each requested probe.
    pub with_candidates: bool,
    /// Samples drawn for the P(True) frequency.
    pub consis_samples: usize,
}

impl Default for ProbeRequest {
    fn default() -> Self {
        ProbeRequest {
            p_true_consis: true,
            p_true_prob: true,
            self_ask: true,
            with_candidates: true,
            consis_samples: 10,
        }
    }
}

/// Runs the requested probes about the batch's chosen answer. Unparseable
/// replies leave the probe empty and are counted in the returned failures.
pub fn collect_probes(
    client: &Client,
    question: &Question,
    batch: &SampleBatch,
    req: &ProbeRequest,
    candidates: &[String],
) -> Result<(Probes, usize), LlmError> {
    let answer = batch.chosen().text.clone();
    let mut probes = Probes::default();
    let mut failures = 0;
    let variants: &[bool] = if req.with_candidates {
        &[false, true]
    } else {
        &[false]
    };
    for &cand in variants {
        let ctx = if cand {
            probes.candidates = candidates.to_vec();
            PromptContext::answer(answer.clone()).with_candidates(candidates.to_vec())
        } else {
            PromptContext::answer(answer.clone())
        };
        if req.p_true_consis || req.p_true_prob {
            let kind = if cand {
                PromptKind::PTrueCand
            } else {
                PromptKind::PTrue
            };
            let prompt = build_prompt(kind, question, &ctx)?;
            if req.p_true_consis {
                let replies = collect(
                    client,
                    &ChatRequest::new(prompt.clone(), req.consis_samples.max(1)),
                )?;
                let mut verdicts = Vec::new();
                for r in &replies {
                    match parse_verdict(&r.text) {
                        Ok(v) => verdicts.push(v),
                        Err(_) => failures += 1,
                    }
                }
                if cand {
                    probes.p_true_cand_verdicts = verdicts;
                } else {
                    probes.p_true_verdicts = verdicts;
                }
            }
            if req.p_true_prob {
                let mut r = ChatRequest::new(prompt, 1);
                r.temperature = Some(0.0);
                r.top_logprobs = true;
                let reply = collect(client, &r)?;
                let p = reply[0]
                    .tokens
                    .as_ref()
                    .and_then(|t| t.first())
                    .and_then(|first| {
                        let mut alts: Vec<(String, f64)> = first
                            .top_logprobs
                            .iter()
                            .map(|a| (a.token.clone(), a.logprob))
                            .collect();
                        if alts.is_empty() {
                            alts.push((first.token.clone(), first.logprob));
                        }
                        true_probability(&alts)
                    });
                if p.is_none() {
                    failures += 1;
                }
                if cand {
                    probes.p_true_cand_prob = p;
                } else {
                    probes.p_true_prob = p;
                }
            }
        }
        if req.self_ask {
            let kind = if cand {
                PromptKind::SelfAskCand
            } else {
                PromptKind::SelfAsk
            };
            let prompt = build_prompt(kind, question, &ctx)?;
            let reply = collect(client, &ChatRequest::new(prompt, 1))?;
            let v = parse_verbalized(&reply[0].text).ok();
            if v.is_none() {
                failures += 1;
            }
            if cand {
                probes.self_ask_cand = v;
            } else {
                probes.self_ask = v;
            }
        }
    }
    Ok((probes, failures))
}

/// Runs `f` over `items` with at most `max_in_flight` running at once;
/// results come back in input order.
pub fn sample_many<I, T, F>(max_in_flight: usize, items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync,
{
    use rayon::prelude::*;
    rayon::ThreadPoolBuilder::new()
        .num_threads(max_in_flight.max(1))
        .build()
        .expect("thread pool")
        .install(|| items.par_iter().map(&f).collect())
}
