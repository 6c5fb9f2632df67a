use crate::model::Probes;

use super::EstimateError;

/// How a P(True) confidence is read off the verification query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PTrueMode {
    /// Fraction of sampled verification replies that said True.
    ConsisFreq,
    /// Probability mass on the True token at the verdict position.
    TokenProb,
}

/// Fraction of `True` verdicts.
pub fn p_true_consis(verdicts: &[bool]) -> Result<f64, EstimateError> {
    if verdicts.is_empty() {
        return Err(EstimateError::Missing("True/False verdicts"));
    }
    let yes = verdicts.iter().filter(|&&v| v).count();
    Ok(yes as f64 / verdicts.len() as f64)
}

/// P(True) for the chosen answer, with or without the candidate list.
pub fn p_true(
    mode: PTrueMode,
    with_candidates: bool,
    probes: &Probes,
) -> Result<f64, EstimateError> {
    match (mode, with_candidates) {
        (PTrueMode::ConsisFreq, false) => p_true_consis(&probes.p_true_verdicts),
        (PTrueMode::ConsisFreq, true) => p_true_consis(&probes.p_true_cand_verdicts),
        (PTrueMode::TokenProb, false) => probes
            .p_true_prob
            .ok_or(EstimateError::Missing("p_true token probability")),
        (PTrueMode::TokenProb, true) => probes
            .p_true_cand_prob
            .ok_or(EstimateError::Missing("p_true_cand token probability")),
    }
}

/// The model's verbalized self-assessment of its chosen answer.
pub fn self_ask(with_candidates: bool, probes: &Probes) -> Result<f64, EstimateError> {
    if with_candidates {
        probes
            .self_ask_cand
            .ok_or(EstimateError::Missing("self-ask-cand reply"))
    } else {
        probes
            .self_ask
            .ok_or(EstimateError::Missing("self-ask reply"))
    }
}

fn verdict_family(token: &str) -> Option<bool> {
    match token.trim().to_ascii_lowercase().as_str() {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

/// Renormalized probability of `True` among the top alternatives at the
/// verdict token: `p(True-family) / (p(True-family) + p(False-family))`,
/// where a family collects case and whitespace variants.
///
/// Returns `None` when neither family appears.
pub fn true_probability(top_logprobs: &[(String, f64)]) -> Option<f64> {
    let mut yes = 0.0;
    let mut no = 0.0;
    for (token, logprob) in top_logprobs {
        match verdict_family(token) {
            Some(true) => yes += logprob.exp(),
            Some(false) => no += logprob.exp(),
            None => {}
        }
    }
    let total = yes + no;
    (total > 0.0).then(|| yes / total)
}
