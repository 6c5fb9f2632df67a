//! Confidence and uncertainty estimators.
//!
//! Every estimator is a pure function of a question's [`SampleBatch`] and its
//! [`ClusterSet`]; sampling and second-turn queries happen upstream. Use
//! [`estimate`] to dispatch by [`Method`].

mod aggregation;
mod double_turn;
mod single_turn;

pub use aggregation::{sca, sfca, snca};
pub use double_turn::{p_true, p_true_consis, self_ask, true_probability, PTrueMode};
pub use single_turn::{
    consistency, majority_cluster, norm_prob_entropy, perplexity, prob_entropy, semantic_entropy,
    verb, verb_topk, weighted_consistency,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{ClusterError, MassMode};
use crate::model::{ClusterSet, ConfidenceEstimate, Method, SampleBatch};

/// Default number of candidates shown to the model by the `-Cand` methods.
pub const DEFAULT_CANDIDATES: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error("logprobs unavailable for this batch")]
    LogprobsUnavailable,
    #[error("missing input: {0}")]
    Missing(&'static str),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("invalid estimator config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// Cluster filter threshold for SCA, SNCA and SFCA.
    pub tau: f64,
    /// Size of top-k elicitation lists.
    pub k: usize,
    /// Number of candidates shown by the `-Cand` methods.
    pub candidates: usize,
    pub mass_mode: MassMode,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            tau: 0.0,
            k: 3,
            candidates: DEFAULT_CANDIDATES,
            mass_mode: MassMode::Distinct,
        }
    }
}

impl EstimatorConfig {
    pub fn with_tau(tau: f64) -> Self {
        EstimatorConfig {
            tau,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EstimateError> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(EstimateError::Config(format!(
                "tau {} outside [0, 1]",
                self.tau
            )));
        }
        if self.k == 0 || self.candidates == 0 {
            return Err(EstimateError::Config(
                "k and candidates must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Runs `method` on one question.
///
/// `clusters` must have been built from `batch` with `cfg.mass_mode`.
pub fn estimate(
    method: Method,
    batch: &SampleBatch,
    clusters: &ClusterSet,
    cfg: &EstimatorConfig,
) -> Result<ConfidenceEstimate, EstimateError> {
    cfg.validate()?;
    let probes = batch.probes();
    let raw = match method {
        Method::ProbEntropy => prob_entropy(batch)?,
        Method::NormProbEntropy => norm_prob_entropy(batch)?,
        Method::SemanticEntropy => semantic_entropy(clusters)?,
        Method::Perplexity => perplexity(batch.chosen())?,
        Method::Verb => verb(batch.chosen())?,
        Method::VerbTopk => verb_topk(
            batch
                .chosen()
                .aux
                .as_deref()
                .ok_or(EstimateError::Missing("top-k list"))?,
        )?,
        Method::Consistency => consistency(clusters),
        Method::ConsistencyVerb => {
            let confs: Vec<Option<f64>> =
                batch.samples().iter().map(|s| s.verbalized_conf).collect();
            weighted_consistency(clusters, &confs)?
        }
        Method::ConsistencyVerbTopk => {
            let confs: Vec<Option<f64>> = batch
                .samples()
                .iter()
                .map(|s| s.aux.as_deref().and_then(|aux| verb_topk(aux).ok()))
                .collect();
            weighted_consistency(clusters, &confs)?
        }
        Method::PTrueConsis => p_true(PTrueMode::ConsisFreq, false, probes)?,
        Method::PTrueConsisCand => p_true(PTrueMode::ConsisFreq, true, probes)?,
        Method::PTrueProb => p_true(PTrueMode::TokenProb, false, probes)?,
        Method::PTrueProbCand => p_true(PTrueMode::TokenProb, true, probes)?,
        Method::SelfAsk => self_ask(false, probes)?,
        Method::SelfAskCand => self_ask(true, probes)?,
        Method::Sca => sca(clusters, cfg.tau)?,
        Method::Snca => snca(clusters, cfg.tau)?,
        Method::Sfca => sfca(clusters, cfg.tau),
    };
    Ok(ConfidenceEstimate::new(method, raw))
}

/// Representatives of the `k` heaviest clusters, used as the candidate list
/// for the `-Cand` prompts. Ties (and mass-free clusters) fall back to size,
/// then to the representative text.
pub fn top_candidates(clusters: &ClusterSet, k: usize) -> Vec<String> {
    let mut order: Vec<&crate::model::Cluster> = clusters.clusters().iter().collect();
    order.sort_by(|a, b| {
        let ma = a.mass.unwrap_or(0.0);
        let mb = b.mass.unwrap_or(0.0);
        mb.total_cmp(&ma)
            .then(b.size().cmp(&a.size()))
            .then(a.representative.cmp(&b.representative))
    });
    order
        .into_iter()
        .take(k)
        .map(|c| c.representative.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::cluster;
    use crate::judge::RuleJudge;
    use crate::model::{Candidate, Probes, ResponseSample};

    fn batch(items: &[(&str, f64)]) -> SampleBatch {
        SampleBatch::new(
            "q",
            items
                .iter()
                .map(|&(t, p)| ResponseSample::single_token(t, p))
                .collect(),
            0,
        )
        .unwrap()
    }

    #[test]
    fn dispatch_covers_every_method() {
        let mut samples: Vec<ResponseSample> = [("A", 0.4), ("A", 0.4), ("B", 0.3)]
            .iter()
            .map(|&(t, p)| ResponseSample::single_token(t, p))
            .collect();
        for s in samples.iter_mut() {
            s.verbalized_conf = Some(0.7);
            s.aux = Some(vec![Candidate {
                candidate: s.text.clone(),
                conf: 0.6,
            }]);
        }
        let b = SampleBatch::new("q", samples, 0)
            .unwrap()
            .with_probes(Probes {
                candidates: vec!["A".into(), "B".into()],
                p_true_verdicts: vec![true, false],
                p_true_prob: Some(0.8),
                p_true_cand_verdicts: vec![true],
                p_true_cand_prob: Some(0.6),
                self_ask: Some(0.9),
                self_ask_cand: Some(0.5),
            })
            .unwrap();
        let cs = cluster(&b, &RuleJudge, MassMode::Distinct).unwrap();
        for m in Method::ALL {
            let e = estimate(m, &b, &cs, &EstimatorConfig::default()).unwrap();
            assert!(e.raw.is_finite(), "{m}");
            assert!((0.0..=1.0).contains(&e.confidence()), "{m}");
        }
    }

    #[test]
    fn missing_inputs_are_reported_not_defaulted() {
        let b = batch(&[("A", 0.4)]);
        let cs = cluster(&b, &RuleJudge, MassMode::Distinct).unwrap();
        for m in [
            Method::Verb,
            Method::VerbTopk,
            Method::ConsistencyVerb,
            Method::ConsistencyVerbTopk,
            Method::PTrueConsis,
            Method::PTrueProb,
            Method::PTrueConsisCand,
            Method::PTrueProbCand,
            Method::SelfAsk,
            Method::SelfAskCand,
        ] {
            assert!(
                matches!(
                    estimate(m, &b, &cs, &EstimatorConfig::default()),
                    Err(EstimateError::Missing(_))
                ),
                "{m}"
            );
        }
    }

    #[test]
    fn logprob_free_batches_are_rejected_by_probability_methods() {
        let b = SampleBatch::new("q", vec![ResponseSample::new("A", vec![])], 0).unwrap();
        let cs = cluster(&b, &RuleJudge, MassMode::Distinct).unwrap();
        let cfg = EstimatorConfig::default();
        assert_eq!(
            estimate(Method::ProbEntropy, &b, &cs, &cfg),
            Err(EstimateError::LogprobsUnavailable)
        );
        assert_eq!(
            estimate(Method::Perplexity, &b, &cs, &cfg),
            Err(EstimateError::LogprobsUnavailable)
        );
        assert!(estimate(Method::Sca, &b, &cs, &cfg).is_err());
        assert!(estimate(Method::SemanticEntropy, &b, &cs, &cfg).is_err());
        // Frequency-based methods still work.
        assert_eq!(
            estimate(Method::Consistency, &b, &cs, &cfg).unwrap().raw,
            1.0
        );
        assert_eq!(estimate(Method::Sfca, &b, &cs, &cfg).unwrap().raw, 1.0);
    }

    #[test]
    fn candidates_by_mass() {
        let b = batch(&[("C", 0.1), ("A", 0.5), ("B", 0.3), ("A", 0.5), ("D", 0.05)]);
        let cs = cluster(&b, &RuleJudge, MassMode::Distinct).unwrap();
        assert_eq!(top_candidates(&cs, 3), vec!["A", "B", "C"]);
        assert_eq!(top_candidates(&cs, 10).len(), 4);
    }

    #[test]
    fn config_validation() {
        assert!(EstimatorConfig::with_tau(1.5).validate().is_err());
        let cfg = EstimatorConfig {
            k: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
