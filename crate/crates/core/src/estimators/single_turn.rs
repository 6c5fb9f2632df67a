use crate::clustering::{normalized_masses, ClusterError};
use crate::model::{Candidate, ClusterSet, ResponseSample, SampleBatch};

use super::EstimateError;

/// `-Σ p log p` over a sample's generated tokens.
fn token_entropy(sample: &ResponseSample) -> f64 {
    -sample
        .tokens
        .iter()
        .map(|t| {
            let p = t.logprob.exp();
            p * t.logprob
        })
        .sum::<f64>()
}

fn require_logprobs(batch: &SampleBatch) -> Result<(), EstimateError> {
    if batch.all_have_logprobs() {
        Ok(())
    } else {
        Err(EstimateError::LogprobsUnavailable)
    }
}

/// Mean over samples of the summed token entropy terms (an uncertainty).
///
/// Evaluated on the sampled tokens' own probabilities, since full-vocabulary
/// distributions are not part of the logged samples.
pub fn prob_entropy(batch: &SampleBatch) -> Result<f64, EstimateError> {
    require_logprobs(batch)?;
    let total: f64 = batch.samples().iter().map(token_entropy).sum();
    Ok(total / batch.len() as f64)
}

/// Like [`prob_entropy`] with each sample's entropy divided by its length.
pub fn norm_prob_entropy(batch: &SampleBatch) -> Result<f64, EstimateError> {
    require_logprobs(batch)?;
    let total: f64 = batch
        .samples()
        .iter()
        .map(|s| token_entropy(s) / s.tokens.len() as f64)
        .sum();
    Ok(total / batch.len() as f64)
}

/// Shannon entropy of the normalized cluster-mass distribution.
pub fn semantic_entropy(clusters: &ClusterSet) -> Result<f64, EstimateError> {
    let probs = normalized_masses(clusters).map_err(|e| match e {
        ClusterError::NoProbabilisticMembers => EstimateError::LogprobsUnavailable,
        other => EstimateError::Cluster(other),
    })?;
    Ok(-probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>())
}

/// Mean negative log-likelihood of the sample's tokens.
pub fn perplexity(sample: &ResponseSample) -> Result<f64, EstimateError> {
    if !sample.has_logprobs() {
        return Err(EstimateError::LogprobsUnavailable);
    }
    let nll: f64 = sample.tokens.iter().map(|t| -t.logprob).sum();
    Ok(nll / sample.tokens.len() as f64)
}

/// The largest cluster; ties go to the lexicographically smallest representative.
pub fn majority_cluster(clusters: &ClusterSet) -> usize {
    let cs = clusters.clusters();
    let mut best = 0;
    for (i, c) in cs.iter().enumerate().skip(1) {
        let b = &cs[best];
        if c.size() > b.size() || (c.size() == b.size() && c.representative < b.representative) {
            best = i;
        }
    }
    best
}

/// Fraction of samples in the majority cluster.
pub fn consistency(clusters: &ClusterSet) -> f64 {
    let majority = &clusters.clusters()[majority_cluster(clusters)];
    majority.size() as f64 / clusters.total_samples() as f64
}

/// Confidence-weighted agreement with the majority answer:
/// `Σ 1{i ∈ majority}·Cᵢ / Σ Cᵢ` over samples whose `Cᵢ` is known.
pub fn weighted_consistency(
    clusters: &ClusterSet,
    confs: &[Option<f64>],
) -> Result<f64, EstimateError> {
    let majority = &clusters.clusters()[majority_cluster(clusters)];
    let mut agree = 0.0;
    let mut total = 0.0;
    for (i, c) in confs.iter().enumerate() {
        let Some(c) = *c else { continue };
        total += c;
        if majority.members.binary_search(&i).is_ok() {
            agree += c;
        }
    }
    if total <= 0.0 {
        return Err(EstimateError::Missing("verbalized confidences"));
    }
    Ok(agree / total)
}

pub fn verb(sample: &ResponseSample) -> Result<f64, EstimateError> {
    sample
        .verbalized_conf
        .ok_or(EstimateError::Missing("verbalized confidence"))
}

/// Highest confidence among candidates with a non-empty answer.
pub fn verb_topk(candidates: &[Candidate]) -> Result<f64, EstimateError> {
    candidates
        .iter()
        .filter(|c| !c.candidate.trim().is_empty())
        .map(|c| c.conf)
        .max_by(f64::total_cmp)
        .ok_or(EstimateError::Missing("valid top-k candidate"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{cluster, MassMode};
    use crate::judge::RuleJudge;
    use crate::model::TokenProb;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = 1e-9;

    fn sample_with(probs: &[f64]) -> ResponseSample {
        ResponseSample::new(
            "x",
            probs
                .iter()
                .map(|&p| TokenProb {
                    token: "t".into(),
                    logprob: p.ln(),
                })
                .collect(),
        )
    }

    fn batch_of(samples: Vec<ResponseSample>) -> SampleBatch {
        SampleBatch::new("q", samples, 0).unwrap()
    }

    fn texts(ts: &[&str]) -> ClusterSet {
        let b = batch_of(
            ts.iter()
                .map(|t| ResponseSample::single_token(*t, 0.1))
                .collect(),
        );
        cluster(&b, &RuleJudge, MassMode::Distinct).unwrap()
    }

    fn random_batch(rng: &mut ChaCha8Rng) -> SampleBatch {
        let m = rng.random_range(1..8);
        batch_of(
            (0..m)
                .map(|_| {
                    let len = rng.random_range(1..12);
                    let probs: Vec<f64> = (0..len).map(|_| rng.random_range(0.001..=1.0)).collect();
                    sample_with(&probs)
                })
                .collect(),
        )
    }

    #[test]
    fn entropy_examples() {
        let b = batch_of(vec![sample_with(&[0.5, 0.5])]);
        assert!((prob_entropy(&b).unwrap() - std::f64::consts::LN_2).abs() < TOL);
        assert!((norm_prob_entropy(&b).unwrap() - std::f64::consts::LN_2 / 2.0).abs() < TOL);
        let certain = batch_of(vec![sample_with(&[1.0, 1.0, 1.0]), sample_with(&[1.0])]);
        assert_eq!(prob_entropy(&certain).unwrap(), 0.0);
        assert_eq!(norm_prob_entropy(&certain).unwrap(), 0.0);
    }

    /// Double sum written out with explicit indices.
    fn entropy_oracle(batch: &SampleBatch, normalize: bool) -> f64 {
        let mut outer = 0.0;
        for j in 0..batch.len() {
            let toks = &batch.samples()[j].tokens;
            let mut inner = 0.0;
            for t in toks {
                let p = t.logprob.exp();
                inner += p * p.ln();
            }
            if normalize {
                inner /= toks.len() as f64;
            }
            outer += inner;
        }
        -outer / batch.len() as f64
    }

    #[test]
    fn entropy_matches_resummation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let b = random_batch(&mut rng);
            assert!((prob_entropy(&b).unwrap() - entropy_oracle(&b, false)).abs() <= 1e-12);
            assert!((norm_prob_entropy(&b).unwrap() - entropy_oracle(&b, true)).abs() <= 1e-12);
        }
    }

    #[test]
    fn entropy_is_length_times_normalized_for_one_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let len = rng.random_range(1..20);
            let probs: Vec<f64> = (0..len).map(|_| rng.random_range(0.01..=1.0)).collect();
            let b = batch_of(vec![sample_with(&probs)]);
            let pe = prob_entropy(&b).unwrap();
            let npe = norm_prob_entropy(&b).unwrap();
            assert!((pe - len as f64 * npe).abs() < 1e-12);
        }
    }

    #[test]
    fn semantic_entropy_examples() {
        let b = batch_of(vec![
            ResponseSample::single_token("A", 0.3),
            ResponseSample::single_token("B", 0.3),
        ]);
        let cs = cluster(&b, &RuleJudge, MassMode::Distinct).unwrap();
        assert!((semantic_entropy(&cs).unwrap() - std::f64::consts::LN_2).abs() < TOL);

        let b = batch_of(vec![ResponseSample::single_token("A", 0.3)]);
        let cs = cluster(&b, &RuleJudge, MassMode::Distinct).unwrap();
        assert_eq!(semantic_entropy(&cs).unwrap(), 0.0);

        let b = batch_of(vec![
            ResponseSample::single_token("A", 0.5),
            ResponseSample::single_token("B", 0.25),
            ResponseSample::single_token("C", 0.25),
        ]);
        let cs = cluster(&b, &RuleJudge, MassMode::Distinct).unwrap();
        let want = -(0.5 * 0.5f64.ln() + 2.0 * 0.25 * 0.25f64.ln());
        assert!((semantic_entropy(&cs).unwrap() - want).abs() < TOL);
        assert!((semantic_entropy(&cs).unwrap() - 1.0397).abs() < 1e-4);
    }

    #[test]
    fn semantic_entropy_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let n = rng.random_range(1..6);
            let probs: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.2)).collect();
            let scale = rng.random_range(0.5..4.0);
            let make = |s: f64| {
                let b = batch_of(
                    probs
                        .iter()
                        .enumerate()
                        .map(|(i, p)| ResponseSample::single_token(format!("t{i}"), p * s))
                        .collect(),
                );
                semantic_entropy(&cluster(&b, &RuleJudge, MassMode::Distinct).unwrap()).unwrap()
            };
            assert!((make(1.0) - make(scale)).abs() < 1e-12);
        }
    }

    #[test]
    fn perplexity_examples() {
        assert!(
            (perplexity(&sample_with(&[0.5, 0.5])).unwrap() - std::f64::consts::LN_2).abs() < TOL
        );
        assert_eq!(perplexity(&sample_with(&[1.0, 1.0])).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let len = rng.random_range(1..15);
            let probs: Vec<f64> = (0..len).map(|_| rng.random_range(0.001..=1.0)).collect();
            let oracle = -probs.iter().map(|p| p.ln()).sum::<f64>() / len as f64;
            assert!((perplexity(&sample_with(&probs)).unwrap() - oracle).abs() <= 1e-12);
        }
    }

    #[test]
    fn consistency_examples() {
        let cs = texts(&["A", "A", "A", "A", "A", "A", "B", "B", "C", "D"]);
        assert!((consistency(&cs) - 0.6).abs() < TOL);
        assert_eq!(consistency(&texts(&["A"; 5])), 1.0);
        let cs = texts(&["e", "d", "b", "c", "a"]);
        assert!((consistency(&cs) - 0.2).abs() < TOL);
        assert_eq!(cs.clusters()[majority_cluster(&cs)].representative, "a");
    }

    #[test]
    fn weighted_consistency_examples() {
        let cs = texts(&["A", "A", "B"]);
        let got = weighted_consistency(&cs, &[Some(0.9), Some(0.8), Some(0.1)]).unwrap();
        assert!((got - 1.7 / 1.8).abs() < TOL);
        assert!((got - 0.9444).abs() < 1e-4);
        let cs = texts(&["A", "A"]);
        assert_eq!(
            weighted_consistency(&cs, &[Some(0.3), Some(0.6)]).unwrap(),
            1.0
        );
        assert!(weighted_consistency(&cs, &[None, None]).is_err());
    }

    #[test]
    fn weighted_consistency_matches_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let forms = ["A", "B", "C"];
        for _ in 0..200 {
            let m = rng.random_range(1..12);
            let ts: Vec<&str> = (0..m).map(|_| forms[rng.random_range(0..3)]).collect();
            let confs: Vec<Option<f64>> =
                (0..m).map(|_| Some(rng.random_range(0.01..=1.0))).collect();
            let cs = texts(&ts);
            // Majority answer by direct counting with alphabetical tie-break.
            let mut best = ("", 0usize);
            for f in forms {
                let count = ts.iter().filter(|t| **t == f).count();
                if count > best.1 {
                    best = (f, count);
                }
            }
            let num: f64 = ts
                .iter()
                .zip(&confs)
                .filter(|(t, _)| **t == best.0)
                .map(|(_, c)| c.unwrap())
                .sum();
            let den: f64 = confs.iter().map(|c| c.unwrap()).sum();
            let got = weighted_consistency(&cs, &confs).unwrap();
            assert!((got - num / den).abs() <= 1e-12);
            assert!((0.0..=1.0).contains(&got));
            assert!((consistency(&cs) - best.1 as f64 / m as f64).abs() <= 1e-12);
        }
    }

    #[test]
    fn verb_examples() {
        let mut s = ResponseSample::single_token("Paris", 0.9);
        assert!(verb(&s).is_err());
        s.verbalized_conf = Some(0.85);
        assert_eq!(verb(&s).unwrap(), 0.85);
    }

    #[test]
    fn verb_topk_examples() {
        let c = |a: &str, conf: f64| Candidate {
            candidate: a.into(),
            conf,
        };
        assert_eq!(verb_topk(&[c("A", 0.6), c("B", 0.3)]).unwrap(), 0.6);
        assert_eq!(verb_topk(&[c("", 0.9), c("B", 0.3)]).unwrap(), 0.3);
        assert_eq!(
            verb_topk(&[c("  ", 0.9)]),
            Err(EstimateError::Missing("valid top-k candidate"))
        );
        assert!(verb_topk(&[]).is_err());
    }
}
