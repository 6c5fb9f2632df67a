//! Threshold-filtered aggregation of cluster confidence.
//!
//! All three aggregators keep the clusters whose score exceeds `tau` and sum
//! those scores. They differ only in the per-cluster score:
//!
//! | method | cluster score                          |
//! |--------|----------------------------------------|
//! | SCA    | summed sequence probability (mass)     |
//! | SNCA   | mass divided by total mass             |
//! | SFCA   | cluster size divided by sample count   |
//!
//! Sums are correctly rounded, so SCA at `tau = 0` depends only on the set of
//! distinct sampled sequences and SNCA/SFCA at `tau = 0` are exactly 1.

use std::collections::HashSet;

use crate::clustering::ClusterError;
use crate::model::{ClusterSet, MassMode, MassTerm};
use crate::numeric::exact_sum;

use super::EstimateError;

/// Summed mass of the clusters whose mass exceeds `tau`.
///
/// Under distinct-text mass, a text present in several kept clusters is still
/// counted once. The result may exceed 1; clamp only for reporting.
pub fn sca(clusters: &ClusterSet, tau: f64) -> Result<f64, EstimateError> {
    let masses = clusters
        .masses()
        .map_err(|_| ClusterError::NoProbabilisticMembers)?;
    let mut kept: Vec<&MassTerm> = clusters
        .clusters()
        .iter()
        .zip(&masses)
        .filter(|(_, &m)| m > tau)
        .flat_map(|(c, _)| c.mass_terms.iter())
        .collect();
    if clusters.mass_mode() == MassMode::Distinct {
        kept.sort_by_key(|t| t.sample);
        let mut seen = HashSet::new();
        kept.retain(|t| seen.insert(t.text.as_str()));
    }
    Ok(exact_sum(kept.into_iter().map(|t| t.prob)))
}

/// Summed normalized mass of the clusters whose normalized mass exceeds `tau`.
pub fn snca(clusters: &ClusterSet, tau: f64) -> Result<f64, EstimateError> {
    let masses = clusters
        .masses()
        .map_err(|_| ClusterError::NoProbabilisticMembers)?;
    let total = exact_sum(masses.iter().copied());
    if total <= 0.0 {
        return Err(ClusterError::ZeroMass.into());
    }
    let kept = exact_sum(masses.iter().copied().filter(|m| m / total > tau));
    Ok(kept / total)
}

/// Summed sample share of the clusters whose share exceeds `tau`.
pub fn sfca(clusters: &ClusterSet, tau: f64) -> f64 {
    let n = clusters.total_samples();
    let kept: usize = clusters
        .clusters()
        .iter()
        .map(|c| c.size())
        .filter(|&size| size as f64 / n as f64 > tau)
        .sum();
    kept as f64 / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{cluster, from_partition};
    use crate::judge::RuleJudge;
    use crate::model::{ResponseSample, SampleBatch};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn clusters(items: &[(&str, f64)]) -> ClusterSet {
        let b = SampleBatch::new(
            "q",
            items
                .iter()
                .map(|&(t, p)| ResponseSample::single_token(t, p))
                .collect(),
            0,
        )
        .unwrap();
        cluster(&b, &RuleJudge, MassMode::Distinct).unwrap()
    }

    #[test]
    fn sca_examples() {
        let cs = clusters(&[("A", 0.4), ("B", 0.3), ("C", 0.05)]);
        assert!((sca(&cs, 0.1).unwrap() - 0.7).abs() < 1e-9);
        assert!((sca(&cs, 0.0).unwrap() - 0.75).abs() < 1e-9);
        assert_eq!(sca(&cs, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn sca_dedups_repeated_sequences() {
        let cs = clusters(&[
            ("Paris", 0.4),
            ("Paris", 0.4),
            ("Paris", 0.4),
            ("Lyon", 0.2),
        ]);
        assert!((sca(&cs, 0.0).unwrap() - 0.6).abs() < 1e-9);
        let b =
            SampleBatch::new("q", vec![ResponseSample::single_token("Paris", 0.4); 3], 0).unwrap();
        let multi = cluster(&b, &RuleJudge, MassMode::Multiplicity).unwrap();
        assert!((sca(&multi, 0.0).unwrap() - 1.2).abs() < 1e-9);
    }

    #[test]
    fn snca_examples() {
        let cs = clusters(&[("A", 0.4), ("B", 0.1)]);
        assert!((snca(&cs, 0.5).unwrap() - 0.8).abs() < 1e-9);
        assert_eq!(snca(&cs, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn sfca_examples() {
        let mut items = vec![("A", 0.1); 6];
        items.extend([("B", 0.1); 3]);
        items.push(("C", 0.1));
        let cs = clusters(&items);
        assert!((sfca(&cs, 0.25) - 0.9).abs() < 1e-9);
        assert_eq!(sfca(&cs, 0.0), 1.0);
    }

    fn random_clusters(rng: &mut ChaCha8Rng) -> ClusterSet {
        let n = rng.random_range(1..15);
        let forms = rng.random_range(1..8);
        let probs: Vec<f64> = (0..forms).map(|_| rng.random_range(1e-4..0.6)).collect();
        let items: Vec<(String, f64)> = (0..n)
            .map(|_| {
                let k = rng.random_range(0..forms);
                (format!("a{k}"), probs[k])
            })
            .collect();
        let refs: Vec<(&str, f64)> = items.iter().map(|(t, p)| (t.as_str(), *p)).collect();
        clusters(&refs)
    }

    #[test]
    fn normalized_aggregators_are_exactly_one_without_filtering() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..500 {
            let cs = random_clusters(&mut rng);
            assert_eq!(snca(&cs, 0.0).unwrap(), 1.0);
            assert_eq!(sfca(&cs, 0.0), 1.0);
        }
    }

    #[test]
    fn aggregators_match_formula_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..300 {
            let cs = random_clusters(&mut rng);
            let tau = rng.random_range(0.0..0.5);
            let masses: Vec<f64> = cs.masses().unwrap();
            let total: f64 = masses.iter().sum();
            let sca_want: f64 = masses.iter().filter(|&&m| m > tau).sum();
            let snca_want: f64 = masses.iter().map(|m| m / total).filter(|&p| p > tau).sum();
            let n = cs.total_samples() as f64;
            let sfca_want: f64 = cs
                .clusters()
                .iter()
                .map(|c| c.size() as f64 / n)
                .filter(|&p| p > tau)
                .sum();
            assert!((sca(&cs, tau).unwrap() - sca_want).abs() <= 1e-12);
            assert!((snca(&cs, tau).unwrap() - snca_want).abs() <= 1e-12);
            assert!((sfca(&cs, tau) - sfca_want).abs() <= 1e-12);
            let m = cs.total_samples();
            let j = (sfca(&cs, tau) * m as f64).round();
            assert_eq!(j / m as f64, sfca(&cs, tau));
        }
    }

    #[test]
    fn sca_without_filter_ignores_the_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..200 {
            let n = rng.random_range(1..12);
            let samples: Vec<ResponseSample> = (0..n)
                .map(|_| {
                    let k = rng.random_range(0..5);
                    ResponseSample::single_token(format!("t{k}"), 0.05 + 0.1 * k as f64)
                })
                .collect();
            let b = SampleBatch::new("q", samples, 0).unwrap();
            let base = sca(&cluster(&b, &RuleJudge, MassMode::Distinct).unwrap(), 0.0).unwrap();
            let groups = rng.random_range(1..=n);
            let mut parts = vec![Vec::new(); groups];
            for i in 0..n {
                parts[rng.random_range(0..groups)].push(i);
            }
            parts.retain(|p| !p.is_empty());
            let cs = from_partition(&b, parts, MassMode::Distinct).unwrap();
            assert_eq!(sca(&cs, 0.0).unwrap(), base);
        }
    }

    #[test]
    fn sca_is_monotone_in_a_kept_cluster_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for _ in 0..200 {
            let tau = rng.random_range(0.0..0.3);
            let others: Vec<f64> = (0..3).map(|_| rng.random_range(0.01..0.5)).collect();
            let low = rng.random_range(tau + 1e-6..0.9);
            let high = rng.random_range(low..1.0);
            let make = |m: f64| {
                let mut items = vec![("target".to_string(), m)];
                items.extend(
                    others
                        .iter()
                        .enumerate()
                        .map(|(i, &p)| (format!("o{i}"), p)),
                );
                let refs: Vec<(&str, f64)> = items.iter().map(|(t, p)| (t.as_str(), *p)).collect();
                sca(&clusters(&refs), tau).unwrap()
            };
            assert!(make(high) >= make(low));
        }
    }
}
