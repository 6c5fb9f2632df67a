//! Semantic clustering of sampled responses and per-cluster probability mass.

use std::collections::HashSet;

use thiserror::Error;

use crate::error::ModelError;
use crate::judge::{Judge, JudgeError};
pub use crate::model::MassMode;
use crate::model::{sequence_probability, Cluster, ClusterSet, MassTerm, SampleBatch};
use crate::numeric::exact_sum;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusterError {
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no cluster member carries logprobs")]
    NoProbabilisticMembers,
    #[error("total cluster mass is zero")]
    ZeroMass,
}

/// Greedy first-fit clustering in sample order.
///
/// Each sample joins the first cluster whose representative the judge finds
/// equivalent, else founds a new one. Identical texts skip the judge.
pub fn cluster<J: Judge + ?Sized>(
    batch: &SampleBatch,
    judge: &J,
    mode: MassMode,
) -> Result<ClusterSet, ClusterError> {
    let samples = batch.samples();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, sample) in samples.iter().enumerate() {
        let mut home = None;
        for (g, members) in groups.iter().enumerate() {
            let rep = &samples[members[0]].text;
            if *rep == sample.text
                || judge
                    .judge_equivalent(&sample.text, rep)?
                    .equivalent_or_correct
            {
                home = Some(g);
                break;
            }
        }
        match home {
            Some(g) => groups[g].push(i),
            None => groups.push(vec![i]),
        }
    }
    Ok(from_partition(batch, groups, mode)?)
}

/// Builds a cluster set from an explicit partition of sample indices.
///
/// The representative of each group is the text of its smallest index.
pub fn from_partition(
    batch: &SampleBatch,
    groups: Vec<Vec<usize>>,
    mode: MassMode,
) -> Result<ClusterSet, ModelError> {
    let n = batch.len();
    let mut clusters = Vec::with_capacity(groups.len());
    for mut members in groups {
        members.sort_unstable();
        members.dedup();
        if members.iter().any(|&i| i >= n) {
            return Err(ModelError::NotAPartition("index out of range".into()));
        }
        let representative = members
            .first()
            .map(|&i| batch.samples()[i].text.clone())
            .unwrap_or_default();
        let terms = mass_terms(&members, batch, mode);
        let missing_logprobs = members.iter().any(|&i| !batch.samples()[i].has_logprobs());
        let mass = (!terms.is_empty()).then(|| exact_sum(terms.iter().map(|t| t.prob)));
        clusters.push(Cluster {
            representative,
            members,
            mass,
            mass_terms: terms,
            missing_logprobs,
        });
    }
    ClusterSet::new(clusters, n, mode)
}

fn mass_terms(members: &[usize], batch: &SampleBatch, mode: MassMode) -> Vec<MassTerm> {
    let mut seen: HashSet<&str> = HashSet::new();
    let mut terms = Vec::new();
    for &i in members {
        let s = &batch.samples()[i];
        let Ok(prob) = sequence_probability(s) else {
            continue;
        };
        if mode == MassMode::Distinct && !seen.insert(s.text.as_str()) {
            continue;
        }
        terms.push(MassTerm {
            sample: i,
            text: s.text.clone(),
            prob,
        });
    }
    terms
}

/// Probability mass of the samples at `members`: the sum of sequence
/// probabilities, counting each distinct text once under [`MassMode::Distinct`].
/// Members without logprobs are skipped.
pub fn cluster_mass(
    members: &[usize],
    batch: &SampleBatch,
    mode: MassMode,
) -> Result<f64, ClusterError> {
    let terms = mass_terms(members, batch, mode);
    if terms.is_empty() {
        return Err(ClusterError::NoProbabilisticMembers);
    }
    Ok(exact_sum(terms.iter().map(|t| t.prob)))
}

/// Cluster masses rescaled to sum to one.
pub fn normalized_masses(cs: &ClusterSet) -> Result<Vec<f64>, ClusterError> {
    let masses = cs
        .masses()
        .map_err(|_| ClusterError::NoProbabilisticMembers)?;
    let total = exact_sum(masses.iter().copied());
    if total <= 0.0 {
        return Err(ClusterError::ZeroMass);
    }
    Ok(masses.into_iter().map(|m| m / total).collect())
}
