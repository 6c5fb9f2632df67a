//! Calibration metrics, mixed-pool evaluation and threshold tuning.

mod report;

pub use report::{evaluate_pool, to_csv, to_markdown, MetricRow, MACRO};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::model::{ClusterSet, ANSWER_COUNTS};
use crate::numeric::{average_ranks, doubled_ranks, exact_sum};

/// Bin count used for ECE unless configured otherwise.
pub const DEFAULT_ECE_BINS: usize = 10;

/// Mass threshold for knowledge coverage.
pub const COVERAGE_TAU: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("AUROC needs at least one correct and one incorrect record")]
    DegenerateLabels,
    #[error("no records")]
    Empty,
    #[error("scores and labels differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("rank correlation is undefined for a constant input")]
    ConstantInput,
    #[error("invalid pool `{0}`")]
    InvalidPool(String),
    #[error("threshold grid is empty")]
    EmptyGrid,
    #[error("bin count must be positive")]
    NoBins,
    #[error("clusters carry no mass")]
    NoMass,
}

fn check_len(a: usize, b: usize) -> Result<(), MetricsError> {
    if a != b {
        return Err(MetricsError::LengthMismatch(a, b));
    }
    if a == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

/// Area under the ROC curve as the Mann–Whitney statistic, ties credited one
/// half. Higher scores should mean "more likely correct".
///
/// Computed from integer rank sums, so the result is the exact ratio
/// `(wins + ties/2) / (positives · negatives)` rounded once.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    check_len(scores.len(), labels.len())?;
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::DegenerateLabels);
    }
    let ranks = doubled_ranks(scores);
    let rank_sum: u64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(&r, _)| r)
        .sum();
    let twice_u = rank_sum - pos * (pos + 1);
    Ok(twice_u as f64 / (2 * pos * neg) as f64)
}

fn bin_of(c: f64, bins: usize) -> usize {
    let edge = |b: usize| b as f64 / bins as f64;
    let mut b = ((c * bins as f64).ceil() as usize)
        .saturating_sub(1)
        .min(bins - 1);
    while b > 0 && c <= edge(b) {
        b -= 1;
    }
    while b + 1 < bins && c > edge(b + 1) {
        b += 1;
    }
    b
}

/// Expected calibration error over `bins` equal-width bins on `[0, 1]`.
///
/// Bins are right-closed: bin `b` holds `(b/B, (b+1)/B]`, and the first bin
/// also holds 0. Confidences are clamped to `[0, 1]` first.
pub fn ece(confidences: &[f64], labels: &[bool], bins: usize) -> Result<f64, MetricsError> {
    check_len(confidences.len(), labels.len())?;
    if bins == 0 {
        return Err(MetricsError::NoBins);
    }
    let mut conf: Vec<Vec<f64>> = vec![Vec::new(); bins];
    let mut hits = vec![0usize; bins];
    for (&c, &l) in confidences.iter().zip(labels) {
        let c = c.clamp(0.0, 1.0);
        let b = bin_of(c, bins);
        conf[b].push(c);
        hits[b] += l as usize;
    }
    let n = confidences.len() as f64;
    let terms = conf
        .iter()
        .zip(&hits)
        .filter(|(c, _)| !c.is_empty())
        .map(|(c, &h)| {
            let nb = c.len() as f64;
            let gap = (h as f64 / nb - exact_sum(c.iter().copied()) / nb).abs();
            nb / n * gap
        });
    Ok(exact_sum(terms))
}

pub fn accuracy(labels: &[bool]) -> Result<f64, MetricsError> {
    if labels.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(labels.iter().filter(|&&l| l).count() as f64 / labels.len() as f64)
}

pub fn mean_confidence(confidences: &[f64]) -> Result<f64, MetricsError> {
    if confidences.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(exact_sum(confidences.iter().map(|c| c.clamp(0.0, 1.0))) / confidences.len() as f64)
}

/// Number of clusters whose mass exceeds `tau`.
pub fn knowledge_coverage(clusters: &ClusterSet, tau: f64) -> Result<usize, MetricsError> {
    let masses = clusters.masses().map_err(|_| MetricsError::NoMass)?;
    Ok(masses.into_iter().filter(|&m| m > tau).count())
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    check_len(x.len(), y.len())?;
    pearson(&average_ranks(x), &average_ranks(y))
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    let n = x.len() as f64;
    let mx = exact_sum(x.iter().copied()) / n;
    let my = exact_sum(y.iter().copied()) / n;
    let sxy = exact_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let sxx = exact_sum(x.iter().map(|a| (a - mx) * (a - mx)));
    let syy = exact_sum(y.iter().map(|b| (b - my) * (b - my)));
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::ConstantInput);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// An ascending, non-empty subset of the answer counts.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PoolSpec {
    answer_counts: Vec<u32>,
}

impl PoolSpec {
    pub fn new(answer_counts: Vec<u32>) -> Result<Self, MetricsError> {
        let label = format!("{answer_counts:?}");
        let ascending = answer_counts.windows(2).all(|w| w[0] < w[1]);
        if answer_counts.is_empty()
            || !ascending
            || !answer_counts.iter().all(|k| ANSWER_COUNTS.contains(k))
        {
            return Err(MetricsError::InvalidPool(label));
        }
        Ok(PoolSpec { answer_counts })
    }

    /// The four nested pools `[1]`, `[1,2]`, `[1,2,4]`, `[1,2,4,6]`.
    pub fn nested() -> Vec<PoolSpec> {
        (1..=ANSWER_COUNTS.len())
            .map(|i| PoolSpec {
                answer_counts: ANSWER_COUNTS[..i].to_vec(),
            })
            .collect()
    }

    pub fn answer_counts(&self) -> &[u32] {
        &self.answer_counts
    }

    pub fn contains(&self, k: u32) -> bool {
        self.answer_counts.contains(&k)
    }

    /// Parses `"1;1,2;1,2,4"` into three pools.
    pub fn parse_list(s: &str) -> Result<Vec<PoolSpec>, MetricsError> {
        s.split(';')
            .filter(|p| !p.trim().is_empty())
            .map(str::parse)
            .collect()
    }
}

impl FromStr for PoolSpec {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let counts = s
            .trim()
            .trim_start_matches('[')
            .trim_end_matches(']')
            .split(',')
            .map(|k| k.trim().parse::<u32>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| MetricsError::InvalidPool(s.to_string()))?;
        PoolSpec::new(counts)
    }
}

impl fmt::Display for PoolSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.answer_counts.iter().map(u32::to_string).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// The default tuning grid `{0, 0.05, ..., 1.0}`.
pub fn default_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

/// Picks the grid value with the highest objective; ties go to the smaller
/// threshold and thresholds whose objective is undefined are skipped.
pub fn argmax_threshold<F>(grid: &[f64], mut objective: F) -> Result<(f64, f64), MetricsError>
where
    F: FnMut(f64) -> Option<f64>,
{
    if grid.is_empty() {
        return Err(MetricsError::EmptyGrid);
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best: Option<(f64, f64)> = None;
    for tau in sorted {
        if let Some(v) = objective(tau) {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((tau, v));
            }
        }
    }
    best.ok_or(MetricsError::DegenerateLabels)
}
