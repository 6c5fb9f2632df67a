//! A synthetic answer-distribution model.
//!
//! Each question gets a categorical distribution over answer strings. Samples
//! are i.i.d. draws whose single pseudo-token carries the log of the answer's
//! normalized weight, so every estimator's expectation has a closed form.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{Dataset, DatasetError, DatasetMeta, GENERATOR_VERSION};
use crate::model::{Domain, Question, ResponseSample, SampleBatch, ANSWER_COUNTS};
use crate::numeric::exact_sum;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("weight {0} must be finite and positive")]
    InvalidWeight(f64),
    #[error("coverage cap {cap} must lie in 1..={entries}")]
    InvalidCap { cap: usize, entries: usize },
    #[error("invalid simulator spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedAnswer {
    pub answer: String,
    pub weight: f64,
}

impl WeightedAnswer {
    pub fn new(answer: impl Into<String>, weight: f64) -> Self {
        WeightedAnswer {
            answer: answer.into(),
            weight,
        }
    }
}

/// Which sample stands in for the model's committed answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChosenPolicy {
    /// The highest-weight answer among the draws, first occurrence; mimics
    /// greedy decoding.
    #[default]
    MostProbable,
    /// The first draw.
    First,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticModel {
    knowledge: Vec<WeightedAnswer>,
    noise_answers: Vec<WeightedAnswer>,
    coverage_cap: usize,
    seed: u64,
    chosen: ChosenPolicy,
}

impl SyntheticModel {
    /// Only the first `coverage_cap` entries of knowledge followed by noise
    /// can ever be sampled.
    pub fn new(
        knowledge: Vec<WeightedAnswer>,
        noise_answers: Vec<WeightedAnswer>,
        coverage_cap: usize,
        seed: u64,
    ) -> Result<Self, SimError> {
        for a in knowledge.iter().chain(&noise_answers) {
            if !a.weight.is_finite() || a.weight <= 0.0 {
                return Err(SimError::InvalidWeight(a.weight));
            }
        }
        let entries = knowledge.len() + noise_answers.len();
        if coverage_cap == 0 || coverage_cap > entries {
            return Err(SimError::InvalidCap {
                cap: coverage_cap,
                entries,
            });
        }
        Ok(SyntheticModel {
            knowledge,
            noise_answers,
            coverage_cap,
            seed,
            chosen: ChosenPolicy::default(),
        })
    }

    /// `k` equally weighted answers and nothing else.
    pub fn uniform(answers: &[String], coverage_cap: usize, seed: u64) -> Result<Self, SimError> {
        let knowledge = answers
            .iter()
            .map(|a| WeightedAnswer::new(a.clone(), 1.0))
            .collect();
        SyntheticModel::new(knowledge, Vec::new(), coverage_cap, seed)
    }

    pub fn with_chosen(mut self, policy: ChosenPolicy) -> Self {
        self.chosen = policy;
        self
    }

    pub fn coverage_cap(&self) -> usize {
        self.coverage_cap
    }

    /// The reachable answers with weights normalized to sum to 1.
    pub fn distribution(&self) -> Vec<(String, f64)> {
        let reachable: Vec<&WeightedAnswer> = self
            .knowledge
            .iter()
            .chain(&self.noise_answers)
            .take(self.coverage_cap)
            .collect();
        let total = exact_sum(reachable.iter().map(|a| a.weight));
        reachable
            .into_iter()
            .map(|a| (a.answer.clone(), a.weight / total))
            .collect()
    }
}

/// Stream seed for one question, independent of every other question.
pub fn question_seed(seed: u64, question_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(question_id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Draws `n` responses (`n` is raised to 1 if zero).
pub fn synth_sample(model: &SyntheticModel, question: &Question, n: usize) -> SampleBatch {
    let dist = model.distribution();
    let index = WeightedIndex::new(dist.iter().map(|(_, w)| *w))
        .expect("weights validated at construction");
    let mut rng = ChaCha8Rng::seed_from_u64(question_seed(model.seed, question.id()));
    let draws: Vec<usize> = (0..n.max(1)).map(|_| index.sample(&mut rng)).collect();
    let chosen = match model.chosen {
        ChosenPolicy::First => 0,
        ChosenPolicy::MostProbable => {
            let mut best = 0;
            for (i, &d) in draws.iter().enumerate() {
                if dist[d].1 > dist[draws[best]].1 {
                    best = i;
                }
            }
            best
        }
    };
    let samples = draws
        .iter()
        .map(|&d| ResponseSample::single_token(dist[d].0.clone(), dist[d].1))
        .collect();
    SampleBatch::new(question.id(), samples, chosen).expect("synthetic batches are valid")
}

/// One kind of question behaviour within a cardinality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    /// Fraction of the cell's questions with this profile.
    pub share: f64,
    /// Total weight spread equally over the known correct answers.
    pub correct_mass: f64,
    /// How many of the correct answers the model knows; all when absent.
    #[serde(default)]
    pub known_answers: Option<usize>,
    /// Weight of a single dominant wrong answer.
    #[serde(default)]
    pub distractor_mass: f64,
    /// Weight spread equally over `tail_answers` further wrong answers.
    #[serde(default)]
    pub tail_mass: f64,
    #[serde(default)]
    pub tail_answers: usize,
}

impl Profile {
    fn model(
        &self,
        truth: &[String],
        seed: u64,
        chosen: ChosenPolicy,
    ) -> Result<SyntheticModel, SimError> {
        let known = self.known_answers.unwrap_or(truth.len()).min(truth.len());
        let mut knowledge = Vec::new();
        if known > 0 && self.correct_mass > 0.0 {
            let w = self.correct_mass / known as f64;
            knowledge.extend(
                truth[..known]
                    .iter()
                    .map(|a| WeightedAnswer::new(a.clone(), w)),
            );
        }
        let mut noise = Vec::new();
        if self.distractor_mass > 0.0 {
            noise.push(WeightedAnswer::new("other-0", self.distractor_mass));
        }
        if self.tail_mass > 0.0 && self.tail_answers > 0 {
            let w = self.tail_mass / self.tail_answers as f64;
            noise.extend(
                (1..=self.tail_answers).map(|j| WeightedAnswer::new(format!("other-{j}"), w)),
            );
        }
        let entries = knowledge.len() + noise.len();
        Ok(SyntheticModel::new(knowledge, noise, entries, seed)?.with_chosen(chosen))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Family {
    pub answer_counts: Vec<u32>,
    pub profiles: Vec<Profile>,
}

/// Benchmark layout, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    #[serde(default = "default_domains")]
    pub domains: Vec<Domain>,
    #[serde(default = "default_per_cell")]
    pub questions_per_cell: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub chosen: ChosenPolicy,
    #[serde(rename = "family")]
    pub families: Vec<Family>,
}

fn default_domains() -> Vec<Domain> {
    Domain::FACTUAL.to_vec()
}

fn default_per_cell() -> usize {
    100
}

fn default_samples() -> usize {
    10
}

impl Default for BenchmarkSpec {
    /// Half "knows" questions (0.9 correct mass) and half "doesn't know"
    /// questions (0.2 correct mass behind a 0.4 distractor) per cardinality.
    fn default() -> Self {
        BenchmarkSpec {
            domains: default_domains(),
            questions_per_cell: default_per_cell(),
            samples: default_samples(),
            seed: 0,
            chosen: ChosenPolicy::MostProbable,
            families: vec![Family {
                answer_counts: ANSWER_COUNTS.to_vec(),
                profiles: vec![
                    Profile {
                        share: 0.5,
                        correct_mass: 0.9,
                        known_answers: None,
                        distractor_mass: 0.0,
                        tail_mass: 0.1,
                        tail_answers: 10,
                    },
                    Profile {
                        share: 0.5,
                        correct_mass: 0.2,
                        known_answers: None,
                        distractor_mass: 0.4,
                        tail_mass: 0.4,
                        tail_answers: 40,
                    },
                ],
            }],
        }
    }
}

impl BenchmarkSpec {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let spec: BenchmarkSpec =
            toml::from_str(text).map_err(|e| SimError::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Spec(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.domains.is_empty() || self.questions_per_cell == 0 || self.samples == 0 {
            return Err(SimError::Spec(
                "domains, questions_per_cell and samples must be non-empty".into(),
            ));
        }
        let mut seen = Vec::new();
        for f in &self.families {
            if f.profiles.is_empty() {
                return Err(SimError::Spec("a family needs at least one profile".into()));
            }
            for &k in &f.answer_counts {
                if !ANSWER_COUNTS.contains(&k) || seen.contains(&k) {
                    return Err(SimError::Spec(format!(
                        "answer count {k} is invalid or repeated"
                    )));
                }
                seen.push(k);
            }
            let shares = exact_sum(f.profiles.iter().map(|p| p.share));
            if (shares - 1.0).abs() > 1e-9 || f.profiles.iter().any(|p| p.share < 0.0) {
                return Err(SimError::Spec(format!(
                    "profile shares sum to {shares}, not 1"
                )));
            }
            for p in &f.profiles {
                let masses = [p.correct_mass, p.distractor_mass, p.tail_mass];
                if masses.iter().any(|m| !m.is_finite() || *m < 0.0)
                    || masses.iter().all(|m| *m == 0.0)
                {
                    return Err(SimError::Spec(
                        "profile masses must be non-negative and not all zero".into(),
                    ));
                }
                if p.tail_mass > 0.0 && p.tail_answers == 0 {
                    return Err(SimError::Spec("tail_mass needs tail_answers > 0".into()));
                }
            }
        }
        if seen.is_empty() {
            return Err(SimError::Spec("no families".into()));
        }
        Ok(())
    }

    /// Profile for the `i`-th of `n` questions: profiles take contiguous
    /// blocks of the cell in order of their cumulative shares.
    fn profile_for<'a>(&self, family: &'a Family, i: usize, n: usize) -> &'a Profile {
        let pos = (i as f64 + 0.5) / n as f64;
        let mut acc = 0.0;
        for p in &family.profiles {
            acc += p.share;
            if pos < acc {
                return p;
            }
        }
        family.profiles.last().expect("validated non-empty")
    }
}

/// Builds the dataset and sample batches described by `spec`, in
/// (domain, answer count, index) order.
pub fn synth_benchmark(spec: &BenchmarkSpec) -> Result<(Dataset, Vec<SampleBatch>), SimError> {
    spec.validate()?;
    let mut plan = Vec::new();
    for &domain in &spec.domains {
        for family in &spec.families {
            for &k in &family.answer_counts {
                for i in 0..spec.questions_per_cell {
                    plan.push((domain, family, k, i));
                }
            }
        }
    }
    plan.sort_by_key(|&(d, _, k, i)| (d, k, i));
    let built: Vec<(Question, SampleBatch)> = plan
        .par_iter()
        .map(|&(domain, family, k, i)| {
            let id = format!("synth-{domain}-{k}-{i:04}");
            let truth: Vec<String> = (1..=k).map(|j| format!("answer-{j}")).collect();
            let q = Question::new(
                id,
                domain,
                format!("Synthetic {domain} question {i} with {k} correct answers."),
                truth,
            )
            .map_err(DatasetError::from)?;
            let profile = spec.profile_for(family, i, spec.questions_per_cell);
            let model = profile.model(q.ground_truth(), spec.seed, spec.chosen)?;
            let batch = synth_sample(&model, &q, spec.samples);
            Ok((q, batch))
        })
        .collect::<Result<_, SimError>>()?;
    let (questions, batches): (Vec<_>, Vec<_>) = built.into_iter().unzip();
    let ds = Dataset::new(
        DatasetMeta {
            name: "synthetic".into(),
            seed: spec.seed,
            generator_version: GENERATOR_VERSION.into(),
        },
        questions,
    )?;
    Ok((ds, batches))
}
