//! Domain types shared by every stage of the pipeline.
//!
//! Everything here is an immutable value after construction. Constructors
//! validate the invariants that the rest of the crate relies on, so code
//! downstream of a `Question` or `SampleBatch` never re-checks them.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::numeric::exact_sum;

/// Answer cardinalities used by the benchmark layout.
pub const ANSWER_COUNTS: [u32; 4] = [1, 2, 4, 6];

/// Default number of sampled responses per question.
pub const DEFAULT_SAMPLE_COUNT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Award,
    Office,
    Region,
    Math,
    River,
    Language,
    Synthetic,
}

impl Domain {
    pub const ALL: [Domain; 7] = [
        Domain::Award,
        Domain::Office,
        Domain::Region,
        Domain::Math,
        Domain::River,
        Domain::Language,
        Domain::Synthetic,
    ];

    /// The six factual domains of the benchmark layout.
    pub const FACTUAL: [Domain; 6] = [
        Domain::Award,
        Domain::Office,
        Domain::Region,
        Domain::Math,
        Domain::River,
        Domain::Language,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Award => "award",
            Domain::Office => "office",
            Domain::Region => "region",
            Domain::Math => "math",
            Domain::River => "river",
            Domain::Language => "language",
            Domain::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Domain::ALL
            .into_iter()
            .find(|d| d.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| ModelError::UnknownDomain(s.to_string()))
    }
}

/// Canonical form used for exact-match equivalence and deduplication:
/// trimmed, case-folded, terminal punctuation stripped.
pub fn canonicalize(text: &str) -> String {
    let folded = text.trim().to_lowercase();
    folded
        .trim_end_matches(|c: char| {
            c.is_whitespace() || matches!(c, '.' | ',' | '!' | '?' | ';' | ':')
        })
        .trim()
        .to_string()
}

/// A prompt with its ground-truth answer set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawQuestion", into = "RawQuestion")]
pub struct Question {
    id: String,
    domain: Domain,
    text: String,
    ground_truth: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct RawQuestion {
    id: String,
    domain: Domain,
    text: String,
    answer_count: u32,
    ground_truth: Vec<String>,
}

impl TryFrom<RawQuestion> for Question {
    type Error = ModelError;

    fn try_from(raw: RawQuestion) -> Result<Self, Self::Error> {
        let q = Question::new(raw.id, raw.domain, raw.text, raw.ground_truth)?;
        if q.answer_count() != raw.answer_count {
            return Err(ModelError::AnswerCountMismatch {
                declared: raw.answer_count,
                actual: q.ground_truth.len(),
            });
        }
        Ok(q)
    }
}

impl From<Question> for RawQuestion {
    fn from(q: Question) -> Self {
        RawQuestion {
            answer_count: q.answer_count(),
            id: q.id,
            domain: q.domain,
            text: q.text,
            ground_truth: q.ground_truth,
        }
    }
}

impl Question {
    /// Builds a question; the answer count is the size of `ground_truth` and
    /// must be one of 1, 2, 4 or 6.
    pub fn new(
        id: impl Into<String>,
        domain: Domain,
        text: impl Into<String>,
        ground_truth: Vec<String>,
    ) -> Result<Self, ModelError> {
        let id = id.into();
        if id.is_empty() {
            return Err(ModelError::EmptyId);
        }
        if ground_truth.is_empty() {
            return Err(ModelError::EmptyGroundTruth(id));
        }
        let distinct: BTreeSet<String> = ground_truth.iter().map(|a| canonicalize(a)).collect();
        if distinct.len() != ground_truth.len() {
            return Err(ModelError::DuplicateGroundTruth(id));
        }
        if !ANSWER_COUNTS.contains(&(ground_truth.len() as u32)) {
            return Err(ModelError::InvalidAnswerCount(ground_truth.len()));
        }
        Ok(Question {
            id,
            domain,
            text: text.into(),
            ground_truth,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn answer_count(&self) -> u32 {
        self.ground_truth.len() as u32
    }

    pub fn ground_truth(&self) -> &[String] {
        &self.ground_truth
    }
}

/// One generated token and the natural-log probability the model gave it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenProb {
    pub token: String,
    pub logprob: f64,
}

impl TokenProb {
    pub fn new(token: impl Into<String>, logprob: f64) -> Result<Self, ModelError> {
        check_logprob(logprob)?;
        Ok(TokenProb {
            token: token.into(),
            logprob,
        })
    }

    pub fn prob(&self) -> f64 {
        self.logprob.exp()
    }
}

fn check_logprob(logprob: f64) -> Result<(), ModelError> {
    if !logprob.is_finite() || logprob > 0.0 {
        return Err(ModelError::InvalidLogprob(logprob));
    }
    Ok(())
}

fn check_unit(what: &'static str, v: f64) -> Result<(), ModelError> {
    if !(0.0..=1.0).contains(&v) {
        return Err(ModelError::OutOfUnitInterval { what, value: v });
    }
    Ok(())
}

/// A candidate answer with its verbalized confidence (top-k elicitation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub candidate: String,
    pub conf: f64,
}

/// Outcomes of second-turn verification queries about the chosen answer.
///
/// A `None` (or empty verdict list) means the query was not run or its reply
/// could not be parsed; the corresponding method is then reported missing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Probes {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub p_true_verdicts: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_true_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub p_true_cand_verdicts: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_true_cand_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub self_ask: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub self_ask_cand: Option<f64>,
}

impl Probes {
    pub fn is_empty(&self) -> bool {
        *self == Probes::default()
    }

    fn validate(&self) -> Result<(), ModelError> {
        for (what, v) in [
            ("p_true_prob", self.p_true_prob),
            ("p_true_cand_prob", self.p_true_cand_prob),
            ("self_ask", self.self_ask),
            ("self_ask_cand", self.self_ask_cand),
        ] {
            if let Some(v) = v {
                check_unit(what, v)?;
            }
        }
        Ok(())
    }
}

/// One sampled generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSample {
    pub text: String,
    /// Empty when the backend returned no logprobs.
    #[serde(default)]
    pub tokens: Vec<TokenProb>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verbalized_conf: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux: Option<Vec<Candidate>>,
}

impl ResponseSample {
    /// A sample with logprobs and nothing else.
    pub fn new(text: impl Into<String>, tokens: Vec<TokenProb>) -> Self {
        ResponseSample {
            text: text.into(),
            tokens,
            verbalized_conf: None,
            aux: None,
        }
    }

    /// A sample whose whole text is one pseudo-token of the given probability.
    pub fn single_token(text: impl Into<String>, prob: f64) -> Self {
        let text = text.into();
        ResponseSample::new(
            text.clone(),
            vec![TokenProb {
                token: text,
                logprob: prob.ln(),
            }],
        )
    }

    pub fn has_logprobs(&self) -> bool {
        !self.tokens.is_empty()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for t in &self.tokens {
            check_logprob(t.logprob)?;
        }
        if !self.sequence_logprob_unchecked().is_finite() {
            return Err(ModelError::InvalidLogprob(
                self.sequence_logprob_unchecked(),
            ));
        }
        if let Some(c) = self.verbalized_conf {
            check_unit("verbalized_conf", c)?;
        }
        for c in self.aux.iter().flatten() {
            check_unit("aux.conf", c.conf)?;
        }
        Ok(())
    }

    fn sequence_logprob_unchecked(&self) -> f64 {
        exact_sum(self.tokens.iter().map(|t| t.logprob))
    }

    /// Sum of token logprobs, correctly rounded and so independent of token order.
    pub fn sequence_logprob(&self) -> Result<f64, ModelError> {
        if self.tokens.is_empty() {
            return Err(ModelError::EmptyTokens);
        }
        Ok(self.sequence_logprob_unchecked())
    }
}

/// Probability of the whole generated sequence, `exp(Σ logprob)`.
///
/// Summation happens in log space; the result is exponentiated once.
pub fn sequence_probability(sample: &ResponseSample) -> Result<f64, ModelError> {
    sample.sequence_logprob().map(f64::exp)
}

/// All samples drawn for one question.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    question_id: String,
    samples: Vec<ResponseSample>,
    chosen_index: usize,
    probes: Probes,
}

impl SampleBatch {
    pub fn new(
        question_id: impl Into<String>,
        samples: Vec<ResponseSample>,
        chosen_index: usize,
    ) -> Result<Self, ModelError> {
        if samples.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        if chosen_index >= samples.len() {
            return Err(ModelError::ChosenOutOfRange {
                index: chosen_index,
                len: samples.len(),
            });
        }
        for s in &samples {
            s.validate()?;
        }
        Ok(SampleBatch {
            question_id: question_id.into(),
            samples,
            chosen_index,
            probes: Probes::default(),
        })
    }

    pub fn with_probes(mut self, probes: Probes) -> Result<Self, ModelError> {
        probes.validate()?;
        self.probes = probes;
        Ok(self)
    }

    pub fn question_id(&self) -> &str {
        &self.question_id
    }

    pub fn samples(&self) -> &[ResponseSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn chosen_index(&self) -> usize {
        self.chosen_index
    }

    pub fn chosen(&self) -> &ResponseSample {
        &self.samples[self.chosen_index]
    }

    pub fn probes(&self) -> &Probes {
        &self.probes
    }

    pub fn all_have_logprobs(&self) -> bool {
        self.samples.iter().all(ResponseSample::has_logprobs)
    }
}

/// One member's contribution to its cluster's mass.
#[derive(Debug, Clone, PartialEq)]
pub struct MassTerm {
    pub sample: usize,
    pub text: String,
    pub prob: f64,
}

/// A semantic-equivalence class of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub representative: String,
    /// Sorted, non-empty sample indices.
    pub members: Vec<usize>,
    /// `None` when no member carries logprobs.
    pub mass: Option<f64>,
    /// The member probabilities summed into `mass`.
    pub mass_terms: Vec<MassTerm>,
    /// True when some members were left out of `mass` for lack of logprobs.
    pub missing_logprobs: bool,
}

impl Cluster {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// How repeated identical sequences inside a cluster contribute to its mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MassMode {
    /// Each distinct text counts once.
    #[default]
    Distinct,
    /// Every sampled copy counts.
    Multiplicity,
}

/// A partition of a batch's samples into clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSet {
    clusters: Vec<Cluster>,
    total_samples: usize,
    mass_mode: MassMode,
}

impl ClusterSet {
    /// Checks the partition property: disjoint, non-empty, covering `0..total`.
    pub fn new(
        clusters: Vec<Cluster>,
        total_samples: usize,
        mass_mode: MassMode,
    ) -> Result<Self, ModelError> {
        let mut seen = vec![false; total_samples];
        for c in &clusters {
            if c.members.is_empty() {
                return Err(ModelError::NotAPartition("empty cluster".into()));
            }
            for &i in &c.members {
                match seen.get_mut(i) {
                    None => {
                        return Err(ModelError::NotAPartition(format!("index {i} out of range")))
                    }
                    Some(true) => {
                        return Err(ModelError::NotAPartition(format!(
                            "index {i} in two clusters"
                        )))
                    }
                    Some(slot) => *slot = true,
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(ModelError::NotAPartition(format!("index {i} not covered")));
        }
        Ok(ClusterSet {
            clusters,
            total_samples,
            mass_mode,
        })
    }

    pub fn mass_mode(&self) -> MassMode {
        self.mass_mode
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn total_samples(&self) -> usize {
        self.total_samples
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Index of the cluster containing sample `i`.
    pub fn cluster_of(&self, i: usize) -> Option<usize> {
        self.clusters
            .iter()
            .position(|c| c.members.binary_search(&i).is_ok())
    }

    /// Cluster masses, failing if any cluster has no probabilistic member.
    pub fn masses(&self) -> Result<Vec<f64>, ModelError> {
        self.clusters
            .iter()
            .map(|c| c.mass.ok_or(ModelError::NoProbabilisticMembers))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Confidence,
    Uncertainty,
}

/// Every estimator the toolkit implements, with stable string ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "prob_entropy")]
    ProbEntropy,
    #[serde(rename = "norm_prob_entropy")]
    NormProbEntropy,
    #[serde(rename = "sem_entropy")]
    SemanticEntropy,
    #[serde(rename = "verb")]
    Verb,
    #[serde(rename = "verb_topk")]
    VerbTopk,
    #[serde(rename = "consis")]
    Consistency,
    #[serde(rename = "consis_verb")]
    ConsistencyVerb,
    #[serde(rename = "consis_verb_topk")]
    ConsistencyVerbTopk,
    #[serde(rename = "perplexity")]
    Perplexity,
    #[serde(rename = "p_true_consis")]
    PTrueConsis,
    #[serde(rename = "p_true_prob")]
    PTrueProb,
    #[serde(rename = "p_true_consis_cand")]
    PTrueConsisCand,
    #[serde(rename = "p_true_prob_cand")]
    PTrueProbCand,
    #[serde(rename = "self_ask")]
    SelfAsk,
    #[serde(rename = "self_ask_cand")]
    SelfAskCand,
    #[serde(rename = "snca")]
    Snca,
    #[serde(rename = "sfca")]
    Sfca,
    #[serde(rename = "sca")]
    Sca,
}

impl Method {
    pub const ALL: [Method; 18] = [
        Method::ProbEntropy,
        Method::NormProbEntropy,
        Method::SemanticEntropy,
        Method::Verb,
        Method::VerbTopk,
        Method::Consistency,
        Method::ConsistencyVerb,
        Method::ConsistencyVerbTopk,
        Method::Perplexity,
        Method::PTrueConsis,
        Method::PTrueProb,
        Method::PTrueConsisCand,
        Method::PTrueProbCand,
        Method::SelfAsk,
        Method::SelfAskCand,
        Method::Snca,
        Method::Sfca,
        Method::Sca,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Method::ProbEntropy => "prob_entropy",
            Method::NormProbEntropy => "norm_prob_entropy",
            Method::SemanticEntropy => "sem_entropy",
            Method::Verb => "verb",
            Method::VerbTopk => "verb_topk",
            Method::Consistency => "consis",
            Method::ConsistencyVerb => "consis_verb",
            Method::ConsistencyVerbTopk => "consis_verb_topk",
            Method::Perplexity => "perplexity",
            Method::PTrueConsis => "p_true_consis",
            Method::PTrueProb => "p_true_prob",
            Method::PTrueConsisCand => "p_true_consis_cand",
            Method::PTrueProbCand => "p_true_prob_cand",
            Method::SelfAsk => "self_ask",
            Method::SelfAskCand => "self_ask_cand",
            Method::Snca => "snca",
            Method::Sfca => "sfca",
            Method::Sca => "sca",
        }
    }

    pub fn orientation(self) -> Orientation {
        match self {
            Method::ProbEntropy
            | Method::NormProbEntropy
            | Method::SemanticEntropy
            | Method::Perplexity => Orientation::Uncertainty,
            _ => Orientation::Confidence,
        }
    }

    /// Methods whose cluster filter takes a threshold.
    pub fn uses_tau(self) -> bool {
        matches!(self, Method::Sca | Method::Snca | Method::Sfca)
    }

    /// Methods that need a second query to the model after the first answer.
    pub fn is_double_turn(self) -> bool {
        matches!(
            self,
            Method::PTrueConsis
                | Method::PTrueProb
                | Method::PTrueConsisCand
                | Method::PTrueProbCand
                | Method::SelfAsk
                | Method::SelfAskCand
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Method::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| ModelError::UnknownMethod(s.to_string()))
    }
}

/// A method's output for one question.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceEstimate {
    pub method: Method,
    pub raw: f64,
}

impl ConfidenceEstimate {
    pub fn new(method: Method, raw: f64) -> Self {
        ConfidenceEstimate { method, raw }
    }

    pub fn orientation(&self) -> Orientation {
        self.method.orientation()
    }

    /// Confidence in `[0, 1]`: clamped for confidence-oriented methods and
    /// `exp(-U)` for uncertainty-oriented ones.
    pub fn confidence(&self) -> f64 {
        to_confidence(self.orientation(), self.raw)
    }

    /// Value used by rank metrics: higher means more confident, no clamping.
    pub fn rank_score(&self) -> f64 {
        match self.orientation() {
            Orientation::Confidence => self.raw,
            Orientation::Uncertainty => -self.raw,
        }
    }
}

pub fn to_confidence(orientation: Orientation, raw: f64) -> f64 {
    match orientation {
        Orientation::Confidence => raw.clamp(0.0, 1.0),
        Orientation::Uncertainty => (-raw.max(0.0)).exp().clamp(0.0, 1.0),
    }
}

/// The atom every metric is computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub question_id: String,
    pub domain: Domain,
    pub answer_count: u32,
    pub method: Method,
    /// Clamped confidence in `[0, 1]`, used by ECE and reporting.
    pub confidence: f64,
    /// Unclamped, confidence-oriented score, used by rank metrics.
    pub score: f64,
    pub correct: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(logprobs: &[f64]) -> ResponseSample {
        ResponseSample::new(
            "x",
            logprobs
                .iter()
                .map(|&l| TokenProb {
                    token: "t".into(),
                    logprob: l,
                })
                .collect(),
        )
    }

    #[test]
    fn sequence_probability_examples() {
        let half = 0.5f64.ln();
        assert!((sequence_probability(&sample(&[half, half])).unwrap() - 0.25).abs() < 1e-9);
        assert_eq!(
            sequence_probability(&sample(&[0.0, 0.0, 0.0])).unwrap(),
            1.0
        );
        assert!(matches!(
            sequence_probability(&sample(&[])),
            Err(ModelError::EmptyTokens)
        ));
    }

    #[test]
    fn sequence_probability_matches_direct_product() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let lps: Vec<f64> = (0..20).map(|_| rng.random_range(-5.0..=0.0)).collect();
            let product: f64 = lps.iter().map(|l: &f64| l.exp()).product();
            let got = sequence_probability(&sample(&lps)).unwrap();
            assert!((got - product).abs() <= 1e-12, "{got} vs {product}");
        }
    }

    #[test]
    fn long_sequences_do_not_underflow_in_log_space() {
        let s = sample(&vec![-10.0; 200]);
        assert_eq!(s.sequence_logprob().unwrap(), -2000.0);
    }

    #[test]
    fn canonical_form() {
        assert_eq!(canonicalize("  PARIS."), "paris");
        assert_eq!(canonicalize("New York!?"), "new york");
        assert_eq!(canonicalize("3.14"), "3.14");
    }

    #[test]
    fn question_invariants() {
        assert!(Question::new("q", Domain::Math, "t", vec![]).is_err());
        assert!(Question::new("q", Domain::Math, "t", vec!["a".into(), "A.".into()]).is_err());
        assert!(Question::new(
            "q",
            Domain::Math,
            "t",
            vec!["a".into(), "b".into(), "c".into()]
        )
        .is_err());
        let q = Question::new("q", Domain::Math, "t", vec!["a".into(), "b".into()]).unwrap();
        assert_eq!(q.answer_count(), 2);
    }

    #[test]
    fn batch_rejects_bad_inputs() {
        assert!(SampleBatch::new("q", vec![], 0).is_err());
        assert!(SampleBatch::new("q", vec![sample(&[0.0])], 1).is_err());
        assert!(SampleBatch::new("q", vec![sample(&[0.1])], 0).is_err());
        let mut s = sample(&[0.0]);
        s.verbalized_conf = Some(1.5);
        assert!(SampleBatch::new("q", vec![s], 0).is_err());
    }

    #[test]
    fn partition_checks() {
        let c = |m: Vec<usize>| Cluster {
            representative: "a".into(),
            members: m,
            mass: None,
            mass_terms: vec![],
            missing_logprobs: true,
        };
        assert!(ClusterSet::new(vec![c(vec![0, 1]), c(vec![2])], 3, MassMode::Distinct).is_ok());
        assert!(
            ClusterSet::new(vec![c(vec![0, 1]), c(vec![1, 2])], 3, MassMode::Distinct).is_err()
        );
        assert!(ClusterSet::new(vec![c(vec![0])], 2, MassMode::Distinct).is_err());
        assert!(ClusterSet::new(vec![c(vec![0]), c(vec![])], 1, MassMode::Distinct).is_err());
    }

    #[test]
    fn method_ids_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.id().parse::<Method>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.id()));
        }
    }

    #[test]
    fn confidence_mapping() {
        let e = ConfidenceEstimate::new(Method::Sca, 1.3);
        assert_eq!(e.confidence(), 1.0);
        assert_eq!(e.rank_score(), 1.3);
        let u = ConfidenceEstimate::new(Method::Perplexity, 0.5f64.ln().abs());
        assert!((u.confidence() - 0.5).abs() < 1e-12);
        assert!(u.rank_score() < 0.0);
    }

    proptest::proptest! {
        #[test]
        fn sequence_probability_is_order_independent(
            lps in proptest::collection::vec(-5.0f64..=0.0, 1..30),
            seed in 0u64..1000,
        ) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut shuffled = lps.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = sequence_probability(&sample(&lps)).unwrap();
            let b = sequence_probability(&sample(&shuffled)).unwrap();
            proptest::prop_assert_eq!(a, b);
        }
    }
}
