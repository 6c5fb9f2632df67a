//! Stage drivers shared by the command-line tool and the tests: cluster and
//! label each question, run estimators, evaluate pools and tune thresholds.
//!
//! Per-question work runs on a rayon pool; results are always collected in
//! input order, so output does not depend on the thread count.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{cluster, MassMode};
use crate::dataset::DatasetError;
use crate::estimators::{estimate, EstimatorConfig};
use crate::judge::Judge;
use crate::metrics::{argmax_threshold, evaluate_pool, MetricRow, MetricsError, PoolSpec, MACRO};
use crate::model::{ClusterSet, Domain, EvalRecord, Method, Question, SampleBatch};

/// A question with its samples, clusters and correctness label.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub question: Question,
    pub batch: SampleBatch,
    pub clusters: Result<ClusterSet, String>,
    pub correct: Result<bool, String>,
}

/// Runs `f` on a pool of `jobs` threads, or on the global pool when `None`.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

/// Clusters every batch and judges every chosen answer.
pub fn prepare<J: Judge + ?Sized>(
    records: Vec<(Question, SampleBatch)>,
    judge: &J,
    mode: MassMode,
    jobs: Option<usize>,
) -> Vec<Prepared> {
    with_jobs(jobs, || {
        records
            .into_par_iter()
            .map(|(question, batch)| {
                let clusters = cluster(&batch, judge, mode).map_err(|e| e.to_string());
                let correct = judge
                    .judge_correct(&batch.chosen().text, &question)
                    .map(|v| v.equivalent_or_correct)
                    .map_err(|e| e.to_string());
                Prepared {
                    question,
                    batch,
                    clusters,
                    correct,
                }
            })
            .collect()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreStatus {
    Ok,
    Missing,
}

/// One line of a scores file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub question_id: String,
    pub domain: Domain,
    pub answer_count: u32,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub status: ScoreStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    /// Ranking score: higher means more confident.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl ScoreRow {
    /// Report label: the method id, with the threshold for filtered methods.
    pub fn label(&self) -> String {
        match self.tau {
            Some(t) => format!("{}(tau={t})", self.method.id()),
            None => self.method.id().to_string(),
        }
    }

    fn eval_record(&self) -> Option<EvalRecord> {
        match (self.status, self.confidence, self.score, self.correct) {
            (ScoreStatus::Ok, Some(confidence), Some(score), Some(correct)) => Some(EvalRecord {
                question_id: self.question_id.clone(),
                domain: self.domain,
                answer_count: self.answer_count,
                method: self.method,
                confidence,
                score,
                correct,
            }),
            _ => None,
        }
    }
}

fn score_one(p: &Prepared, method: Method, cfg: &EstimatorConfig) -> ScoreRow {
    let mut row = ScoreRow {
        question_id: p.question.id().to_string(),
        domain: p.question.domain(),
        answer_count: p.question.answer_count(),
        method,
        tau: method.uses_tau().then_some(cfg.tau),
        status: ScoreStatus::Missing,
        raw: None,
        confidence: None,
        score: None,
        correct: p.correct.as_ref().ok().copied(),
        reason: None,
    };
    let result = match (&p.clusters, &p.correct) {
        (Err(e), _) => Err(format!("clustering: {e}")),
        (_, Err(e)) => Err(format!("label: {e}")),
        (Ok(cs), Ok(_)) => estimate(method, &p.batch, cs, cfg).map_err(|e| e.to_string()),
    };
    match result {
        Ok(est) => {
            row.status = ScoreStatus::Ok;
            row.raw = Some(est.raw);
            row.confidence = Some(est.confidence());
            row.score = Some(est.rank_score());
        }
        Err(reason) => row.reason = Some(reason),
    }
    row
}

/// Scores every question with every method, question-major.
pub fn score(
    prepared: &[Prepared],
    methods: &[Method],
    cfg: &EstimatorConfig,
    jobs: Option<usize>,
) -> Vec<ScoreRow> {
    with_jobs(jobs, || {
        prepared
            .par_iter()
            .flat_map_iter(|p| methods.iter().map(move |&m| score_one(p, m, cfg)))
            .collect()
    })
}

/// Replaces correctness labels by question id, e.g. with human judgments.
pub fn apply_labels(rows: &mut [ScoreRow], labels: &HashMap<String, bool>) {
    for r in rows {
        if let Some(&l) = labels.get(&r.question_id) {
            r.correct = Some(l);
        }
    }
}

/// Records of one method label, plus the (domain, answer count) of each
/// question it failed on.
type LabelGroup = (Vec<EvalRecord>, Vec<(Domain, u32)>);

/// Metric rows for every (method label, pool), in order of first appearance
/// of each label.
pub fn evaluate(rows: &[ScoreRow], pools: &[PoolSpec], bins: usize) -> Vec<MetricRow> {
    let mut labels: Vec<String> = Vec::new();
    let mut groups: HashMap<String, LabelGroup> = HashMap::new();
    for r in rows {
        let label = r.label();
        let g = groups.entry(label.clone()).or_insert_with(|| {
            labels.push(label);
            Default::default()
        });
        match r.eval_record() {
            Some(rec) => g.0.push(rec),
            None => g.1.push((r.domain, r.answer_count)),
        }
    }
    let mut out = Vec::new();
    for label in &labels {
        let (recs, failures) = &groups[label];
        for pool in pools {
            out.extend(evaluate_pool(label, recs, failures, pool, bins));
        }
    }
    out
}

/// Macro AUROC of `method` at threshold `tau` over all answer counts.
pub fn macro_auroc(
    prepared: &[Prepared],
    method: Method,
    tau: f64,
    mass_mode: MassMode,
) -> Option<f64> {
    let cfg = EstimatorConfig {
        tau,
        mass_mode,
        ..EstimatorConfig::default()
    };
    let rows = score(prepared, &[method], &cfg, None);
    let pool = PoolSpec::nested().pop().expect("four pools");
    evaluate(&rows, &[pool], crate::metrics::DEFAULT_ECE_BINS)
        .into_iter()
        .find(|r| r.domain == MACRO)
        .and_then(|r| r.auroc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TuneOutcome {
    pub tau: f64,
    pub dev_auroc: f64,
    pub test_auroc: Option<f64>,
}

/// The grid threshold with the best dev macro AUROC (ties to the smaller
/// threshold), and the test AUROC at that threshold.
pub fn tune(
    dev: &[Prepared],
    test: &[Prepared],
    method: Method,
    grid: &[f64],
    mass_mode: MassMode,
) -> Result<TuneOutcome, MetricsError> {
    let (tau, dev_auroc) = argmax_threshold(grid, |t| macro_auroc(dev, method, t, mass_mode))?;
    Ok(TuneOutcome {
        tau,
        dev_auroc,
        test_auroc: macro_auroc(test, method, tau, mass_mode),
    })
}

pub fn write_scores(path: &Path, rows: &[ScoreRow]) -> Result<(), DatasetError> {
    let io = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for r in rows {
        writeln!(w, "{}", serde_json::to_string(r).expect("rows serialize")).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRow>, DatasetError> {
    read_jsonl(path)
}

#[derive(Deserialize)]
struct LabelLine {
    question_id: String,
    correct: bool,
}

/// Reads `{"question_id": ..., "correct": ...}` lines.
pub fn read_labels(path: &Path) -> Result<HashMap<String, bool>, DatasetError> {
    let rows: Vec<LabelLine> = read_jsonl(path)?;
    Ok(rows
        .into_iter()
        .map(|l| (l.question_id, l.correct))
        .collect())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let io = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path).map_err(io)?)
        .lines()
        .enumerate()
    {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| DatasetError::SchemaViolation {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::judge::RuleJudge;
    use crate::model::ResponseSample;
    use crate::simulator::{synth_benchmark, BenchmarkSpec};

    fn fixture() -> Vec<(Question, SampleBatch)> {
        let q = Question::new("q1", Domain::Math, "?", vec!["A".into()]).unwrap();
        let b = SampleBatch::new(
            "q1",
            vec![
                ResponseSample::single_token("A", 0.4),
                ResponseSample::single_token("B", 0.3),
                ResponseSample::single_token("C", 0.05),
            ],
            0,
        )
        .unwrap();
        vec![(q, b)]
    }

    #[test]
    fn three_cluster_fixture() {
        let prepared = prepare(fixture(), &RuleJudge, MassMode::Distinct, Some(1));
        let rows = score(
            &prepared,
            &[Method::Sca, Method::Verb],
            &EstimatorConfig::with_tau(0.1),
            None,
        );
        assert!((rows[0].confidence.unwrap() - 0.7).abs() < 1e-9);
        assert_eq!(rows[0].label(), "sca(tau=0.1)");
        assert_eq!(rows[1].status, ScoreStatus::Missing);
        assert!(rows[1].reason.as_deref().unwrap().contains("verbalized"));
        assert_eq!(rows[1].correct, Some(true));
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let spec = BenchmarkSpec {
            questions_per_cell: 10,
            ..BenchmarkSpec::default()
        };
        let (ds, batches) = synth_benchmark(&spec).unwrap();
        let records: Vec<_> = ds.questions().iter().cloned().zip(batches).collect();
        let run = |jobs| {
            let p = prepare(records.clone(), &RuleJudge, MassMode::Distinct, Some(jobs));
            score(&p, &Method::ALL, &EstimatorConfig::default(), Some(jobs))
        };
        let one = run(1);
        assert_eq!(one, run(4));
        let metrics = evaluate(&one, &PoolSpec::nested(), 10);
        let snca = metrics
            .iter()
            .find(|r| r.method == "snca(tau=0)" && r.domain == MACRO)
            .unwrap();
        assert_eq!(snca.auroc, Some(0.5));
        let verb = metrics
            .iter()
            .find(|r| r.method == "verb" && r.domain == MACRO)
            .unwrap();
        assert_eq!(verb.n, 0);
    }

    #[test]
    fn scores_round_trip() {
        let prepared = prepare(fixture(), &RuleJudge, MassMode::Distinct, None);
        let rows = score(&prepared, &Method::ALL, &EstimatorConfig::default(), None);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("scores.jsonl");
        write_scores(&p, &rows).unwrap();
        assert_eq!(read_scores(&p).unwrap(), rows);
        std::fs::write(
            dir.path().join("l.jsonl"),
            "{\"question_id\":\"q1\",\"correct\":false}\n",
        )
        .unwrap();
        let labels = read_labels(&dir.path().join("l.jsonl")).unwrap();
        let mut rows = rows;
        apply_labels(&mut rows, &labels);
        assert!(rows.iter().all(|r| r.correct == Some(false)));
    }
}
