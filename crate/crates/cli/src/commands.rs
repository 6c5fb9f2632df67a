use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

use anyhow::{anyhow, Context};
use calibkit_core::clustering::cluster;
use calibkit_core::dataset::{
    append_samples, generate_math_dataset, load_records, read_dataset, read_samples,
    split_dev_test, write_dataset, write_samples,
};
use calibkit_core::estimators::{top_candidates, EstimatorConfig, DEFAULT_CANDIDATES};
use calibkit_core::metrics::{to_csv, to_markdown, PoolSpec, MACRO};
use calibkit_core::pipeline::{self, Prepared};
use calibkit_core::simulator::{synth_benchmark, BenchmarkSpec};
use calibkit_core::{
    Judge, JudgeError, JudgeVerdict, MassMode, Method, Question, RuleJudge, SampleBatch,
};
use calibkit_llm::judge::default_cache_path;
use calibkit_llm::{
    attach_topk, collect_probes, sample_answers, sample_many, Client, EndpointConfig, LlmError,
    ProbeRequest, RemoteJudge,
};

use crate::{
    EvaluateArgs, Failure, GenerateArgs, JudgeArgs, JudgeKind, MassModeArg, SampleArgs, ScoreArgs,
    TuneArgs,
};

type CmdResult = Result<(), Failure>;

pub fn generate(a: &GenerateArgs) -> CmdResult {
    fs::create_dir_all(&a.out)
        .with_context(|| format!("creating {}", a.out.display()))
        .map_err(Failure::other)?;
    let dataset_path = a.out.join("dataset.jsonl");
    if a.math {
        let ds =
            generate_math_dataset(a.per_cell.unwrap_or(100), a.seed).map_err(Failure::usage)?;
        write_dataset(&dataset_path, &ds).map_err(Failure::other)?;
        eprintln!("wrote {} questions to {}", ds.len(), dataset_path.display());
        return Ok(());
    }
    let mut spec = match &a.spec {
        Some(p) => BenchmarkSpec::load(p).map_err(Failure::usage)?,
        None => BenchmarkSpec::default(),
    };
    spec.seed = a.seed;
    if let Some(n) = a.per_cell {
        spec.questions_per_cell = n;
    }
    let (ds, batches) = synth_benchmark(&spec).map_err(Failure::usage)?;
    let samples_path = a.out.join("samples.jsonl");
    write_dataset(&dataset_path, &ds).map_err(Failure::other)?;
    write_samples(&samples_path, &batches).map_err(Failure::other)?;
    eprintln!(
        "wrote {} questions to {} and their samples to {}",
        ds.len(),
        dataset_path.display(),
        samples_path.display()
    );
    Ok(())
}

fn parse_methods(list: &str) -> Result<Vec<Method>, Failure> {
    let list = list.trim();
    if list.eq_ignore_ascii_case("all") {
        return Ok(Method::ALL.to_vec());
    }
    let mut out = Vec::new();
    for id in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let m: Method = id.parse().map_err(Failure::usage)?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

fn load_endpoint(path: &Path) -> Result<EndpointConfig, Failure> {
    EndpointConfig::load(path).map_err(Failure::usage)
}

fn llm_failure(e: LlmError) -> Failure {
    match e {
        LlmError::Transport { .. } | LlmError::Status { .. } | LlmError::Malformed(_) => {
            Failure::transport(e)
        }
        LlmError::Config(_) | LlmError::Prompt(_) => Failure::usage(e),
    }
}

/// Which second-turn queries the requested methods need.
fn probe_plan(methods: &[Method]) -> (bool, Option<ProbeRequest>) {
    let has = |m: &[Method]| methods.iter().any(|x| m.contains(x));
    let topk = has(&[Method::VerbTopk, Method::ConsistencyVerbTopk]);
    let req = ProbeRequest {
        p_true_consis: has(&[Method::PTrueConsis, Method::PTrueConsisCand]),
        p_true_prob: has(&[Method::PTrueProb, Method::PTrueProbCand]),
        self_ask: has(&[Method::SelfAsk, Method::SelfAskCand]),
        with_candidates: has(&[
            Method::PTrueConsisCand,
            Method::PTrueProbCand,
            Method::SelfAskCand,
        ]),
        ..ProbeRequest::default()
    };
    let any = req.p_true_consis || req.p_true_prob || req.self_ask;
    (topk, any.then_some(req))
}

struct Sampled {
    batch: SampleBatch,
    failures: usize,
}

fn sample_one(
    client: &Client,
    q: &Question,
    a: &SampleArgs,
    topk: bool,
    probes: Option<&ProbeRequest>,
) -> Result<Sampled, LlmError> {
    let mut batch = sample_answers(client, q, a.n)?;
    let mut failures = 0;
    if topk {
        let (b, f) = attach_topk(client, q, batch, a.k)?;
        batch = b;
        failures += f;
    }
    if let Some(req) = probes {
        let candidates = cluster(&batch, &RuleJudge, MassMode::Distinct)
            .map(|cs| top_candidates(&cs, DEFAULT_CANDIDATES))
            .unwrap_or_default();
        let (p, f) = collect_probes(client, q, &batch, req, &candidates)?;
        failures += f;
        batch = batch
            .with_probes(p)
            .map_err(|e| LlmError::Malformed(e.to_string()))?;
    }
    Ok(Sampled { batch, failures })
}

pub fn sample(a: &SampleArgs) -> CmdResult {
    if a.n == 0 {
        return Err(Failure::usage(anyhow!("--n must be at least 1")));
    }
    let methods = parse_methods(&a.methods)?;
    let (topk, probes) = probe_plan(&methods);
    let ds = read_dataset(&a.dataset).map_err(Failure::usage)?;
    let cfg = load_endpoint(&a.endpoint)?;
    let in_flight = cfg.max_in_flight;
    let client = Client::http(cfg).map_err(llm_failure)?;

    let done: HashSet<String> = if a.out.exists() {
        read_samples(&a.out)
            .map_err(Failure::usage)?
            .iter()
            .map(|b| b.question_id().to_string())
            .collect()
    } else {
        HashSet::new()
    };
    let todo: Vec<&Question> = ds
        .questions()
        .iter()
        .filter(|q| !done.contains(q.id()))
        .collect();
    eprintln!(
        "{} questions already sampled, {} to go",
        done.len(),
        todo.len()
    );

    let failures_path = a.out.with_extension("parse_failures.jsonl");
    let mut total_failures = 0;
    // Small chunks keep the output file current if a run is interrupted.
    for chunk in todo.chunks(in_flight.max(1) * 4) {
        let results = sample_many(in_flight, chunk, |q| {
            sample_one(&client, q, a, topk, probes.as_ref())
        });
        let mut ok = Vec::new();
        let mut failure_lines = String::new();
        let mut first_err = None;
        for (q, r) in chunk.iter().zip(results) {
            match r {
                Ok(s) => {
                    if s.failures > 0 {
                        total_failures += s.failures;
                        failure_lines.push_str(
                            &serde_json::json!({"question_id": q.id(), "parse_failures": s.failures}).to_string(),
                        );
                        failure_lines.push('\n');
                    }
                    ok.push(s.batch);
                }
                Err(e) => {
                    first_err.get_or_insert((q.id().to_string(), e));
                }
            }
        }
        append_samples(&a.out, &ok).map_err(Failure::other)?;
        if !failure_lines.is_empty() {
            use std::io::Write;
            fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&failures_path)
                .and_then(|mut f| f.write_all(failure_lines.as_bytes()))
                .with_context(|| format!("writing {}", failures_path.display()))
                .map_err(Failure::other)?;
        }
        if let Some((id, e)) = first_err {
            let code = llm_failure(e);
            return Err(Failure {
                code: code.code,
                error: code
                    .error
                    .context(format!("sampling {id}; rerun to resume")),
            });
        }
    }
    if total_failures > 0 {
        eprintln!(
            "{total_failures} unparseable replies; see {}",
            failures_path.display()
        );
    }
    eprintln!(
        "client issued {} requests ({} retries)",
        client.requests(),
        client.retries()
    );
    Ok(())
}

/// Remembers whether the wrapped judge ever failed to reach its endpoint.
struct Watched<J> {
    inner: J,
    transport_failed: AtomicBool,
}

impl<J: Judge> Watched<J> {
    fn note<T>(&self, r: Result<T, JudgeError>) -> Result<T, JudgeError> {
        if let Err(JudgeError::Transport(_)) = &r {
            self.transport_failed.store(true, Ordering::Relaxed);
        }
        r
    }
}

impl<J: Judge> Judge for Watched<J> {
    fn judge_equivalent(&self, a: &str, b: &str) -> Result<JudgeVerdict, JudgeError> {
        self.note(self.inner.judge_equivalent(a, b))
    }

    fn judge_correct(&self, answer: &str, question: &Question) -> Result<JudgeVerdict, JudgeError> {
        self.note(self.inner.judge_correct(answer, question))
    }
}

fn mass_mode(m: MassModeArg) -> MassMode {
    match m {
        MassModeArg::Distinct => MassMode::Distinct,
        MassModeArg::Multiplicity => MassMode::Multiplicity,
    }
}

/// Loads, clusters and labels the records with the requested judge.
fn prepare(
    dataset: &Path,
    records: &Path,
    j: &JudgeArgs,
    cache_near: &Path,
) -> Result<Vec<Prepared>, Failure> {
    let recs = load_records(dataset, records).map_err(Failure::usage)?;
    let mode = mass_mode(j.mass_mode);
    match j.judge {
        JudgeKind::Rule => Ok(pipeline::prepare(recs, &RuleJudge, mode, j.jobs)),
        JudgeKind::Remote => {
            let endpoint = j.endpoint.as_deref().expect("clap requires --endpoint");
            let client = Client::http(load_endpoint(endpoint)?).map_err(llm_failure)?;
            let cache = default_cache_path(cache_near);
            let remote = RemoteJudge::new(client)
                .with_cache_file(&cache)
                .with_context(|| format!("judge cache {}", cache.display()))
                .map_err(Failure::other)?;
            let judge = Watched {
                inner: remote,
                transport_failed: AtomicBool::new(false),
            };
            let prepared = pipeline::prepare(recs, &judge, mode, j.jobs);
            if judge.transport_failed.load(Ordering::Relaxed) {
                return Err(Failure::transport(anyhow!(
                    "judge endpoint unreachable; cached verdicts are kept, rerun to resume"
                )));
            }
            Ok(prepared)
        }
    }
}

pub fn score(a: &ScoreArgs) -> CmdResult {
    let methods = parse_methods(&a.methods)?;
    if methods.is_empty() {
        return Err(Failure::usage(anyhow!("no methods selected")));
    }
    if a.tau.is_empty() {
        return Err(Failure::usage(anyhow!("at least one --tau is needed")));
    }
    let prepared = prepare(&a.dataset, &a.records, &a.judge, &a.out)?;
    let base = EstimatorConfig {
        k: a.k,
        mass_mode: mass_mode(a.judge.mass_mode),
        ..EstimatorConfig::default()
    };
    let mut rows = Vec::new();
    for (i, &tau) in a.tau.iter().enumerate() {
        let cfg = EstimatorConfig {
            tau,
            ..base
        };
        cfg.validate().map_err(Failure::usage)?;
        // Threshold-free methods are scored once.
        let batch: Vec<Method> = methods
            .iter()
            .copied()
            .filter(|m| i == 0 || m.uses_tau())
            .collect();
        if !batch.is_empty() {
            rows.extend(pipeline::score(&prepared, &batch, &cfg, a.judge.jobs));
        }
    }
    pipeline::write_scores(&a.out, &rows).map_err(Failure::other)?;
    let missing = rows
        .iter()
        .filter(|r| r.status == pipeline::ScoreStatus::Missing)
        .count();
    eprintln!(
        "scored {} questions, {} rows ({missing} missing) to {}",
        prepared.len(),
        rows.len(),
        a.out.display()
    );
    Ok(())
}

pub fn evaluate(a: &EvaluateArgs) -> CmdResult {
    let pools = PoolSpec::parse_list(&a.pools).map_err(Failure::usage)?;
    if a.bins == 0 {
        return Err(Failure::usage(anyhow!("--bins must be positive")));
    }
    let mut rows = pipeline::read_scores(&a.scores).map_err(Failure::usage)?;
    if let Some(p) = &a.labels {
        let labels = pipeline::read_labels(p).map_err(Failure::usage)?;
        pipeline::apply_labels(&mut rows, &labels);
    }
    let metrics = pipeline::evaluate(&rows, &pools, a.bins);
    let md = to_markdown(&metrics);
    if let Some(p) = &a.out_csv {
        fs::write(p, to_csv(&metrics))
            .with_context(|| format!("writing {}", p.display()))
            .map_err(Failure::other)?;
    }
    match &a.out_md {
        Some(p) => fs::write(p, &md)
            .with_context(|| format!("writing {}", p.display()))
            .map_err(Failure::other)?,
        None if a.out_csv.is_none() => print!("{md}"),
        None => {}
    }
    let degenerate: Vec<String> = metrics
        .iter()
        .filter(|m| m.domain == MACRO && m.auroc.is_none())
        .map(|m| format!("{} {}", m.method, m.pool))
        .collect();
    if !degenerate.is_empty() {
        return Err(Failure::degenerate(anyhow!(
            "macro AUROC undefined (single-class labels or no scored questions) for: {}",
            degenerate.join(", ")
        )));
    }
    Ok(())
}

fn parse_grid(s: &str) -> Result<Vec<f64>, Failure> {
    let bad = |what: &str| Failure::usage(anyhow!("invalid --grid `{s}`: {what}"));
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad("not a number"));
    let grid: Vec<f64> = if let Some((start, rest)) = s.split_once(':') {
        let (stop, step) = rest
            .split_once(':')
            .ok_or_else(|| bad("expected start:stop:step"))?;
        let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
        if step.is_nan() || step <= 0.0 || stop < start {
            return Err(bad("need step > 0 and stop >= start"));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        // Rounded to 12 places so 0.1 + 0.05 lands on 0.15.
        (0..=n)
            .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
            .collect()
    } else {
        s.split(',').map(num).collect::<Result<_, _>>()?
    };
    if grid.is_empty() || grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(bad("thresholds must lie in [0, 1]"));
    }
    Ok(grid)
}

pub fn tune(a: &TuneArgs) -> CmdResult {
    let method: Method = a.method.parse().map_err(Failure::usage)?;
    if !method.uses_tau() {
        return Err(Failure::usage(anyhow!(
            "method `{method:?}` has no threshold to tune"
        )));
    }
    let grid = parse_grid(&a.grid)?;
    let ds = read_dataset(&a.dataset).map_err(Failure::usage)?;
    let (dev, _) = split_dev_test(&ds, a.dev_frac, a.seed).map_err(Failure::usage)?;
    let dev_ids: HashSet<&str> = dev.questions().iter().map(Question::id).collect();
    let prepared = prepare(&a.dataset, &a.records, &a.judge, &a.records)?;
    let (dev_p, test_p): (Vec<Prepared>, Vec<Prepared>) = prepared
        .into_iter()
        .partition(|p| dev_ids.contains(p.question.id()));
    let outcome = pipeline::tune(&dev_p, &test_p, method, &grid, mass_mode(a.judge.mass_mode))
        .map_err(Failure::degenerate)?;
    println!(
        "{}",
        serde_json::json!({
            "method": method.id(),
            "tau": outcome.tau,
            "dev_auroc": outcome.dev_auroc,
            "test_auroc": outcome.test_auroc,
            "dev_questions": dev_p.len(),
            "test_questions": test_p.len(),
        })
    );
    Ok(())
}
