use std::collections::BTreeMap;
use std::fmt::Write;

use serde::Serialize;

use super::{accuracy, auroc, ece, mean_confidence, PoolSpec};
use crate::model::{Domain, EvalRecord};

/// Domain label of the macro-average rows.
pub const MACRO: &str = "macro";

/// Metrics for one (domain, method, pool) cell. `auroc` is `None` when the
/// cell has only one label class; every metric is `None` when nothing in the
/// cell could be scored.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub domain: String,
    pub method: String,
    pub pool: String,
    pub n: usize,
    pub accuracy: Option<f64>,
    pub mean_confidence: Option<f64>,
    pub auroc: Option<f64>,
    pub ece: Option<f64>,
    pub parse_failures: usize,
}

/// Per-domain rows (sorted by domain) followed by the unweighted macro row.
///
/// `failures` lists the (domain, answer count) of every record that could not
/// be scored; they count toward `parse_failures` but not toward any metric.
/// The macro AUROC averages the domains where it is defined.
pub fn evaluate_pool(
    method: &str,
    records: &[EvalRecord],
    failures: &[(Domain, u32)],
    pool: &PoolSpec,
    bins: usize,
) -> Vec<MetricRow> {
    let mut by_domain: BTreeMap<Domain, Vec<&EvalRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| pool.contains(r.answer_count)) {
        by_domain.entry(r.domain).or_default().push(r);
    }
    let mut failed: BTreeMap<Domain, usize> = BTreeMap::new();
    for &(d, _) in failures.iter().filter(|(_, k)| pool.contains(*k)) {
        *failed.entry(d).or_insert(0) += 1;
    }
    let pool_label = pool.to_string();
    let mut rows = Vec::new();
    for (domain, recs) in &by_domain {
        let labels: Vec<bool> = recs.iter().map(|r| r.correct).collect();
        let conf: Vec<f64> = recs.iter().map(|r| r.confidence).collect();
        let scores: Vec<f64> = recs.iter().map(|r| r.score).collect();
        rows.push(MetricRow {
            domain: domain.to_string(),
            method: method.to_string(),
            pool: pool_label.clone(),
            n: recs.len(),
            accuracy: accuracy(&labels).ok(),
            mean_confidence: mean_confidence(&conf).ok(),
            auroc: auroc(&scores, &labels).ok(),
            ece: ece(&conf, &labels, bins).ok(),
            parse_failures: failed.get(domain).copied().unwrap_or(0),
        });
    }
    if rows.is_empty() && failed.is_empty() {
        return rows;
    }
    let mean = |f: &dyn Fn(&MetricRow) -> Option<f64>| {
        let vals: Vec<f64> = rows.iter().filter_map(f).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    let macro_row = MetricRow {
        domain: MACRO.into(),
        method: method.to_string(),
        pool: pool_label,
        n: rows.iter().map(|r| r.n).sum(),
        accuracy: mean(&|r| r.accuracy),
        mean_confidence: mean(&|r| r.mean_confidence),
        auroc: mean(&|r| r.auroc),
        ece: mean(&|r| r.ece),
        parse_failures: failed.values().sum(),
    };
    rows.push(macro_row);
    rows
}

fn num(v: f64) -> String {
    format!("{v:.6}")
}

/// One CSV line per row, with a header.
pub fn to_csv(rows: &[MetricRow]) -> String {
    let mut out =
        String::from("domain,method,pool,n,accuracy,mean_confidence,auroc,ece,parse_failures\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},\"{}\",{},{},{},{},{},{}",
            r.domain,
            r.method,
            r.pool,
            r.n,
            r.accuracy.map(num).unwrap_or_default(),
            r.mean_confidence.map(num).unwrap_or_default(),
            r.auroc.map(num).unwrap_or_default(),
            r.ece.map(num).unwrap_or_default(),
            r.parse_failures
        );
    }
    out
}

/// Macro AUROC (×100) with one row per method and one column per pool.
pub fn to_markdown(rows: &[MetricRow]) -> String {
    let mut methods: Vec<&str> = Vec::new();
    let mut pools: Vec<&str> = Vec::new();
    let mut cells: BTreeMap<(&str, &str), &MetricRow> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.domain == MACRO) {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
        if !pools.contains(&r.pool.as_str()) {
            pools.push(&r.pool);
        }
        cells.insert((r.method.as_str(), r.pool.as_str()), r);
    }
    let mut out = String::from("| Method |");
    for p in &pools {
        let _ = write!(out, " {p} |");
    }
    out.push_str("\n|---|");
    out.push_str(&"---:|".repeat(pools.len()));
    out.push('\n');
    for m in &methods {
        let _ = write!(out, "| {m} |");
        for p in &pools {
            match cells.get(&(*m, *p)).and_then(|r| r.auroc) {
                Some(a) => {
                    let _ = write!(out, " {:.1} |", a * 100.0);
                }
                None => out.push_str(" n/a |"),
            }
        }
        out.push('\n');
    }
    if let Some(first) = methods.first() {
        out.push_str("\nScored questions per pool:");
        for p in &pools {
            if let Some(r) = cells.get(&(*first, *p)) {
                let _ = write!(out, " {p} = {}", r.n);
            }
        }
        out.push('\n');
    }
    out
}
