//! JSON Lines readers and writers.
//!
//! Dataset files hold one question per line. Sample files hold one sampled
//! response per line, keyed by `question_id` and `sample_index`; the chosen
//! response may also carry the second-turn `probes`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetError, DatasetMeta};
use crate::model::{Candidate, Probes, Question, ResponseSample, SampleBatch, TokenProb};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleLine {
    pub question_id: String,
    pub sample_index: usize,
    pub text: String,
    #[serde(default)]
    pub tokens: Vec<TokenProb>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verbalized_conf: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux: Option<Vec<Candidate>>,
    pub chosen: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<Probes>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn violation(path: &Path, line: usize, message: impl ToString) -> DatasetError {
    DatasetError::SchemaViolation {
        path: path.to_path_buf(),
        line,
        message: message.to_string(),
    }
}

/// Non-blank lines with their 1-based line numbers.
fn lines(path: &Path) -> Result<Vec<(usize, String)>, DatasetError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn write_lines<T: Serialize>(
    path: &Path,
    rows: impl IntoIterator<Item = T>,
) -> Result<(), DatasetError> {
    emit_lines(File::create(path).map_err(io_err(path))?, path, rows)
}

fn emit_lines<T: Serialize>(
    file: File,
    path: &Path,
    rows: impl IntoIterator<Item = T>,
) -> Result<(), DatasetError> {
    let mut w = BufWriter::new(file);
    for row in rows {
        let s = serde_json::to_string(&row).expect("rows serialize");
        writeln!(w, "{s}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<(), DatasetError> {
    write_lines(path, ds.questions())
}

pub fn read_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    let mut questions = Vec::new();
    for (n, line) in lines(path)? {
        let q: Question = serde_json::from_str(&line).map_err(|e| violation(path, n, e))?;
        questions.push(q);
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(
        DatasetMeta {
            name,
            ..DatasetMeta::default()
        },
        questions,
    )
}

pub fn write_samples(path: &Path, batches: &[SampleBatch]) -> Result<(), DatasetError> {
    write_lines(path, sample_lines(batches))
}

/// Appends batches to a sample file, creating it if needed.
pub fn append_samples(path: &Path, batches: &[SampleBatch]) -> Result<(), DatasetError> {
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    emit_lines(file, path, sample_lines(batches))
}

fn sample_lines(batches: &[SampleBatch]) -> impl Iterator<Item = SampleLine> + '_ {
    batches.iter().flat_map(|b| {
        b.samples().iter().enumerate().map(move |(i, s)| {
            let chosen = i == b.chosen_index();
            SampleLine {
                question_id: b.question_id().to_string(),
                sample_index: i,
                text: s.text.clone(),
                tokens: s.tokens.clone(),
                verbalized_conf: s.verbalized_conf,
                aux: s.aux.clone(),
                chosen,
                probes: (chosen && !b.probes().is_empty()).then(|| b.probes().clone()),
            }
        })
    })
}

/// Reads a sample file back into batches, in order of first appearance.
///
/// Lines of one question need not be contiguous, but their indices must be
/// exactly `0..M` with one chosen response.
pub fn read_samples(path: &Path) -> Result<Vec<SampleBatch>, DatasetError> {
    struct Group {
        first_line: usize,
        rows: Vec<(usize, SampleLine)>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Group> = HashMap::new();
    for (n, line) in lines(path)? {
        let row: SampleLine = serde_json::from_str(&line).map_err(|e| violation(path, n, e))?;
        let sample = to_sample(&row);
        sample.validate().map_err(|e| violation(path, n, e))?;
        if row.probes.is_some() && !row.chosen {
            return Err(violation(
                path,
                n,
                "`probes` present on a response that is not chosen",
            ));
        }
        let g = groups.entry(row.question_id.clone()).or_insert_with(|| {
            order.push(row.question_id.clone());
            Group {
                first_line: n,
                rows: Vec::new(),
            }
        });
        g.rows.push((n, row));
    }
    let mut out = Vec::with_capacity(order.len());
    for id in order {
        let mut g = groups.remove(&id).expect("group exists");
        g.rows.sort_by_key(|(_, r)| r.sample_index);
        for (expect, (n, r)) in g.rows.iter().enumerate() {
            if r.sample_index != expect {
                return Err(violation(
                    path,
                    *n,
                    format!(
                        "`sample_index` {} for `{id}` breaks the sequence 0..{}",
                        r.sample_index,
                        g.rows.len()
                    ),
                ));
            }
        }
        let chosen: Vec<usize> = g
            .rows
            .iter()
            .filter(|(_, r)| r.chosen)
            .map(|(_, r)| r.sample_index)
            .collect();
        if chosen.len() != 1 {
            return Err(violation(
                path,
                g.first_line,
                format!(
                    "`chosen` must be set on exactly one response of `{id}`, found {}",
                    chosen.len()
                ),
            ));
        }
        let probes = g.rows[chosen[0]].1.probes.clone();
        let samples = g.rows.iter().map(|(_, r)| to_sample(r)).collect();
        let mut batch = SampleBatch::new(id, samples, chosen[0])
            .map_err(|e| violation(path, g.first_line, e))?;
        if let Some(p) = probes {
            batch = batch
                .with_probes(p)
                .map_err(|e| violation(path, g.first_line, e))?;
        }
        out.push(batch);
    }
    Ok(out)
}

fn to_sample(row: &SampleLine) -> ResponseSample {
    ResponseSample {
        text: row.text.clone(),
        tokens: row.tokens.clone(),
        verbalized_conf: row.verbalized_conf,
        aux: row.aux.clone(),
    }
}

/// Pairs each question with its samples. Questions without samples are
/// skipped; samples for unknown questions are an error.
pub fn load_records(
    dataset: &Path,
    samples: &Path,
) -> Result<Vec<(Question, SampleBatch)>, DatasetError> {
    let ds = read_dataset(dataset)?;
    let batches = read_samples(samples)?;
    let mut by_id: HashMap<String, SampleBatch> = HashMap::with_capacity(batches.len());
    for b in batches {
        if ds.get(b.question_id()).is_none() {
            return Err(DatasetError::UnknownQuestion(b.question_id().to_string()));
        }
        by_id.insert(b.question_id().to_string(), b);
    }
    Ok(ds
        .questions()
        .iter()
        .filter_map(|q| by_id.remove(q.id()).map(|b| (q.clone(), b)))
        .collect())
}

pub fn store_records(
    dataset: &Path,
    samples: &Path,
    records: &[(Question, SampleBatch)],
) -> Result<(), DatasetError> {
    let ds = Dataset::new(
        DatasetMeta::default(),
        records.iter().map(|(q, _)| q.clone()).collect(),
    )?;
    write_dataset(dataset, &ds)?;
    let batches: Vec<SampleBatch> = records.iter().map(|(_, b)| b.clone()).collect();
    write_samples(samples, &batches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Domain;

    fn record() -> (Question, SampleBatch) {
        let q = Question::new(
            "q1",
            Domain::River,
            "Name a river.",
            vec!["Nile".into(), "Amazon".into()],
        )
        .unwrap();
        let mut s0 = ResponseSample::new(
            "Nile",
            vec![
                TokenProb::new("Ni", -0.1).unwrap(),
                TokenProb::new("le", -0.2).unwrap(),
            ],
        );
        s0.verbalized_conf = Some(0.8);
        s0.aux = Some(vec![Candidate {
            candidate: "Nile".into(),
            conf: 0.7,
        }]);
        let s1 = ResponseSample::new("Danube", vec![]);
        let b = SampleBatch::new("q1", vec![s0, s1], 0)
            .unwrap()
            .with_probes(Probes {
                p_true_prob: Some(0.9),
                ..Probes::default()
            })
            .unwrap();
        (q, b)
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (dp, sp) = (dir.path().join("d.jsonl"), dir.path().join("s.jsonl"));
        let recs = vec![record()];
        store_records(&dp, &sp, &recs).unwrap();
        assert_eq!(load_records(&dp, &sp).unwrap(), recs);
    }

    fn violation_of(text: &str) -> (usize, String) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.jsonl");
        std::fs::write(&p, text).unwrap();
        match read_samples(&p) {
            Err(DatasetError::SchemaViolation { line, message, .. }) => (line, message),
            other => panic!("expected violation, got {other:?}"),
        }
    }

    #[test]
    fn schema_violations_name_line_and_field() {
        let ok = r#"{"question_id":"q","sample_index":0,"text":"a","chosen":true}"#;
        let (line, msg) = violation_of(&format!(
            "{ok}\n{{\"question_id\":\"q\",\"sample_index\":1,\"chosen\":false}}\n"
        ));
        assert_eq!(line, 2);
        assert!(msg.contains("text"), "{msg}");
        let positive = r#"{"question_id":"q","sample_index":0,"text":"a","tokens":[{"token":"a","logprob":0.5}],"chosen":true}"#;
        let (line, msg) = violation_of(positive);
        assert_eq!(line, 1);
        assert!(msg.contains("logprob"), "{msg}");
        let (_, msg) = violation_of(&format!(
            "{ok}\n{}",
            ok.replace("\"sample_index\":0", "\"sample_index\":2")
        ));
        assert!(msg.contains("sample_index"), "{msg}");
        let (_, msg) = violation_of(&ok.replace("true", "false"));
        assert!(msg.contains("chosen"), "{msg}");
    }

    #[test]
    fn question_schema_violation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        std::fs::write(
            &p,
            r#"{"id":"a","domain":"math","text":"?","answer_count":2,"ground_truth":["1"]}"#,
        )
        .unwrap();
        assert!(matches!(
            read_dataset(&p),
            Err(DatasetError::SchemaViolation { line: 1, .. })
        ));
    }
}
