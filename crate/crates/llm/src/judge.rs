//! Judge backed by a chat endpoint, with a mandatory verdict cache.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use calibkit_core::{Judge, JudgeError, JudgeSource, JudgeVerdict, Question};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::client::{ChatRequest, Client};
use crate::parse::parse_verdict;

#[derive(Serialize, Deserialize)]
struct CacheLine {
    key_hash: String,
    verdict: bool,
}

type Slot = Arc<Mutex<Option<bool>>>;

pub struct RemoteJudge {
    client: Client,
    slots: Mutex<HashMap<String, Slot>>,
    cache_file: Option<Mutex<File>>,
}

impl RemoteJudge {
    pub fn new(client: Client) -> Self {
        RemoteJudge {
            client,
            slots: Mutex::new(HashMap::new()),
            cache_file: None,
        }
    }

    /// Loads verdicts from `path` (if present) and appends new ones to it.
    pub fn with_cache_file(mut self, path: &Path) -> std::io::Result<Self> {
        if path.exists() {
            let mut slots = self.slots.lock().expect("lock");
            for line in BufReader::new(File::open(path)?).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CacheLine = serde_json::from_str(&line)
                    .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
                slots.insert(entry.key_hash, Arc::new(Mutex::new(Some(entry.verdict))));
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        self.cache_file = Some(Mutex::new(file));
        Ok(self)
    }

    pub fn client(&self) -> &Client {
        &self.client
    }

    fn key(&self, kind: &str, parts: &[&str]) -> String {
        let mut h = Sha256::new();
        h.update(self.client.config().model.as_bytes());
        h.update([0]);
        h.update(kind.as_bytes());
        for p in parts {
            h.update([0]);
            h.update(p.as_bytes());
        }
        format!("{:x}", h.finalize())
    }

    /// Looks up `key`, or runs the query once while holding that key's slot so
    /// concurrent identical calls wait instead of re-querying.
    fn cached(
        &self,
        key: String,
        prompt: impl FnOnce() -> String,
    ) -> Result<JudgeVerdict, JudgeError> {
        let slot = self
            .slots
            .lock()
            .expect("lock")
            .entry(key.clone())
            .or_default()
            .clone();
        let mut guard = slot.lock().expect("lock");
        let value = match *guard {
            Some(v) => v,
            None => {
                let mut req = ChatRequest::new(prompt(), 1);
                req.temperature = Some(0.0);
                let reply = self
                    .client
                    .chat(&req)
                    .map_err(|e| JudgeError::Transport(e.to_string()))?;
                let v = parse_verdict(&reply[0].text)
                    .map_err(|e| JudgeError::Unparseable(e.to_string()))?;
                *guard = Some(v);
                if let Some(f) = &self.cache_file {
                    let line = serde_json::to_string(&CacheLine {
                        key_hash: key,
                        verdict: v,
                    })
                    .expect("serializes");
                    let mut f = f.lock().expect("lock");
                    writeln!(f, "{line}")
                        .map_err(|e| JudgeError::Transport(format!("cache write: {e}")))?;
                }
                v
            }
        };
        Ok(JudgeVerdict {
            equivalent_or_correct: value,
            source: JudgeSource::Remote,
        })
    }
}

impl Judge for RemoteJudge {
    fn judge_equivalent(&self, a: &str, b: &str) -> Result<JudgeVerdict, JudgeError> {
        let (x, y) = if a <= b { (a, b) } else { (b, a) };
        self.cached(self.key("equivalent", &[x, y]), || {
            format!(
                "You will be given two answers to the same question.\n\
                 Respond with True if they refer to the same entity or value, or False otherwise.\n\
                 Answer strictly with either \"True\" or \"False\" only.\n\n\
                 Answer 1: {x}\nAnswer 2: {y}"
            )
        })
    }

    fn judge_correct(&self, answer: &str, question: &Question) -> Result<JudgeVerdict, JudgeError> {
        let truth = question.ground_truth().join("; ");
        self.cached(self.key("correct", &[answer, question.text(), &truth]), || {
            format!(
                "You will be given a question, its correct answers, and a model answer.\n\
                 Respond with True if the model answer matches any of the correct answers, or False otherwise.\n\
                 Answer strictly with either \"True\" or \"False\" only.\n\n\
                 Question: {}\nCorrect answers: {truth}\nModel answer: {answer}",
                question.text()
            )
        })
    }
}

/// Default cache location next to a scores file.
pub fn default_cache_path(out: &Path) -> PathBuf {
    out.with_extension("judge-cache.jsonl")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::tests::{fast_config, ok, Scripted};
    use calibkit_core::Domain;

    fn verdict(text: &str) -> String {
        serde_json::json!({"choices": [{"index": 0, "message": {"content": text}}]}).to_string()
    }

    #[test]
    fn identical_calls_hit_the_network_once() {
        let script = Arc::new(Scripted::new(vec![
            ok(&verdict("True")),
            ok(&verdict("False")),
        ]));
        let judge = RemoteJudge::new(Client::new(fast_config(), Box::new(script.clone())).unwrap());
        let a = judge.judge_equivalent("Paris", "paris city").unwrap();
        let b = judge.judge_equivalent("paris city", "Paris").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.source, JudgeSource::Remote);
        assert_eq!(judge.client().requests(), 1);
        let q = Question::new("q", Domain::Region, "capital?", vec!["Paris".into()]).unwrap();
        assert!(
            !judge
                .judge_correct("Lyon", &q)
                .unwrap()
                .equivalent_or_correct
        );
        assert_eq!(judge.client().requests(), 2);
    }

    #[test]
    fn concurrent_identical_calls_share_one_request() {
        let script = Arc::new(Scripted::new(vec![ok(&verdict("True"))]));
        let judge = RemoteJudge::new(Client::new(fast_config(), Box::new(script)).unwrap());
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| {
                    assert!(
                        judge
                            .judge_equivalent("a", "b")
                            .unwrap()
                            .equivalent_or_correct
                    )
                });
            }
        });
        assert_eq!(judge.client().requests(), 1);
    }

    #[test]
    fn cache_file_survives_restarts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let script = Arc::new(Scripted::new(vec![ok(&verdict("True"))]));
        let judge = RemoteJudge::new(Client::new(fast_config(), Box::new(script)).unwrap())
            .with_cache_file(&path)
            .unwrap();
        judge.judge_equivalent("a", "b").unwrap();
        drop(judge);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"key_hash\"") && text.contains("\"verdict\":true"));
        let empty = Arc::new(Scripted::new(vec![]));
        let judge = RemoteJudge::new(Client::new(fast_config(), Box::new(empty)).unwrap())
            .with_cache_file(&path)
            .unwrap();
        assert!(
            judge
                .judge_equivalent("b", "a")
                .unwrap()
                .equivalent_or_correct
        );
        assert_eq!(judge.client().requests(), 0);
    }

    #[test]
    fn unparseable_reply_is_an_error() {
        let script = Arc::new(Scripted::new(vec![ok(&verdict("perhaps"))]));
        let judge = RemoteJudge::new(Client::new(fast_config(), Box::new(script)).unwrap());
        assert!(matches!(
            judge.judge_equivalent("a", "b"),
            Err(JudgeError::Unparseable(_))
        ));
    }
}
