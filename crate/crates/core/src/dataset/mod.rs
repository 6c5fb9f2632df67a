//! Datasets of questions: the rule-based math domain, stratified dev/test
//! splits and the JSON Lines file formats shared by every pipeline stage.

mod io;
mod math;
mod split;

pub use io::{
    append_samples, load_records, read_dataset, read_samples, store_records, write_dataset,
    write_samples, SampleLine,
};
pub use math::{
    generate_math_dataset, is_member, make_math_question, math_question, members, NumberType,
    MATH_MAX, WINDOW_ATTEMPTS,
};
pub use split::split_dev_test;

use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ModelError;
use crate::model::{Domain, Question};

pub const GENERATOR_VERSION: &str = concat!("calibkit ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{0} is outside [0, 1000000]")]
    OutOfRange(u64),
    #[error("no window with exactly {k} {number_type} numbers after {attempts} attempts")]
    Unsatisfiable {
        number_type: NumberType,
        k: u32,
        attempts: usize,
    },
    #[error("stratum ({domain}, {answer_count}) would receive no dev questions")]
    EmptyCell { domain: Domain, answer_count: u32 },
    #[error("split fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("duplicate question id `{0}`")]
    DuplicateId(String),
    #[error("{path}:{line}: schema violation: {message}")]
    SchemaViolation {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("samples reference unknown question `{0}`")]
    UnknownQuestion(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub seed: u64,
    pub generator_version: String,
}

impl Default for DatasetMeta {
    fn default() -> Self {
        DatasetMeta {
            name: "unnamed".into(),
            seed: 0,
            generator_version: GENERATOR_VERSION.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    questions: Vec<Question>,
}

impl Dataset {
    /// Fails on duplicate question ids.
    pub fn new(meta: DatasetMeta, questions: Vec<Question>) -> Result<Self, DatasetError> {
        let mut ids = HashSet::with_capacity(questions.len());
        for q in &questions {
            if !ids.insert(q.id()) {
                return Err(DatasetError::DuplicateId(q.id().to_string()));
            }
        }
        Ok(Dataset { meta, questions })
    }

    pub fn questions(&self) -> &[Question] {
        &self.questions
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    /// Question count per (domain, answer count) cell.
    pub fn cell_counts(&self) -> BTreeMap<(Domain, u32), usize> {
        let mut counts = BTreeMap::new();
        for q in &self.questions {
            *counts.entry((q.domain(), q.answer_count())).or_insert(0) += 1;
        }
        counts
    }

    pub fn get(&self, id: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.id() == id)
    }
}
