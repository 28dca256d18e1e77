use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("ragged row at line {line}: expected {expected} cells, found {found}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("class column absent: {0}")]
    ClassColumnAbsent(String),
    #[error("no data rows")]
    NoRows,
    #[error("non-finite value {value} in column being discretized")]
    NonFinite { value: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("structure does not match data: {0}")]
    StructureMismatch(String),
    #[error("value {value} out of range for variable {variable} with {cardinality} categories")]
    ValueOutOfRange {
        variable: usize,
        value: u32,
        cardinality: usize,
    },
    #[error("removing row would drive a count negative")]
    NegativeCount,
    #[error("exact supervised score needs {needed} class configurations, budget is {budget}")]
    BudgetExceeded { needed: String, budget: u64 },
    #[error("{n_features} features exceed the structure enumeration cap of {cap}")]
    TooManyFeatures { n_features: usize, cap: usize },
    #[error("need at least 2 classes, found {0}")]
    TooFewClasses(usize),
    #[error("malformed report: {0}")]
    Report(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
