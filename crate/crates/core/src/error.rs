use thiserror::Error;

use crate::model::expr::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("sample must have at least one row and one feature (got {rows}x{cols})")]
    EmptySample { rows: usize, cols: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("duplicate feature name `{name}` at index {index}")]
    DuplicateFeature { name: String, index: usize },

    #[error("expected {expected} {what}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("shape mismatch: explicand is {explicand:?}, baseline is {baseline:?}")]
    ShapeMismatch {
        explicand: (usize, usize),
        baseline: (usize, usize),
    },

    #[error("feature name mismatch at index {index}: `{explicand}` vs `{baseline}`")]
    FeatureMismatch {
        index: usize,
        explicand: String,
        baseline: String,
    },

    #[error("invalid group specification: {0}")]
    InvalidGroups(String),

    #[error("metric input is empty")]
    EmptyInput,

    #[error("{metric} is not differentiable; group IG supports only w1 and evd")]
    NotDifferentiable { metric: &'static str },

    #[error("{groups} groups exceed the exact Shapley limit of {limit}; use the sampled estimator")]
    TooManyGroups { groups: usize, limit: usize },

    #[error("model error at row {row}: {message}")]
    Model { row: usize, message: String },

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot parse {column:?} at data row {row}: `{value}`")]
    BadCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("unknown categories in column `{column}`: {}", fmt_unknown(.rows))]
    UnknownCategory {
        column: String,
        rows: Vec<(usize, String)>,
    },

    #[error("ragged row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("empty sample: no data rows")]
    NoDataRows,

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn fmt_unknown(rows: &[(usize, String)]) -> String {
    const SHOWN: usize = 8;
    let mut s = rows
        .iter()
        .take(SHOWN)
        .map(|(r, v)| format!("row {r} `{v}`"))
        .collect::<Vec<_>>()
        .join(", ");
    if rows.len() > SHOWN {
        s.push_str(&format!(" and {} more", rows.len() - SHOWN));
    }
    s
}

impl Error {
    /// True when the error stems from user-supplied input rather than an
    /// internal failure.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::Json(_))
    }
}
