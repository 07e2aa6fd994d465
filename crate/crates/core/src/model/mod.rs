//! Batch-evaluable scalar models.
//!
//! A model maps an `m x n` batch to `m` outputs, one per row, and the output
//! for a row depends only on that row. Attribution relies on this to reuse
//! predictions across hybrid samples.

pub mod expr;

use std::fmt;
use std::sync::Arc;

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::sample::{PredictionSource, PredictionVector, Sample};

pub use expr::{eval_expr, parse_expr, Expr, ParseError, ParseErrorKind, Program};

/// A row-wise batch model with a single scalar output.
pub trait Model: Send + Sync {
    fn predict(&self, batch: ArrayView2<'_, f64>) -> Result<Vec<f64>>;

    /// Number of input columns, when the model knows it.
    fn n_features(&self) -> Option<usize> {
        None
    }

    /// Analytic gradient of the output with respect to one input row.
    /// Attribution never requires it; `None` means "not available".
    fn gradient(&self, _row: ArrayView1<'_, f64>) -> Option<Vec<f64>> {
        None
    }
}

/// Shared handle to a model.
pub type ModelFn = Arc<dyn Model>;

/// Evaluates `model` on a batch and checks the output contract.
pub fn predict_batch(model: &dyn Model, batch: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    if let Some(n) = model.n_features() {
        if n != batch.ncols() {
            return Err(Error::LengthMismatch {
                what: "model input columns",
                expected: n,
                actual: batch.ncols(),
            });
        }
    }
    let out = model.predict(batch)?;
    if out.len() != batch.nrows() {
        return Err(Error::LengthMismatch {
            what: "model outputs",
            expected: batch.nrows(),
            actual: out.len(),
        });
    }
    if let Some(row) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::Model {
            row,
            message: "model output is not finite".into(),
        });
    }
    Ok(out)
}

/// Predictions for a whole sample.
pub fn predict(model: &dyn Model, sample: &Sample, source: PredictionSource) -> Result<PredictionVector> {
    PredictionVector::new(predict_batch(model, sample.values())?, source)
}

/// A parsed expression over named features.
#[derive(Debug, Clone)]
pub struct ExprModel {
    expr: Expr,
    program: Program,
    n_features: usize,
}

impl ExprModel {
    pub fn parse<S: AsRef<str>>(source: &str, feature_names: &[S]) -> Result<Self> {
        let expr = parse_expr(source, feature_names)?;
        Ok(Self::new(expr, feature_names.len()))
    }

    pub fn new(expr: Expr, n_features: usize) -> Self {
        let program = Program::compile(&expr);
        Self {
            expr,
            program,
            n_features,
        }
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }
}

impl Model for ExprModel {
    fn predict(&self, batch: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        self.program.eval(batch)
    }

    fn n_features(&self) -> Option<usize> {
        Some(self.n_features)
    }
}

impl fmt::Display for ExprModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.expr.fmt(f)
    }
}

/// `intercept + coefficients . row`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl Model for LinearModel {
    fn predict(&self, batch: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if batch.ncols() != self.coefficients.len() {
            return Err(Error::LengthMismatch {
                what: "model input columns",
                expected: self.coefficients.len(),
                actual: batch.ncols(),
            });
        }
        Ok(batch
            .rows()
            .into_iter()
            .map(|row| {
                self.intercept
                    + row
                        .iter()
                        .zip(&self.coefficients)
                        .map(|(x, c)| x * c)
                        .sum::<f64>()
            })
            .collect())
    }

    fn n_features(&self) -> Option<usize> {
        Some(self.coefficients.len())
    }

    fn gradient(&self, _row: ArrayView1<'_, f64>) -> Option<Vec<f64>> {
        Some(self.coefficients.clone())
    }
}

type RowFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// A model from a per-row closure, with an optional analytic gradient.
pub struct FnModel {
    f: Box<RowFn>,
    grad: Option<Box<GradFn>>,
    n_features: Option<usize>,
}

impl FnModel {
    pub fn new(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            f: Box::new(f),
            grad: None,
            n_features: None,
        }
    }

    pub fn with_gradient(mut self, g: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.grad = Some(Box::new(g));
        self
    }

    pub fn with_n_features(mut self, n: usize) -> Self {
        self.n_features = Some(n);
        self
    }
}

impl Model for FnModel {
    fn predict(&self, batch: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let mut buf = Vec::with_capacity(batch.ncols());
        Ok(batch
            .rows()
            .into_iter()
            .map(|row| {
                buf.clear();
                buf.extend(row.iter().copied());
                (self.f)(&buf)
            })
            .collect())
    }

    fn n_features(&self) -> Option<usize> {
        self.n_features
    }

    fn gradient(&self, row: ArrayView1<'_, f64>) -> Option<Vec<f64>> {
        let g = self.grad.as_ref()?;
        Some(g(&row.to_vec()))
    }
}

/// A model producing several outputs per row, e.g. class scores.
pub trait MultiOutputModel: Send + Sync {
    /// Returns an `m x k` matrix of outputs.
    fn predict_all(&self, batch: ArrayView2<'_, f64>) -> Result<Array2<f64>>;
}

/// Adapts a multi-output model by analyzing one output column.
pub struct SelectOutput<M> {
    pub inner: M,
    pub column: usize,
}

impl<M: MultiOutputModel> Model for SelectOutput<M> {
    fn predict(&self, batch: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let all = self.inner.predict_all(batch)?;
        if self.column >= all.ncols() {
            return Err(Error::LengthMismatch {
                what: "model output columns",
                expected: self.column + 1,
                actual: all.ncols(),
            });
        }
        Ok(all.column(self.column).to_vec())
    }
}

/// Names of the models that ship with the crate.
pub const BUILTIN_MODELS: &[(&str, &str)] = &[
    ("demo:xz+y+z", "x*z + y + z"),
    ("demo:xy", "x*y"),
    ("demo:x-y", "x - y"),
    ("demo:x+y-z", "x + y - z"),
    ("demo:xy-z^2", "x*y - z^2"),
    ("demo:min", "min(x, y)"),
    ("demo:abs", "abs(x - y)"),
    (
        "salary",
        "50000 + 20000*location + 20000*education + 5000*relevant_experience \
         + 100*experience + 10000*engineer_type",
    ),
];

/// Resolves a built-in model name or parses `spec` as an expression.
pub fn resolve_model<S: AsRef<str>>(spec: &str, feature_names: &[S]) -> Result<ExprModel> {
    let source = BUILTIN_MODELS
        .iter()
        .find(|(name, _)| *name == spec)
        .map_or(spec, |(_, src)| src);
    ExprModel::parse(source, feature_names)
}

/// An elementwise transform applied to model outputs before the drift metric.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Affine { scale: f64, shift: f64 },
    Logistic,
    Exp,
    Tanh,
}

impl Transform {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Transform::Affine { scale, shift } => scale * v + shift,
            Transform::Logistic => 1.0 / (1.0 + (-v).exp()),
            Transform::Exp => v.exp(),
            Transform::Tanh => v.tanh(),
        }
    }
}

impl std::str::FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" | "sigmoid" => Ok(Self::Logistic),
            "exp" => Ok(Self::Exp),
            "tanh" => Ok(Self::Tanh),
            _ => {
                let parse = |t: &str| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad affine transform `{s}`")))
                };
                match s.strip_prefix("affine:").and_then(|r| r.split_once(',')) {
                    Some((a, b)) => Ok(Self::Affine {
                        scale: parse(a)?,
                        shift: parse(b)?,
                    }),
                    None => Err(Error::Config(format!(
                        "unknown transform `{s}` (expected logistic, exp, tanh or affine:SCALE,SHIFT)"
                    ))),
                }
            }
        }
    }
}

/// The chain `G` applied to model outputs, first element first.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TransformChain(pub Vec<Transform>);

impl TransformChain {
    pub fn identity() -> Self {
        Self(Vec::new())
    }

    pub fn is_identity(&self) -> bool {
        self.0.is_empty()
    }

    pub fn apply_in_place(&self, values: &mut [f64]) -> Result<()> {
        if self.0.is_empty() {
            return Ok(());
        }
        for (row, v) in values.iter_mut().enumerate() {
            for t in &self.0 {
                *v = t.apply(*v);
            }
            if !v.is_finite() {
                return Err(Error::Model {
                    row,
                    message: "transformed output is not finite".into(),
                });
            }
        }
        Ok(())
    }
}
