//! Samples of feature vectors and the predictions made on them.

use std::collections::HashSet;
use std::ops::Deref;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An `m x n` matrix of finite feature values with named columns.
///
/// Row identifiers are carried for reporting only.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    values: Array2<f64>,
    feature_names: Vec<String>,
    row_ids: Vec<String>,
}

impl Sample {
    /// Builds a sample with default row identifiers `0..m`.
    pub fn new(values: Array2<f64>, feature_names: Vec<String>) -> Result<Self> {
        let row_ids = (0..values.nrows()).map(|i| i.to_string()).collect();
        Self::with_row_ids(values, feature_names, row_ids)
    }

    pub fn with_row_ids(
        values: Array2<f64>,
        feature_names: Vec<String>,
        row_ids: Vec<String>,
    ) -> Result<Self> {
        let (m, n) = values.dim();
        if m == 0 || n == 0 {
            return Err(Error::EmptySample { rows: m, cols: n });
        }
        if feature_names.len() != n {
            return Err(Error::LengthMismatch {
                what: "feature names",
                expected: n,
                actual: feature_names.len(),
            });
        }
        if row_ids.len() != m {
            return Err(Error::LengthMismatch {
                what: "row ids",
                expected: m,
                actual: row_ids.len(),
            });
        }
        let mut seen = HashSet::with_capacity(n);
        for (index, name) in feature_names.iter().enumerate() {
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateFeature {
                    name: name.clone(),
                    index,
                });
            }
        }
        check_finite(values.view())?;
        Ok(Self {
            values,
            feature_names,
            row_ids,
        })
    }

    /// Convenience constructor from row-major nested vectors.
    pub fn from_rows<S: AsRef<str>>(rows: &[Vec<f64>], feature_names: &[S]) -> Result<Self> {
        let n = feature_names.len();
        let m = rows.len();
        let mut flat = Vec::with_capacity(m * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::RaggedRow {
                    row: i,
                    expected: n,
                    found: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        let values = Array2::from_shape_vec((m, n), flat).expect("shape checked above");
        Self::new(
            values,
            feature_names.iter().map(|s| s.as_ref().to_string()).collect(),
        )
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|f| f == name)
    }

    /// A new sample made of the given rows, in the given order. Rows may repeat.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let values = self.values.select(ndarray::Axis(0), rows);
        let row_ids = rows.iter().map(|&r| self.row_ids[r].clone()).collect();
        Self::with_row_ids(values, self.feature_names.clone(), row_ids)
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }
}

pub(crate) fn check_finite(values: ArrayView2<'_, f64>) -> Result<()> {
    for ((row, col), v) in values.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite { row, col });
        }
    }
    Ok(())
}

/// Which sample a prediction vector was computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionSource {
    Explicand,
    Baseline,
    Hybrid,
}

/// Scalar model outputs, one per sample row.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionVector {
    values: Vec<f64>,
    source: PredictionSource,
}

impl PredictionVector {
    pub fn new(values: Vec<f64>, source: PredictionSource) -> Result<Self> {
        if let Some(row) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Model {
                row,
                message: "prediction is not finite".into(),
            });
        }
        Ok(Self { values, source })
    }

    pub fn source(&self) -> PredictionSource {
        self.source
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }
}

impl Deref for PredictionVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

/// An explicand and a baseline known to be comparable cell by cell.
#[derive(Debug, Clone)]
pub struct SamplePair {
    pub explicand: Sample,
    pub baseline: Sample,
}

/// Checks that two samples have identical shapes and feature names.
pub fn validate_pair(explicand: Sample, baseline: Sample) -> Result<SamplePair> {
    if explicand.values.dim() != baseline.values.dim() {
        return Err(Error::ShapeMismatch {
            explicand: explicand.values.dim(),
            baseline: baseline.values.dim(),
        });
    }
    if let Some(index) = explicand
        .feature_names
        .iter()
        .zip(&baseline.feature_names)
        .position(|(a, b)| a != b)
    {
        return Err(Error::FeatureMismatch {
            index,
            explicand: explicand.feature_names[index].clone(),
            baseline: baseline.feature_names[index].clone(),
        });
    }
    // Samples are validated on construction, but the fields are reachable
    // through `from_shape` paths in other modules.
    check_finite(explicand.values())?;
    check_finite(baseline.values())?;
    Ok(SamplePair {
        explicand,
        baseline,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn xyz() -> Vec<String> {
        vec!["x".into(), "y".into(), "z".into()]
    }

    #[test]
    fn rejects_nan() {
        let err = Sample::new(array![[1.0, f64::NAN, 0.0]], xyz()).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 0, col: 1 }));
    }

    #[test]
    fn rejects_duplicate_names_and_empty() {
        let err = Sample::new(array![[1.0, 2.0]], vec!["a".into(), "a".into()]).unwrap_err();
        assert!(matches!(err, Error::DuplicateFeature { index: 1, .. }));
        let err = Sample::new(Array2::zeros((0, 3)), xyz()).unwrap_err();
        assert!(matches!(err, Error::EmptySample { rows: 0, .. }));
    }

    #[test]
    fn pair_validation() {
        let a = Sample::new(Array2::zeros((3, 3)), xyz()).unwrap();
        let b = Sample::new(Array2::ones((3, 3)), xyz()).unwrap();
        assert!(validate_pair(a.clone(), b).is_ok());

        let short = Sample::new(Array2::ones((2, 3)), xyz()).unwrap();
        assert!(matches!(
            validate_pair(a.clone(), short),
            Err(Error::ShapeMismatch { .. })
        ));

        let renamed =
            Sample::new(Array2::ones((3, 3)), vec!["x".into(), "w".into(), "z".into()]).unwrap();
        assert!(matches!(
            validate_pair(a, renamed),
            Err(Error::FeatureMismatch { index: 1, .. })
        ));
    }

    #[test]
    fn joint_drift_table_pair_is_valid() {
        let reference = Sample::from_rows(
            &[vec![1.0, 1.0, 1.0], vec![2.0, 2.0, 2.0], vec![3.0, 3.0, 3.0]],
            &["x", "y", "z"],
        )
        .unwrap();
        let target = Sample::from_rows(
            &[vec![3.0, 1.0, 2.0], vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 1.0]],
            &["x", "y", "z"],
        )
        .unwrap();
        assert!(validate_pair(target, reference).is_ok());
    }
}
