//! Row pairings between explicand and baseline.
//!
//! The aligned baseline row stands in for an explicand row whenever that
//! row's cells are absent from a coalition, and it is the origin of the
//! integration path.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::DriftMetricId;
use crate::model::{predict_batch, Model};
use crate::sample::{Sample, SamplePair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentPolicy {
    /// Pair rows of equal rank after sorting each sample by prediction.
    SortedPrediction,
    /// Pair row `i` with row `i`.
    Identity,
    /// A uniformly random pairing drawn from a seeded generator.
    Sampled,
}

impl AlignmentPolicy {
    /// Sorted alignment for W1, whose value is the cost of exactly that
    /// transport plan; identity for everything else.
    pub fn default_for(metric: DriftMetricId) -> Self {
        match metric {
            DriftMetricId::W1 => Self::SortedPrediction,
            _ => Self::Identity,
        }
    }
}

impl fmt::Display for AlignmentPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::SortedPrediction => "sorted",
            Self::Identity => "identity",
            Self::Sampled => "sampled",
        })
    }
}

impl FromStr for AlignmentPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sorted" | "sorted_prediction" => Ok(Self::SortedPrediction),
            "identity" => Ok(Self::Identity),
            "sampled" => Ok(Self::Sampled),
            _ => Err(Error::Config(format!(
                "unknown alignment `{s}` (expected sorted, identity or sampled)"
            ))),
        }
    }
}

/// `permutation[i]` is the baseline row aligned to explicand row `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub permutation: Vec<usize>,
    pub policy: AlignmentPolicy,
}

impl Alignment {
    pub fn identity(m: usize) -> Self {
        Self {
            permutation: (0..m).collect(),
            policy: AlignmentPolicy::Identity,
        }
    }

    /// Baseline rows reordered so row `i` pairs with explicand row `i`.
    pub fn apply(&self, baseline: &Sample) -> Result<Sample> {
        baseline.select_rows(&self.permutation)
    }
}

/// Row indices ordered by value, ties broken by index.
fn rank_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    idx
}

/// Pairs equal ranks of two prediction vectors of the same length.
pub fn sorted_permutation(explicand_preds: &[f64], baseline_preds: &[f64]) -> Vec<usize> {
    let e = rank_order(explicand_preds);
    let b = rank_order(baseline_preds);
    let mut perm = vec![0; e.len()];
    for (&ei, &bi) in e.iter().zip(&b) {
        perm[ei] = bi;
    }
    perm
}

/// Computes the alignment for a validated pair. `seed` is required for the
/// sampled policy.
pub fn align(
    pair: &SamplePair,
    model: &dyn Model,
    policy: AlignmentPolicy,
    seed: Option<u64>,
) -> Result<Alignment> {
    let m = pair.explicand.nrows();
    let permutation = match policy {
        AlignmentPolicy::Identity => (0..m).collect(),
        AlignmentPolicy::SortedPrediction => {
            let pe = predict_batch(model, pair.explicand.values())?;
            let pb = predict_batch(model, pair.baseline.values())?;
            sorted_permutation(&pe, &pb)
        }
        AlignmentPolicy::Sampled => {
            let seed = seed.ok_or_else(|| {
                Error::Config("sampled alignment requires a seed".into())
            })?;
            let mut perm: Vec<usize> = (0..m).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            perm
        }
    };
    Ok(Alignment {
        permutation,
        policy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::wasserstein1;
    use crate::model::FnModel;
    use crate::sample::validate_pair;
    use proptest::prelude::*;

    fn one_feature(values: &[f64]) -> Sample {
        Sample::from_rows(&values.iter().map(|&v| vec![v]).collect::<Vec<_>>(), &["p"]).unwrap()
    }

    #[test]
    fn sorted_example() {
        // Explicand ranks: row1 < row2 < row0; baseline ranks: row0 < row2 < row1.
        assert_eq!(sorted_permutation(&[5.0, 1.0, 3.0], &[2.0, 9.0, 4.0]), [1, 0, 2]);
    }

    #[test]
    fn single_row_and_identical_samples() {
        let id = FnModel::new(|r| r[0]);
        let pair = validate_pair(one_feature(&[3.0]), one_feature(&[7.0])).unwrap();
        for policy in [
            AlignmentPolicy::SortedPrediction,
            AlignmentPolicy::Identity,
            AlignmentPolicy::Sampled,
        ] {
            assert_eq!(align(&pair, &id, policy, Some(1)).unwrap().permutation, [0]);
        }
        let s = one_feature(&[2.0, 2.0, 1.0, 2.0]);
        let pair = validate_pair(s.clone(), s).unwrap();
        let a = align(&pair, &id, AlignmentPolicy::SortedPrediction, None).unwrap();
        assert_eq!(a.permutation, [0, 1, 2, 3]);
    }

    #[test]
    fn sampled_needs_seed_and_is_reproducible() {
        let id = FnModel::new(|r| r[0]);
        let s = one_feature(&(0..50).map(f64::from).collect::<Vec<_>>());
        let pair = validate_pair(s.clone(), s).unwrap();
        assert!(align(&pair, &id, AlignmentPolicy::Sampled, None).is_err());
        let a = align(&pair, &id, AlignmentPolicy::Sampled, Some(9)).unwrap();
        let b = align(&pair, &id, AlignmentPolicy::Sampled, Some(9)).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn sorted_alignment_realizes_w1(
            (a, b) in (1usize..30).prop_flat_map(|n| (
                prop::collection::vec(-50.0f64..50.0, n),
                prop::collection::vec(-50.0f64..50.0, n),
            ))
        ) {
            let perm = sorted_permutation(&a, &b);
            let mut seen = perm.clone();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..a.len()).collect::<Vec<_>>());
            let cost = a.iter().enumerate().map(|(i, x)| (x - b[perm[i]]).abs()).sum::<f64>()
                / a.len() as f64;
            let w = wasserstein1(&a, &b).unwrap();
            prop_assert!((cost - w).abs() <= 1e-9 * (1.0 + w));
        }
    }
}
