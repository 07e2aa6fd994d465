//! Bootstrap estimates of drift and attributions for samples of unequal or
//! large size.
//!
//! Each repetition draws `k` rows with replacement from each sample, so the
//! two draws are equal-shaped and can be compared row by row. Repetition `r`
//! uses stream `r` of the seeded generator; results do not depend on the
//! number of worker threads.
//!
//! Resampling treats every row alike. If row groups (days, regions, ...)
//! appear in very different proportions in the two samples, aggregate drift
//! can mislead; [`proportion_diagnostic`] flags such cases.

use std::collections::HashMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribute::{attribute, AttributeOptions};
use crate::error::{Error, Result};
use crate::groups::GroupSpec;
use crate::metrics::{drift, DriftMetricId};
use crate::model::{predict_batch, Model, ModelFn};
use crate::report::{AttributionReport, GroupAttribution};
use crate::sample::{validate_pair, Sample};
use crate::shapley::ContextOptions;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Rows drawn from each sample per repetition. Defaults to
    /// `min(m1, m2, 1000)`.
    pub resample_size: Option<usize>,
    pub repetitions: usize,
    pub level: f64,
    pub seed: Option<u64>,
    /// Refuse to run without a seed.
    pub deterministic: bool,
    /// Sanity ceiling on `resample_size`.
    pub max_resample: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resample_size: None,
            repetitions: 100,
            level: 0.95,
            seed: None,
            deterministic: true,
            max_resample: 1_000_000,
        }
    }
}

impl BootstrapConfig {
    fn resolve(&self, m1: usize, m2: usize) -> Result<(usize, u64)> {
        if m1 == 0 || m2 == 0 {
            return Err(Error::EmptyInput);
        }
        let k = self.resample_size.unwrap_or(m1.min(m2).min(1000));
        if k == 0 {
            return Err(Error::Config("resample size must be at least 1".into()));
        }
        if k > self.max_resample {
            return Err(Error::Config(format!(
                "resample size {k} exceeds the ceiling of {}",
                self.max_resample
            )));
        }
        if self.repetitions < 2 {
            return Err(Error::Config("bootstrap needs at least 2 repetitions".into()));
        }
        if !(0.0 < self.level && self.level < 1.0) {
            return Err(Error::Config(format!(
                "confidence level must lie in (0, 1), got {}",
                self.level
            )));
        }
        let seed = match (self.seed, self.deterministic) {
            (Some(s), _) => s,
            (None, true) => {
                return Err(Error::Config(
                    "deterministic bootstrap requires a seed".into(),
                ))
            }
            (None, false) => rand::rng().next_u64(),
        };
        Ok((k, seed))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapEstimate {
    pub mean: f64,
    pub ci: (f64, f64),
    /// Standard deviation of the replicates over `sqrt(R)`.
    pub std_error: f64,
    pub level: f64,
    pub repetitions: usize,
    pub resample_size: usize,
    pub seed: u64,
    /// Set when the interval endpoints had to be clamped to the extreme
    /// replicates, i.e. `R` is too small for the requested level.
    pub low_confidence: bool,
    pub replicates: Vec<f64>,
}

/// Percentile of sorted replicates using the `(R + 1) p` order-statistic
/// position with linear interpolation. Returns the value and whether the
/// position fell outside `[1, R]` and was clamped.
pub(crate) fn percentile(sorted: &[f64], p: f64) -> (f64, bool) {
    let r = sorted.len();
    let pos = (r + 1) as f64 * p;
    if pos < 1.0 {
        return (sorted[0], true);
    }
    if pos > r as f64 {
        return (sorted[r - 1], true);
    }
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo == r {
        return (sorted[r - 1], false);
    }
    (sorted[lo - 1] + frac * (sorted[lo] - sorted[lo - 1]), false)
}

fn summarize(replicates: Vec<f64>, level: f64, k: usize, seed: u64) -> BootstrapEstimate {
    let r = replicates.len() as f64;
    let mean = replicates.iter().sum::<f64>() / r;
    let var = replicates.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
    let mut sorted = replicates.clone();
    sorted.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    let (low, c1) = percentile(&sorted, alpha);
    let (high, c2) = percentile(&sorted, 1.0 - alpha);
    BootstrapEstimate {
        mean,
        ci: (low, high),
        std_error: (var / r).sqrt(),
        level,
        repetitions: replicates.len(),
        resample_size: k,
        seed,
        low_confidence: c1 || c2,
        replicates,
    }
}

fn draw_indices(rng: &mut ChaCha8Rng, k: usize, m: usize) -> Vec<usize> {
    (0..k).map(|_| rng.random_range(0..m)).collect()
}

fn repetition_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

/// Bootstrap mean and percentile interval of the prediction drift between
/// two samples of possibly different sizes.
pub fn bootstrap_drift(
    explicand: &Sample,
    baseline: &Sample,
    model: &dyn Model,
    metric: DriftMetricId,
    opts: &ContextOptions,
    cfg: &BootstrapConfig,
) -> Result<BootstrapEstimate> {
    let (k, seed) = cfg.resolve(explicand.nrows(), baseline.nrows())?;
    if explicand.feature_names() != baseline.feature_names() {
        // Reuse the pair validation for its feature-mismatch diagnostics.
        validate_pair(explicand.select_rows(&[0])?, baseline.select_rows(&[0])?)?;
    }
    let mut pe = predict_batch(model, explicand.values())?;
    opts.transforms.apply_in_place(&mut pe)?;
    let mut pb = predict_batch(model, baseline.values())?;
    opts.transforms.apply_in_place(&mut pb)?;

    let replicates: Vec<f64> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| {
            let mut rng = repetition_rng(seed, rep);
            let a: Vec<f64> = draw_indices(&mut rng, k, pe.len()).into_iter().map(|i| pe[i]).collect();
            let b: Vec<f64> = draw_indices(&mut rng, k, pb.len()).into_iter().map(|i| pb[i]).collect();
            drift(metric, &a, &b, &opts.hist)
        })
        .collect::<Result<_>>()?;
    Ok(summarize(replicates, cfg.level, k, seed))
}

/// How groups are laid out on a resampled explicand.
#[derive(Debug, Clone, PartialEq)]
pub enum GroupTemplate {
    PerFeature,
    /// `labels[i]` is the label of explicand row `i`.
    RowLabels { column: String, labels: Vec<String> },
    FeaturesByRowLabels { column: String, labels: Vec<String> },
}

impl GroupTemplate {
    fn distinct_labels(labels: &[String]) -> Vec<String> {
        let mut seen = Vec::new();
        for l in labels {
            if !seen.contains(l) {
                seen.push(l.clone());
            }
        }
        seen
    }

    /// Names of every group that can appear, in report order.
    pub fn names(&self, feature_names: &[String]) -> Vec<String> {
        match self {
            Self::PerFeature => feature_names.to_vec(),
            Self::RowLabels { column, labels } => Self::distinct_labels(labels)
                .into_iter()
                .map(|l| format!("{column}={l}"))
                .collect(),
            Self::FeaturesByRowLabels { column, labels } => {
                let distinct = Self::distinct_labels(labels);
                feature_names
                    .iter()
                    .flat_map(|f| distinct.iter().map(move |l| format!("{f}:{column}={l}")))
                    .collect()
            }
        }
    }

    /// Groups for a sample made of explicand rows `rows`.
    pub fn instantiate(&self, rows: &[usize], feature_names: &[String]) -> Result<GroupSpec> {
        match self {
            Self::PerFeature => GroupSpec::per_feature(rows.len(), feature_names),
            Self::RowLabels { column, labels } => {
                let picked: Vec<String> = rows.iter().map(|&i| labels[i].clone()).collect();
                GroupSpec::by_row_labels(column, &picked, feature_names.len())
            }
            Self::FeaturesByRowLabels { column, labels } => {
                let picked: Vec<String> = rows.iter().map(|&i| labels[i].clone()).collect();
                GroupSpec::features_by_row_labels(column, &picked, feature_names)
            }
        }
    }

    fn check(&self, rows: usize) -> Result<()> {
        match self {
            Self::PerFeature => Ok(()),
            Self::RowLabels { labels, .. } | Self::FeaturesByRowLabels { labels, .. } => {
                if labels.len() == rows {
                    Ok(())
                } else {
                    Err(Error::LengthMismatch {
                        what: "row labels",
                        expected: rows,
                        actual: labels.len(),
                    })
                }
            }
        }
    }
}

/// Bootstrap mean and percentile interval of each group's attribution.
///
/// A group whose rows are all missing from a repetition's draw is a player
/// with no cells and counts as 0 in that repetition.
pub fn bootstrap_attributions(
    explicand: &Sample,
    baseline: &Sample,
    model: ModelFn,
    metric: DriftMetricId,
    template: &GroupTemplate,
    opts: &AttributeOptions,
    cfg: &BootstrapConfig,
) -> Result<AttributionReport> {
    let (k, seed) = cfg.resolve(explicand.nrows(), baseline.nrows())?;
    template.check(explicand.nrows())?;
    let names = template.names(explicand.feature_names());

    let reports: Vec<AttributionReport> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| {
            let mut rng = repetition_rng(seed, rep);
            let ei = draw_indices(&mut rng, k, explicand.nrows());
            let bi = draw_indices(&mut rng, k, baseline.nrows());
            let pair = validate_pair(explicand.select_rows(&ei)?, baseline.select_rows(&bi)?)?;
            let spec = template.instantiate(&ei, explicand.feature_names())?;
            attribute(pair, model.clone(), metric, &spec, opts)
        })
        .collect::<Result<_>>()?;

    let per_rep: Vec<HashMap<&str, f64>> = reports
        .iter()
        .map(|r| r.per_group.iter().map(|g| (g.group.as_str(), g.attribution)).collect())
        .collect();
    let per_group = names
        .iter()
        .map(|name| {
            let reps: Vec<f64> = per_rep
                .iter()
                .map(|m| m.get(name.as_str()).copied().unwrap_or(0.0))
                .collect();
            let est = summarize(reps, cfg.level, k, seed);
            GroupAttribution {
                group: name.clone(),
                attribution: est.mean,
                ci: Some(est.ci),
            }
        })
        .collect();
    let totals = summarize(reports.iter().map(|r| r.total_drift).collect(), cfg.level, k, seed);

    let mut estimator = reports[0].estimator.clone();
    estimator.seed = Some(seed);
    estimator.ci_level = Some(cfg.level);
    estimator.bootstrap_repetitions = Some(cfg.repetitions);
    estimator.bootstrap_resample_size = Some(k);
    estimator.efficiency_residual = Some(
        reports
            .iter()
            .filter_map(|r| r.estimator.efficiency_residual)
            .sum::<f64>()
            / reports.len() as f64,
    );
    Ok(AttributionReport {
        per_group,
        total_drift: totals.mean,
        metric,
        method: reports[0].method,
        estimator,
    })
}

/// A row label whose share differs between the two samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionWarning {
    pub label: String,
    pub explicand_fraction: f64,
    pub baseline_fraction: f64,
}

/// Default threshold for [`proportion_diagnostic`]: 10 percentage points.
pub const PROPORTION_THRESHOLD: f64 = 0.10;

/// Labels whose row fraction differs by more than `threshold` between the
/// samples. Each finding is also logged as a warning.
pub fn proportion_diagnostic(
    explicand_labels: &[String],
    baseline_labels: &[String],
    threshold: f64,
) -> Vec<ProportionWarning> {
    let fractions = |labels: &[String]| {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for l in labels {
            *counts.entry(l.as_str()).or_default() += 1;
        }
        let n = labels.len().max(1) as f64;
        counts
            .into_iter()
            .map(|(k, c)| (k.to_string(), c as f64 / n))
            .collect::<HashMap<_, _>>()
    };
    let fe = fractions(explicand_labels);
    let fb = fractions(baseline_labels);
    let mut labels: Vec<&String> = fe.keys().chain(fb.keys()).collect();
    labels.sort();
    labels.dedup();
    labels
        .into_iter()
        .filter_map(|l| {
            let e = fe.get(l).copied().unwrap_or(0.0);
            let b = fb.get(l).copied().unwrap_or(0.0);
            ((e - b).abs() > threshold).then(|| {
                log::warn!(
                    "label {l} makes up {:.1}% of the explicand but {:.1}% of the baseline",
                    100.0 * e,
                    100.0 * b
                );
                ProportionWarning {
                    label: l.clone(),
                    explicand_fraction: e,
                    baseline_fraction: b,
                }
            })
        })
        .collect()
}
