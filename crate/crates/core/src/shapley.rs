//! GroupShapley: Shapley attribution of a drift value to groups of cells.
//!
//! The value of a coalition `S` is the drift between predictions on a
//! hybrid sample, where cells of groups in `S` come from the explicand and
//! all other cells from the aligned baseline, and predictions on the
//! aligned baseline itself:
//!
//! ```text
//! v(S) = D(G(F(hybrid(S))), G(F(baseline)))
//! ```
//!
//! so `v(empty) = 0` and `v(all) = D(G(F(explicand)), G(F(baseline)))`.

use std::collections::HashMap;
use std::sync::RwLock;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::alignment::{align, Alignment, AlignmentPolicy};
use crate::error::{Error, Result};
use crate::groups::GroupSpec;
use crate::metrics::{DriftMetricId, HistogramConfig, Reference};
use crate::model::{predict_batch, Model, ModelFn, TransformChain};
use crate::report::{AttributionReport, EstimatorMeta, GroupAttribution, Method};
use crate::sample::{Sample, SamplePair};

/// Largest group count accepted by [`shapley_exact`].
pub const DEFAULT_EXACT_LIMIT: usize = 20;

/// Upper bound on cached per-row-class predictions (number of `f64`s).
const TABLE_BUDGET: usize = 1 << 23;

/// Everything a coalition value depends on, fixed for one attribution run.
#[derive(Clone)]
pub struct ValueFunctionContext {
    explicand: Sample,
    aligned_baseline: Sample,
    alignment: Alignment,
    model: ModelFn,
    transforms: TransformChain,
    metric: DriftMetricId,
    hist: HistogramConfig,
    reference: Reference,
    total_drift: f64,
}

impl std::fmt::Debug for ValueFunctionContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ValueFunctionContext")
            .field("shape", &self.explicand.values().dim())
            .field("metric", &self.metric)
            .field("alignment", &self.alignment.policy)
            .field("transforms", &self.transforms)
            .finish_non_exhaustive()
    }
}

/// Knobs for building a [`ValueFunctionContext`].
#[derive(Debug, Clone, Default)]
pub struct ContextOptions {
    /// Defaults to [`AlignmentPolicy::default_for`] the metric.
    pub alignment: Option<AlignmentPolicy>,
    pub alignment_seed: Option<u64>,
    pub transforms: TransformChain,
    pub hist: HistogramConfig,
}

impl ValueFunctionContext {
    pub fn new(
        pair: SamplePair,
        model: ModelFn,
        metric: DriftMetricId,
        opts: &ContextOptions,
    ) -> Result<Self> {
        let policy = opts
            .alignment
            .unwrap_or_else(|| AlignmentPolicy::default_for(metric));
        let alignment = align(&pair, model.as_ref(), policy, opts.alignment_seed)?;
        Self::with_alignment(
            pair,
            model,
            metric,
            alignment,
            opts.transforms.clone(),
            opts.hist,
        )
    }

    pub fn with_alignment(
        pair: SamplePair,
        model: ModelFn,
        metric: DriftMetricId,
        alignment: Alignment,
        transforms: TransformChain,
        hist: HistogramConfig,
    ) -> Result<Self> {
        let m = pair.explicand.nrows();
        if alignment.permutation.len() != m {
            return Err(Error::LengthMismatch {
                what: "alignment entries",
                expected: m,
                actual: alignment.permutation.len(),
            });
        }
        let mut seen = vec![false; m];
        for &p in &alignment.permutation {
            if p >= m || std::mem::replace(&mut seen[p], true) {
                return Err(Error::Config("alignment is not a permutation".into()));
            }
        }
        let aligned_baseline = alignment.apply(&pair.baseline)?;
        let mut base_out = predict_batch(model.as_ref(), aligned_baseline.values())?;
        transforms.apply_in_place(&mut base_out)?;
        let reference = Reference::new(metric, hist, base_out);

        let mut expl_out = predict_batch(model.as_ref(), pair.explicand.values())?;
        transforms.apply_in_place(&mut expl_out)?;
        let total_drift = reference.drift_from(&expl_out)?;

        Ok(Self {
            explicand: pair.explicand,
            aligned_baseline,
            alignment,
            model,
            transforms,
            metric,
            hist,
            reference,
            total_drift,
        })
    }

    pub fn explicand(&self) -> &Sample {
        &self.explicand
    }

    pub fn aligned_baseline(&self) -> &Sample {
        &self.aligned_baseline
    }

    pub fn alignment(&self) -> &Alignment {
        &self.alignment
    }

    pub fn model(&self) -> &dyn Model {
        self.model.as_ref()
    }

    pub fn transforms(&self) -> &TransformChain {
        &self.transforms
    }

    pub fn metric(&self) -> DriftMetricId {
        self.metric
    }

    pub fn histogram(&self) -> HistogramConfig {
        self.hist
    }

    /// `G(F(aligned baseline))`.
    pub fn baseline_outputs(&self) -> &[f64] {
        self.reference.values()
    }

    pub(crate) fn baseline_sorted(&self) -> &[f64] {
        self.reference.sorted_values()
    }

    /// `D(G(F(explicand)), G(F(aligned baseline)))`.
    pub fn total_drift(&self) -> f64 {
        self.total_drift
    }

    /// Drift of arbitrary transformed outputs against the baseline outputs.
    pub fn drift_of_outputs(&self, outputs: &[f64]) -> Result<f64> {
        self.reference.drift_from(outputs)
    }

    /// `G(F(batch))`.
    pub fn outputs(&self, batch: ndarray::ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let mut out = predict_batch(self.model.as_ref(), batch)?;
        self.transforms.apply_in_place(&mut out)?;
        Ok(out)
    }

    fn check_spec(&self, spec: &GroupSpec) -> Result<()> {
        if spec.shape() != self.explicand.values().dim() {
            return Err(Error::InvalidGroups(format!(
                "groups describe a {:?} sample but the explicand is {:?}",
                spec.shape(),
                self.explicand.values().dim()
            )));
        }
        Ok(())
    }
}

/// A set of group indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Coalition(Vec<u64>);

impl Coalition {
    pub fn empty(groups: usize) -> Self {
        Self(vec![0; groups.div_ceil(64).max(1)])
    }

    pub fn from_indices(groups: usize, members: &[usize]) -> Self {
        let mut c = Self::empty(groups);
        for &g in members {
            c.insert(g);
        }
        c
    }

    fn from_mask(groups: usize, mask: u64) -> Self {
        let mut c = Self::empty(groups);
        c.0[0] = mask;
        c
    }

    pub fn insert(&mut self, g: usize) {
        self.0[g / 64] |= 1 << (g % 64);
    }

    pub fn contains(&self, g: usize) -> bool {
        self.0.get(g / 64).is_some_and(|w| w >> (g % 64) & 1 == 1)
    }
}

/// Rows whose cells belong to the same groups, feature by feature. Within a
/// class, the hybrid rows for a coalition are determined by which of the
/// class's groups are present.
struct RowClass {
    rows: Vec<usize>,
    groups: Vec<usize>,
    /// For each feature, the position in `groups` of the cell owner.
    local: Vec<usize>,
}

/// Coalition values for one context and one group partition.
pub(crate) struct CoalitionGame<'a> {
    ctx: &'a ValueFunctionContext,
    spec: &'a GroupSpec,
    classes: Vec<RowClass>,
    /// `table[c][mask]`: transformed outputs for the rows of class `c` when
    /// the class-local groups in `mask` are present.
    table: Option<Vec<Vec<Vec<f64>>>>,
}

impl<'a> CoalitionGame<'a> {
    pub(crate) fn new(ctx: &'a ValueFunctionContext, spec: &'a GroupSpec) -> Result<Self> {
        ctx.check_spec(spec)?;
        let (m, n) = spec.shape();
        let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut classes: Vec<RowClass> = Vec::new();
        for i in 0..m {
            let sig: Vec<usize> = (0..n).map(|j| spec.owner(i, j)).collect();
            let c = *index.entry(sig.clone()).or_insert_with(|| {
                let mut groups = sig.clone();
                groups.sort_unstable();
                groups.dedup();
                let local = sig
                    .iter()
                    .map(|g| groups.binary_search(g).expect("owner listed"))
                    .collect();
                classes.push(RowClass {
                    rows: Vec::new(),
                    groups,
                    local,
                });
                classes.len() - 1
            });
            classes[c].rows.push(i);
        }

        let cost = classes.iter().try_fold(0usize, |acc, c| {
            let masks = 1usize.checked_shl(c.groups.len() as u32)?;
            acc.checked_add(c.rows.len().checked_mul(masks)?)
        });
        let mut game = Self {
            ctx,
            spec,
            classes,
            table: None,
        };
        if cost.is_some_and(|c| c <= TABLE_BUDGET) {
            game.table = Some(game.build_table()?);
        }
        Ok(game)
    }

    fn build_table(&self) -> Result<Vec<Vec<Vec<f64>>>> {
        let expl = self.ctx.explicand.values();
        let base = self.ctx.aligned_baseline.values();
        let n = expl.ncols();
        self.classes
            .iter()
            .map(|class| {
                let k = class.groups.len();
                let mut batch = Array2::zeros((class.rows.len() << k, n));
                for mask in 0..1usize << k {
                    for (r, &i) in class.rows.iter().enumerate() {
                        let out_row = (mask * class.rows.len()) + r;
                        for j in 0..n {
                            let from_expl = mask >> class.local[j] & 1 == 1;
                            batch[[out_row, j]] = if from_expl {
                                expl[[i, j]]
                            } else {
                                base[[i, j]]
                            };
                        }
                    }
                }
                let out = self.ctx.outputs(batch.view())?;
                Ok(out
                    .chunks(class.rows.len())
                    .map(<[f64]>::to_vec)
                    .collect())
            })
            .collect()
    }

    pub(crate) fn n_groups(&self) -> usize {
        self.spec.len()
    }

    pub(crate) fn value(&self, coalition: &Coalition) -> Result<f64> {
        let outputs = match &self.table {
            Some(table) => {
                let mut out = vec![0.0; self.ctx.explicand.nrows()];
                for (class, masks) in self.classes.iter().zip(table) {
                    let mask = class
                        .groups
                        .iter()
                        .enumerate()
                        .filter(|(_, &g)| coalition.contains(g))
                        .fold(0usize, |acc, (bit, _)| acc | 1 << bit);
                    for (&i, &v) in class.rows.iter().zip(&masks[mask]) {
                        out[i] = v;
                    }
                }
                out
            }
            None => {
                let mut hybrid = self.ctx.aligned_baseline.values().to_owned();
                let expl = self.ctx.explicand.values();
                for (g, group) in self.spec.groups().iter().enumerate() {
                    if coalition.contains(g) {
                        for &i in &group.rows {
                            for &j in &group.features {
                                hybrid[[i, j]] = expl[[i, j]];
                            }
                        }
                    }
                }
                self.ctx.outputs(hybrid.view())?
            }
        };
        self.ctx.drift_of_outputs(&outputs)
    }
}

/// Value of a coalition of group indices.
pub fn coalition_value(
    ctx: &ValueFunctionContext,
    coalition: &[usize],
    spec: &GroupSpec,
) -> Result<f64> {
    if let Some(&g) = coalition.iter().find(|&&g| g >= spec.len()) {
        return Err(Error::InvalidGroups(format!(
            "coalition member {g} out of range for {} groups",
            spec.len()
        )));
    }
    let game = CoalitionGame::new(ctx, spec)?;
    game.value(&Coalition::from_indices(spec.len(), coalition))
}

/// `|S|! (G - |S| - 1)! / G!` for every coalition size `|S|`.
pub(crate) fn shapley_weights(groups: usize) -> Vec<f64> {
    // 1 / (G * C(G-1, s)) keeps every factor an exact small integer.
    let mut binom = 1.0;
    (0..groups)
        .map(|s| {
            if s > 0 {
                binom = binom * (groups - s) as f64 / s as f64;
            }
            1.0 / (groups as f64 * binom)
        })
        .collect()
}

/// Exact Shapley values over all `2^G` coalitions.
pub fn shapley_exact(ctx: &ValueFunctionContext, spec: &GroupSpec) -> Result<AttributionReport> {
    shapley_exact_with_limit(ctx, spec, DEFAULT_EXACT_LIMIT)
}

pub fn shapley_exact_with_limit(
    ctx: &ValueFunctionContext,
    spec: &GroupSpec,
    exact_limit: usize,
) -> Result<AttributionReport> {
    let g = spec.len();
    if g > exact_limit.min(30) {
        return Err(Error::TooManyGroups {
            groups: g,
            limit: exact_limit.min(30),
        });
    }
    let game = CoalitionGame::new(ctx, spec)?;
    let values: Vec<f64> = (0..1u64 << g)
        .into_par_iter()
        .map(|mask| game.value(&Coalition::from_mask(g, mask)))
        .collect::<Result<_>>()?;
    let weights = shapley_weights(g);
    let phi: Vec<f64> = (0..g)
        .map(|i| {
            let bit = 1usize << i;
            (0..values.len())
                .filter(|mask| mask & bit == 0)
                .map(|mask| {
                    weights[mask.count_ones() as usize] * (values[mask | bit] - values[mask])
                })
                .sum()
        })
        .collect();

    let total = ctx.total_drift();
    let residual = total - phi.iter().sum::<f64>();
    Ok(AttributionReport {
        per_group: spec
            .groups()
            .iter()
            .zip(phi)
            .map(|(grp, a)| GroupAttribution {
                group: grp.name.clone(),
                attribution: a,
                ci: None,
            })
            .collect(),
        total_drift: total,
        metric: ctx.metric(),
        method: Method::ShapleyExact,
        estimator: EstimatorMeta {
            alignment: Some(ctx.alignment().policy),
            efficiency_residual: Some(residual),
            ..Default::default()
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SamplingConfig {
    pub permutations: usize,
    pub seed: u64,
    /// Confidence level of the per-group intervals.
    pub ci_level: f64,
    /// Pair every even-indexed ordering with its reverse.
    #[serde(default = "yes")]
    pub antithetic: bool,
}

fn yes() -> bool {
    true
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            permutations: 1000,
            seed: 0,
            ci_level: 0.95,
            antithetic: true,
        }
    }
}

/// Two-sided standard normal quantile for a confidence level.
pub(crate) fn normal_quantile(level: f64) -> Result<f64> {
    if !(0.0 < level && level < 1.0) {
        return Err(Error::Config(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(n.inverse_cdf(0.5 + level / 2.0))
}

/// Monte Carlo Shapley values from uniformly random group orderings.
///
/// Permutation `p` draws its ordering from stream `p` of the seeded
/// generator, so results do not depend on the number of worker threads.
/// The sum of attributions is forced to equal the total drift by spreading
/// the residual in proportion to each group's standard error.
pub fn shapley_sampled(
    ctx: &ValueFunctionContext,
    spec: &GroupSpec,
    cfg: &SamplingConfig,
) -> Result<AttributionReport> {
    if cfg.permutations == 0 {
        return Err(Error::Config("need at least one permutation".into()));
    }
    let z = normal_quantile(cfg.ci_level)?;
    let game = CoalitionGame::new(ctx, spec)?;
    let g = game.n_groups();
    let memo: RwLock<HashMap<Coalition, f64>> = RwLock::new(HashMap::new());
    let cached = |c: &Coalition| -> Result<f64> {
        if let Some(&v) = memo.read().expect("memo lock").get(c) {
            return Ok(v);
        }
        let v = game.value(c)?;
        memo.write().expect("memo lock").insert(c.clone(), v);
        Ok(v)
    };

    let marginals: Vec<Vec<f64>> = (0..cfg.permutations)
        .into_par_iter()
        .map(|p| {
            let reversed = cfg.antithetic && p % 2 == 1;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(if reversed { p - 1 } else { p } as u64);
            let mut order: Vec<usize> = (0..g).collect();
            order.shuffle(&mut rng);
            if reversed {
                order.reverse();
            }
            let mut coalition = Coalition::empty(g);
            let mut prev = 0.0;
            let mut out = vec![0.0; g];
            for &grp in &order {
                coalition.insert(grp);
                let cur = cached(&coalition)?;
                out[grp] = cur - prev;
                prev = cur;
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let p = cfg.permutations as f64;
    let mean: Vec<f64> = (0..g)
        .map(|i| marginals.iter().map(|m| m[i]).sum::<f64>() / p)
        .collect();
    // Antithetic pairs are correlated; the standard error is taken over
    // pair averages, which are independent.
    let unit = if cfg.antithetic { 2 } else { 1 };
    let units: Vec<Vec<f64>> = marginals
        .chunks(unit)
        .map(|c| (0..g).map(|i| c.iter().map(|m| m[i]).sum::<f64>() / c.len() as f64).collect())
        .collect();
    let has_ci = units.len() >= 2;
    let u = units.len() as f64;
    let std_err: Vec<f64> = (0..g)
        .map(|i| {
            if !has_ci {
                return 0.0;
            }
            let center = units.iter().map(|m| m[i]).sum::<f64>() / u;
            let var = units.iter().map(|m| (m[i] - center).powi(2)).sum::<f64>() / (u - 1.0);
            (var / u).sqrt()
        })
        .collect();

    let total = ctx.total_drift();
    let residual = total - mean.iter().sum::<f64>();
    let se_sum: f64 = std_err.iter().sum();
    let corrected: Vec<f64> = mean
        .iter()
        .zip(&std_err)
        .map(|(m, se)| {
            if se_sum > 0.0 {
                m + residual * se / se_sum
            } else {
                m + residual / g as f64
            }
        })
        .collect();

    Ok(AttributionReport {
        per_group: spec
            .groups()
            .iter()
            .zip(corrected.iter().zip(&std_err))
            .map(|(grp, (&a, &se))| GroupAttribution {
                group: grp.name.clone(),
                attribution: a,
                ci: has_ci.then(|| (a - z * se, a + z * se)),
            })
            .collect(),
        total_drift: total,
        metric: ctx.metric(),
        method: Method::ShapleySampled,
        estimator: EstimatorMeta {
            permutations: Some(cfg.permutations),
            seed: Some(cfg.seed),
            alignment: Some(ctx.alignment().policy),
            efficiency_residual: Some(residual),
            ci_level: has_ci.then_some(cfg.ci_level),
            ..Default::default()
        },
    })
}
