//! GroupIG: straight-line path attribution of a drift value to groups.
//!
//! With `B` the aligned baseline, `S` the explicand and
//! `H(X) = D(G(F(X)), G(F(B)))`, each cell receives
//!
//! ```text
//! (S[i,j] - B[i,j]) * integral over a in [0, 1] of dH/dX[i,j] at B + a (S - B)
//! ```
//!
//! and a group receives the sum over its cells. Partials are central finite
//! differences of `H`; the integral uses the trapezoid rule.

use ndarray::{Array2, ArrayView2, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groups::GroupSpec;
use crate::metrics::DriftMetricId;
use crate::report::{AttributionReport, EstimatorMeta, GroupAttribution, Method};
use crate::shapley::ValueFunctionContext;

/// Smallest finite-difference step.
const FD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    /// Number of trapezoid intervals on `[0, 1]`.
    pub steps: usize,
    /// Finite-difference step relative to the cell magnitude.
    pub fd_epsilon: f64,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            steps: 64,
            fd_epsilon: 1e-5,
        }
    }
}

impl PathConfig {
    fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("path steps must be at least 1".into()));
        }
        if !(self.fd_epsilon > 0.0 && self.fd_epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "fd_epsilon must be positive, got {}",
                self.fd_epsilon
            )));
        }
        Ok(())
    }
}

fn require_differentiable(metric: DriftMetricId) -> Result<()> {
    if metric.capabilities().differentiable {
        Ok(())
    } else {
        Err(Error::NotDifferentiable {
            metric: metric.name(),
        })
    }
}

/// Change of `sum_k |a[k] - b[k]|` when the value at rank `r` of the sorted
/// vector `a` is replaced by `v` and `a` is re-sorted.
fn w1_replace_delta(a: &[f64], b: &[f64], r: usize, v: f64) -> f64 {
    let old = a[r];
    let mut d = 0.0;
    let rp;
    if v >= old {
        rp = r + a[r + 1..].partition_point(|&x| x < v);
        for k in r..rp {
            d += (a[k + 1] - b[k]).abs() - (a[k] - b[k]).abs();
        }
    } else {
        rp = a[..r].partition_point(|&x| x <= v);
        for k in rp + 1..=r {
            d += (a[k - 1] - b[k]).abs() - (a[k] - b[k]).abs();
        }
    }
    d + (v - b[rp]).abs() - (a[rp] - b[rp]).abs()
}

/// `dH/dX` at `x` for the cells where `mask` is true (zero elsewhere).
fn masked_gradient(
    ctx: &ValueFunctionContext,
    x: ArrayView2<'_, f64>,
    mask: &Array2<bool>,
    fd_epsilon: f64,
) -> Result<Array2<f64>> {
    let (m, n) = x.dim();
    let cells: Vec<(usize, usize)> = mask
        .indexed_iter()
        .filter(|(_, &on)| on)
        .map(|(ij, _)| ij)
        .collect();
    let mut grad = Array2::zeros((m, n));
    if cells.is_empty() {
        return Ok(grad);
    }

    let steps: Vec<f64> = cells
        .iter()
        .map(|&(i, j)| (fd_epsilon * x[[i, j]].abs()).max(FD_FLOOR))
        .collect();
    let mut batch = Array2::zeros((2 * cells.len(), n));
    for (c, (&(i, j), &h)) in cells.iter().zip(&steps).enumerate() {
        for (row, sign) in [(2 * c, 1.0), (2 * c + 1, -1.0)] {
            batch.row_mut(row).assign(&x.row(i));
            batch[[row, j]] += sign * h;
        }
    }
    let perturbed = ctx.outputs(batch.view())?;
    let scale = m as f64;

    match ctx.metric() {
        DriftMetricId::Evd => {
            for (c, (&(i, j), &h)) in cells.iter().zip(&steps).enumerate() {
                grad[[i, j]] = (perturbed[2 * c] - perturbed[2 * c + 1]) / (scale * 2.0 * h);
            }
        }
        DriftMetricId::W1 => {
            let current = ctx.outputs(x)?;
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &b| current[a].total_cmp(&current[b]).then(a.cmp(&b)));
            let mut rank = vec![0; m];
            for (r, &i) in order.iter().enumerate() {
                rank[i] = r;
            }
            let a: Vec<f64> = order.iter().map(|&i| current[i]).collect();
            let b = ctx.baseline_sorted();
            for (c, (&(i, j), &h)) in cells.iter().zip(&steps).enumerate() {
                let up = w1_replace_delta(&a, b, rank[i], perturbed[2 * c]);
                let down = w1_replace_delta(&a, b, rank[i], perturbed[2 * c + 1]);
                grad[[i, j]] = (up - down) / (scale * 2.0 * h);
            }
        }
        other => require_differentiable(other)?,
    }
    Ok(grad)
}

/// Central finite-difference gradient of `H` with respect to every cell of `x`.
pub fn composite_gradient(
    ctx: &ValueFunctionContext,
    x: ArrayView2<'_, f64>,
    fd_epsilon: f64,
) -> Result<Array2<f64>> {
    require_differentiable(ctx.metric())?;
    if x.dim() != ctx.explicand().values().dim() {
        return Err(Error::ShapeMismatch {
            explicand: ctx.explicand().values().dim(),
            baseline: x.dim(),
        });
    }
    masked_gradient(ctx, x, &Array2::from_elem(x.dim(), true), fd_epsilon)
}

/// Per-cell attributions, `(S - B) * average gradient along the path`.
pub fn cell_attributions(ctx: &ValueFunctionContext, cfg: &PathConfig) -> Result<Array2<f64>> {
    cfg.validate()?;
    require_differentiable(ctx.metric())?;
    let base = ctx.aligned_baseline().values();
    let delta = &ctx.explicand().values() - &base;
    let mask = delta.mapv(|d| d != 0.0);

    let at = |alpha: f64| -> Result<Array2<f64>> {
        let x = &base + &(&delta * alpha);
        masked_gradient(ctx, x.view(), &mask, cfg.fd_epsilon)
    };

    // H can have a kink at the path origin (W1 with identical predictions,
    // or min/abs models). Endpoint gradients are linearly extrapolated from
    // interior nodes so the kink is never differenced across.
    let n = cfg.steps;
    let avg = if n == 1 {
        at(0.5)?
    } else {
        let interior: Vec<Array2<f64>> = (1..n)
            .into_par_iter()
            .map(|k| at(k as f64 / n as f64))
            .collect::<Result<_>>()?;
        let (first, last) = if n == 2 {
            (interior[0].clone(), interior[0].clone())
        } else {
            (
                &interior[0] * 2.0 - &interior[1],
                &interior[n - 2] * 2.0 - &interior[n - 3],
            )
        };
        let mut sum = (&first + &last) * 0.5;
        for g in &interior {
            sum += g;
        }
        sum / n as f64
    };

    let mut out = Array2::zeros(delta.dim());
    Zip::from(&mut out)
        .and(&delta)
        .and(&avg)
        .for_each(|o, &d, &g| *o = if d == 0.0 { 0.0 } else { d * g });
    Ok(out)
}

/// GroupIG attributions. Rejects metrics that are not differentiable.
pub fn group_ig(
    ctx: &ValueFunctionContext,
    spec: &GroupSpec,
    cfg: &PathConfig,
) -> Result<AttributionReport> {
    require_differentiable(ctx.metric())?;
    if spec.shape() != ctx.explicand().values().dim() {
        return Err(Error::InvalidGroups(format!(
            "groups describe a {:?} sample but the explicand is {:?}",
            spec.shape(),
            ctx.explicand().values().dim()
        )));
    }
    let cells = cell_attributions(ctx, cfg)?;
    let per_group: Vec<GroupAttribution> = spec
        .groups()
        .iter()
        .map(|g| GroupAttribution {
            group: g.name.clone(),
            attribution: g
                .rows
                .iter()
                .flat_map(|&i| g.features.iter().map(move |&j| (i, j)))
                .map(|ij| cells[ij])
                .sum(),
            ci: None,
        })
        .collect();
    let total = ctx.total_drift();
    let residual = total - per_group.iter().map(|g| g.attribution).sum::<f64>();
    Ok(AttributionReport {
        per_group,
        total_drift: total,
        metric: ctx.metric(),
        method: Method::GroupIg,
        estimator: EstimatorMeta {
            steps: Some(cfg.steps),
            alignment: Some(ctx.alignment().policy),
            efficiency_residual: Some(residual),
            ..Default::default()
        },
    })
}

/// `|sum of attributions - total drift|`.
pub fn completeness_check(report: &AttributionReport, ctx: &ValueFunctionContext) -> f64 {
    (report.attribution_sum() - ctx.total_drift()).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ExprModel, ModelFn, Transform, TransformChain};
    use crate::sample::{validate_pair, Sample};
    use crate::shapley::ContextOptions;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn ctx(expr: &str, metric: DriftMetricId, transforms: TransformChain) -> ValueFunctionContext {
        let names = ["x", "y", "z"];
        let expl = Sample::from_rows(&[vec![1.0, 2.0, 3.0]], &names).unwrap();
        let base = Sample::from_rows(&[vec![0.0, 0.0, 0.0]], &names).unwrap();
        let model: ModelFn = Arc::new(ExprModel::parse(expr, &names).unwrap());
        ValueFunctionContext::new(
            validate_pair(expl, base).unwrap(),
            model,
            metric,
            &ContextOptions {
                transforms,
                ..Default::default()
            },
        )
        .unwrap()
    }

    fn spec() -> GroupSpec {
        GroupSpec::per_feature(1, &["x".into(), "y".into(), "z".into()]).unwrap()
    }

    #[test]
    fn rejects_non_differentiable_metrics() {
        for metric in [DriftMetricId::Jsd, DriftMetricId::Ks] {
            let c = ctx("x - y", metric, TransformChain::identity());
            assert!(matches!(
                group_ig(&c, &spec(), &PathConfig::default()),
                Err(Error::NotDifferentiable { .. })
            ));
        }
    }

    #[test]
    fn config_validation() {
        let c = ctx("x - y", DriftMetricId::Evd, TransformChain::identity());
        for cfg in [
            PathConfig { steps: 0, ..Default::default() },
            PathConfig { fd_epsilon: 0.0, ..Default::default() },
        ] {
            assert!(group_ig(&c, &spec(), &cfg).is_err());
        }
    }

    #[test]
    fn sign_flip_between_evd_and_w1() {
        let evd = group_ig(
            &ctx("x - y", DriftMetricId::Evd, TransformChain::identity()),
            &spec(),
            &PathConfig::default(),
        )
        .unwrap();
        let w1 = group_ig(
            &ctx("x - y", DriftMetricId::W1, TransformChain::identity()),
            &spec(),
            &PathConfig::default(),
        )
        .unwrap();
        for (a, b) in evd.attributions().iter().zip(w1.attributions()) {
            assert!((a + b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn min_follows_the_larger_interior_gradient() {
        // On the path min(x, y) = min(a, 2a) = a, so only x carries gradient.
        let r = group_ig(
            &ctx("min(x, y)", DriftMetricId::Evd, TransformChain::identity()),
            &spec(),
            &PathConfig::default(),
        )
        .unwrap();
        let a = r.attributions();
        assert!((a[0] - 1.0).abs() < 1e-6 && a[1].abs() < 1e-6 && a[2] == 0.0);
    }

    #[test]
    fn few_steps_still_work() {
        for steps in [1, 2, 3] {
            let c = ctx("x * y", DriftMetricId::Evd, TransformChain::identity());
            let r = group_ig(&c, &spec(), &PathConfig { steps, ..Default::default() }).unwrap();
            assert!(completeness_check(&r, &c) < 1e-6, "steps = {steps}");
        }
    }

    #[test]
    fn transforms_enter_the_gradient() {
        let g = TransformChain(vec![Transform::Affine { scale: 3.0, shift: 1.0 }]);
        let c = ctx("x - y", DriftMetricId::Evd, g);
        let r = group_ig(&c, &spec(), &PathConfig::default()).unwrap();
        let a = r.attributions();
        assert!((a[0] - 3.0).abs() < 1e-6 && (a[1] + 6.0).abs() < 1e-6);
    }

    fn w1_sum(a: &[f64], b: &[f64]) -> f64 {
        let mut a = a.to_vec();
        a.sort_by(f64::total_cmp);
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
    }

    proptest! {
        #[test]
        fn replace_delta_matches_resorting(
            (a, b, r, v) in (1usize..12).prop_flat_map(|n| (
                prop::collection::vec(-5.0f64..5.0, n),
                prop::collection::vec(-5.0f64..5.0, n),
                0..n,
                -6.0f64..6.0,
            ))
        ) {
            let mut a = a;
            a.sort_by(f64::total_cmp);
            let mut b = b;
            b.sort_by(f64::total_cmp);
            let mut replaced = a.clone();
            replaced[r] = v;
            let expected = w1_sum(&replaced, &b) - w1_sum(&a, &b);
            let got = w1_replace_delta(&a, &b, r, v);
            prop_assert!((expected - got).abs() < 1e-9, "{} vs {}", expected, got);
        }
    }
}
