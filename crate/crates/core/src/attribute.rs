//! One entry point over the three estimators, including averaging over
//! several random alignments.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::alignment::AlignmentPolicy;
use crate::error::{Error, Result};
use crate::groups::GroupSpec;
use crate::ig::{group_ig, PathConfig};
use crate::metrics::DriftMetricId;
use crate::model::ModelFn;
use crate::report::{AttributionReport, GroupAttribution};
use crate::sample::SamplePair;
use crate::shapley::{
    shapley_exact, shapley_sampled, ContextOptions, SamplingConfig, ValueFunctionContext,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttributionMethod {
    ShapleyExact,
    ShapleySampled(SamplingConfig),
    Ig(PathConfig),
}

#[derive(Debug, Clone)]
pub struct AttributeOptions {
    pub context: ContextOptions,
    pub method: AttributionMethod,
    /// Number of random alignments averaged when the alignment policy is
    /// [`AlignmentPolicy::Sampled`].
    pub alignment_samples: usize,
}

impl Default for AttributeOptions {
    fn default() -> Self {
        Self {
            context: ContextOptions::default(),
            method: AttributionMethod::ShapleyExact,
            alignment_samples: 30,
        }
    }
}

fn run(ctx: &ValueFunctionContext, spec: &GroupSpec, method: &AttributionMethod) -> Result<AttributionReport> {
    match method {
        AttributionMethod::ShapleyExact => shapley_exact(ctx, spec),
        AttributionMethod::ShapleySampled(cfg) => shapley_sampled(ctx, spec, cfg),
        AttributionMethod::Ig(cfg) => group_ig(ctx, spec, cfg),
    }
}

/// Aligns, builds the value-function context and runs the chosen estimator.
///
/// With sampled alignment, `alignment_samples` alignments are drawn from
/// independent streams of `alignment_seed` and the resulting reports are
/// averaged; confidence intervals are dropped in that case.
pub fn attribute(
    pair: SamplePair,
    model: ModelFn,
    metric: DriftMetricId,
    spec: &GroupSpec,
    opts: &AttributeOptions,
) -> Result<AttributionReport> {
    let policy = opts
        .context
        .alignment
        .unwrap_or_else(|| AlignmentPolicy::default_for(metric));
    if policy != AlignmentPolicy::Sampled {
        let ctx = ValueFunctionContext::new(pair, model, metric, &opts.context)?;
        return run(&ctx, spec, &opts.method);
    }

    let seed = opts
        .context
        .alignment_seed
        .ok_or_else(|| Error::Config("sampled alignment requires a seed".into()))?;
    if opts.alignment_samples == 0 {
        return Err(Error::Config("alignment_samples must be at least 1".into()));
    }
    let reports: Vec<AttributionReport> = (0..opts.alignment_samples)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let ctx_opts = ContextOptions {
                alignment: Some(AlignmentPolicy::Sampled),
                alignment_seed: Some(rng.next_u64()),
                ..opts.context.clone()
            };
            let ctx = ValueFunctionContext::new(pair.clone(), model.clone(), metric, &ctx_opts)?;
            run(&ctx, spec, &opts.method)
        })
        .collect::<Result<_>>()?;

    let k = reports.len() as f64;
    let mut out = reports[0].clone();
    for (idx, g) in out.per_group.iter_mut().enumerate() {
        *g = GroupAttribution {
            group: g.group.clone(),
            attribution: reports.iter().map(|r| r.per_group[idx].attribution).sum::<f64>() / k,
            ci: None,
        };
    }
    out.total_drift = reports.iter().map(|r| r.total_drift).sum::<f64>() / k;
    out.estimator.efficiency_residual = Some(
        reports
            .iter()
            .filter_map(|r| r.estimator.efficiency_residual)
            .sum::<f64>()
            / k,
    );
    out.estimator.ci_level = None;
    out.estimator.seed = Some(seed);
    out.estimator.alignment_samples = Some(reports.len());
    Ok(out)
}
