use serde::{Deserialize, Serialize};

use crate::alignment::AlignmentPolicy;
use crate::metrics::DriftMetricId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ShapleyExact,
    ShapleySampled,
    GroupIg,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::ShapleyExact => "shapley_exact",
            Method::ShapleySampled => "shapley_sampled",
            Method::GroupIg => "group_ig",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAttribution {
    pub group: String,
    pub attribution: f64,
    /// `(low, high)` at `EstimatorMeta::ci_level`.
    pub ci: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimatorMeta {
    pub permutations: Option<usize>,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
    pub alignment: Option<AlignmentPolicy>,
    /// Number of sampled alignments averaged over.
    pub alignment_samples: Option<usize>,
    /// `total_drift - sum(attributions)` before any correction.
    pub efficiency_residual: Option<f64>,
    pub ci_level: Option<f64>,
    /// Bootstrap settings when the report aggregates resampled runs.
    pub bootstrap_repetitions: Option<usize>,
    pub bootstrap_resample_size: Option<usize>,
}

/// Per-group attributions of a drift value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub per_group: Vec<GroupAttribution>,
    pub total_drift: f64,
    pub metric: DriftMetricId,
    pub method: Method,
    pub estimator: EstimatorMeta,
}

impl AttributionReport {
    pub fn attributions(&self) -> Vec<f64> {
        self.per_group.iter().map(|g| g.attribution).collect()
    }

    pub fn attribution_sum(&self) -> f64 {
        self.per_group.iter().map(|g| g.attribution).sum()
    }

    pub fn get(&self, group: &str) -> Option<f64> {
        self.per_group
            .iter()
            .find(|g| g.group == group)
            .map(|g| g.attribution)
    }

    pub fn has_ci(&self) -> bool {
        self.per_group.iter().any(|g| g.ci.is_some())
    }
}
