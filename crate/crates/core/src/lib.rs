//! Measure drift in a model's output distribution between two samples and
//! attribute it to groups of rows and features.
//!
//! A drift metric ([`metrics`]) compares the model's outputs on an
//! explicand sample with its outputs on a baseline sample. A [`GroupSpec`]
//! partitions the explicand's cells into groups, and an estimator assigns
//! each group its share of the drift: exact or sampled Shapley values
//! ([`shapley`]) or path-integral attribution ([`ig`]). [`bootstrap`]
//! handles samples of unequal size and gives confidence intervals.
//!
//! ```
//! use std::sync::Arc;
//! use groupdrift::prelude::*;
//!
//! let names = ["x", "y", "z"];
//! let explicand = Sample::from_rows(&[vec![1.0, 2.0, 3.0]], &names)?;
//! let baseline = Sample::from_rows(&[vec![0.0, 0.0, 0.0]], &names)?;
//! let model: ModelFn = Arc::new(ExprModel::parse("x*y - z^2", &names)?);
//! let spec = GroupSpec::per_feature(1, explicand.feature_names())?;
//!
//! let pair = validate_pair(explicand, baseline)?;
//! let report = attribute(pair, model, DriftMetricId::Evd, &spec, &AttributeOptions::default())?;
//! assert_eq!(report.total_drift, -7.0);
//! assert_eq!(report.attributions(), [1.0, 1.0, -9.0]);
//! # Ok::<(), groupdrift::Error>(())
//! ```

pub mod alignment;
pub mod attribute;
pub mod bootstrap;
pub mod error;
pub mod groups;
pub mod ig;
pub mod io;
pub mod metrics;
pub mod model;
pub mod report;
pub mod sample;
pub mod shapley;
pub mod synth;

pub use error::{Error, Result};
pub use groups::{Group, GroupSpec};

/// The types most programs need.
pub mod prelude {
    pub use crate::alignment::AlignmentPolicy;
    pub use crate::attribute::{attribute, AttributeOptions, AttributionMethod};
    pub use crate::bootstrap::{bootstrap_attributions, bootstrap_drift, BootstrapConfig, GroupTemplate};
    pub use crate::error::{Error, Result};
    pub use crate::groups::{Group, GroupSpec};
    pub use crate::ig::PathConfig;
    pub use crate::metrics::{drift, DriftMetricId, HistogramConfig};
    pub use crate::model::{ExprModel, FnModel, Model, ModelFn, Transform, TransformChain};
    pub use crate::report::AttributionReport;
    pub use crate::sample::{validate_pair, Sample};
    pub use crate::shapley::{ContextOptions, SamplingConfig};
}

// The guide's code blocks run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/groups.md")]
    mod groups {}
    #[doc = include_str!("../../../book/src/shapley.md")]
    mod shapley {}
    #[doc = include_str!("../../../book/src/ig.md")]
    mod ig {}
    #[doc = include_str!("../../../book/src/bootstrap.md")]
    mod bootstrap {}
    #[doc = include_str!("../../../book/src/case-study.md")]
    mod case_study {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
