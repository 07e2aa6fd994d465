//! Distributional drift functions over two equal-length 1-D prediction samples.
//!
//! Every metric here is invariant to the order of elements within each
//! sample; only the multiset of values matters.

pub mod axioms;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which drift function to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriftMetricId {
    /// Wasserstein-1 (earth mover's) distance.
    W1,
    /// Expected value difference, `mean(a) - mean(b)`.
    Evd,
    /// Jensen-Shannon divergence of binned empirical distributions.
    Jsd,
    /// Two-sample Kolmogorov-Smirnov statistic.
    Ks,
}

/// Axioms a drift function satisfies on empirical samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub sensitive: bool,
    pub differentiable: bool,
    pub symmetric: bool,
    pub identity_of_indiscernibles: bool,
    pub directional: bool,
}

impl DriftMetricId {
    pub const ALL: [DriftMetricId; 4] = [Self::W1, Self::Evd, Self::Jsd, Self::Ks];

    pub fn name(self) -> &'static str {
        match self {
            Self::W1 => "w1",
            Self::Evd => "evd",
            Self::Jsd => "jsd",
            Self::Ks => "ks",
        }
    }

    pub fn capabilities(self) -> Capabilities {
        match self {
            Self::W1 => Capabilities {
                sensitive: true,
                differentiable: true,
                symmetric: true,
                identity_of_indiscernibles: true,
                directional: false,
            },
            Self::Evd => Capabilities {
                sensitive: true,
                differentiable: true,
                symmetric: false,
                identity_of_indiscernibles: false,
                directional: true,
            },
            Self::Jsd | Self::Ks => Capabilities {
                sensitive: false,
                differentiable: false,
                symmetric: true,
                identity_of_indiscernibles: true,
                directional: false,
            },
        }
    }
}

impl fmt::Display for DriftMetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DriftMetricId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "w1" | "wasserstein" => Ok(Self::W1),
            "evd" | "mean" => Ok(Self::Evd),
            "jsd" => Ok(Self::Jsd),
            "ks" => Ok(Self::Ks),
            other => Err(Error::Config(format!(
                "unknown metric `{other}` (expected w1, evd, jsd or ks)"
            ))),
        }
    }
}

/// Discretization used by [`jensen_shannon`]: equal-width bins spanning the
/// joint range of both samples, divergence in bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramConfig {
    pub bin_count: usize,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        Self { bin_count: 10 }
    }
}

impl HistogramConfig {
    pub fn new(bin_count: usize) -> Result<Self> {
        if bin_count < 2 {
            return Err(Error::Config(format!(
                "histogram needs at least 2 bins, got {bin_count}"
            )));
        }
        Ok(Self { bin_count })
    }
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput);
    }
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            what: "prediction values",
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(())
}

fn identical(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

pub(crate) fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    // Stable, so equal values keep their original order.
    v.sort_by(f64::total_cmp);
    v
}

/// `(1/n) * sum |a_(i) - b_(i)|` over the sorted samples.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a, b)?;
    if identical(a, b) {
        return Ok(0.0);
    }
    Ok(w1_sorted(&sorted(a), &sorted(b)))
}

fn w1_sorted(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// `mean(a) - mean(b)`. Flips sign when the arguments swap.
pub fn expected_value_difference(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a, b)?;
    if identical(a, b) {
        return Ok(0.0);
    }
    Ok((sum(a) - sum(b)) / a.len() as f64)
}

fn sum(v: &[f64]) -> f64 {
    v.iter().sum()
}

/// Jensen-Shannon divergence (base 2, so within `[0, 1]`) between the
/// histograms of the two samples.
pub fn jensen_shannon(a: &[f64], b: &[f64], cfg: &HistogramConfig) -> Result<f64> {
    check_lengths(a, b)?;
    if cfg.bin_count < 2 {
        return Err(Error::Config("histogram needs at least 2 bins".into()));
    }
    if identical(a, b) {
        return Ok(0.0);
    }
    let (lo, hi) = a
        .iter()
        .chain(b)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if hi <= lo {
        return Ok(0.0);
    }
    let p = histogram(a, lo, hi, cfg.bin_count);
    let q = histogram(b, lo, hi, cfg.bin_count);
    let n = a.len() as f64;

    // Each KL term is accumulated over raw counts and divided once so that
    // disjoint histograms give exactly one bit.
    let (mut kl_p, mut kl_q) = (0.0, 0.0);
    for (&cp, &cq) in p.iter().zip(&q) {
        let mid = (cp + cq) as f64 / 2.0;
        if cp > 0 {
            kl_p += cp as f64 * (cp as f64 / mid).log2();
        }
        if cq > 0 {
            kl_q += cq as f64 * (cq as f64 / mid).log2();
        }
    }
    Ok((0.5 * (kl_p / n + kl_q / n)).clamp(0.0, 1.0))
}

fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let idx = (((v - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    counts
}

/// `sup_x |F_a(x) - F_b(x)|` for the right-continuous empirical CDFs,
/// evaluated at every point of both samples.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a, b)?;
    if identical(a, b) {
        return Ok(0.0);
    }
    Ok(ks_sorted(&sorted(a), &sorted(b)))
}

fn ks_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut sup: f64 = 0.0;
    while i < na || j < nb {
        let x = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        sup = sup.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    sup
}

/// Dispatches to the selected drift function.
pub fn drift(metric: DriftMetricId, a: &[f64], b: &[f64], cfg: &HistogramConfig) -> Result<f64> {
    match metric {
        DriftMetricId::W1 => wasserstein1(a, b),
        DriftMetricId::Evd => expected_value_difference(a, b),
        DriftMetricId::Jsd => jensen_shannon(a, b, cfg),
        DriftMetricId::Ks => ks_statistic(a, b),
    }
}

/// A fixed second argument with whatever precomputation its metric can reuse.
///
/// Attribution evaluates `D(x, reference)` for thousands of hybrid samples
/// against the same reference.
#[derive(Debug, Clone)]
pub(crate) struct Reference {
    metric: DriftMetricId,
    cfg: HistogramConfig,
    values: Vec<f64>,
    sorted: Vec<f64>,
    sum: f64,
}

impl Reference {
    pub(crate) fn new(metric: DriftMetricId, cfg: HistogramConfig, values: Vec<f64>) -> Self {
        let sorted = sorted(&values);
        let sum = sum(&values);
        Self {
            metric,
            cfg,
            values,
            sorted,
            sum,
        }
    }

    pub(crate) fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn sorted_values(&self) -> &[f64] {
        &self.sorted
    }

    /// Same result as `drift(metric, a, reference, cfg)`.
    pub(crate) fn drift_from(&self, a: &[f64]) -> Result<f64> {
        check_lengths(a, &self.values)?;
        if identical(a, &self.values) {
            return Ok(0.0);
        }
        Ok(match self.metric {
            DriftMetricId::W1 => w1_sorted(&sorted(a), &self.sorted),
            DriftMetricId::Evd => (sum(a) - self.sum) / a.len() as f64,
            DriftMetricId::Ks => ks_sorted(&sorted(a), &self.sorted),
            DriftMetricId::Jsd => jensen_shannon(a, &self.values, &self.cfg)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const CFG: HistogramConfig = HistogramConfig { bin_count: 10 };

    /// Minimum-cost perfect matching by enumerating every pairing.
    fn brute_force_transport(a: &[f64], b: &[f64]) -> f64 {
        fn rec(a: &[f64], b: &[f64], used: &mut Vec<bool>, i: usize, acc: f64, best: &mut f64) {
            if i == a.len() {
                *best = best.min(acc);
                return;
            }
            for j in 0..b.len() {
                if !used[j] {
                    used[j] = true;
                    rec(a, b, used, i + 1, acc + (a[i] - b[j]).abs(), best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(a, b, &mut vec![false; b.len()], 0, 0.0, &mut best);
        best / a.len() as f64
    }

    /// ECDF difference evaluated directly at every sample point.
    fn brute_force_ks(a: &[f64], b: &[f64]) -> f64 {
        let cdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
        a.iter()
            .chain(b)
            .map(|&x| (cdf(a, x) - cdf(b, x)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn w1_examples() {
        let a = [3.0, 8.0, 15.0];
        let b = [9.0, 8.0, 6.0];
        assert_eq!(brute_force_transport(&a, &b), 3.0);
        assert_eq!(wasserstein1(&a, &b).unwrap(), 3.0);
        assert_eq!(wasserstein1(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(wasserstein1(&[-1.0], &[0.0]).unwrap(), 1.0);
    }

    #[test]
    fn evd_examples() {
        assert_eq!(
            expected_value_difference(&[9.0, 8.0, 6.0], &[3.0, 8.0, 15.0]).unwrap(),
            -1.0
        );
        // Equal means, different samples.
        assert_eq!(expected_value_difference(&[1.0, 1.0], &[0.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn jsd_examples() {
        let a = [0.0, 1.0, 2.0];
        let b = [10.0, 11.0, 12.0];
        assert_eq!(jensen_shannon(&a, &b, &CFG).unwrap(), 1.0);
        let far = [20.0, 21.0, 22.0];
        assert_eq!(jensen_shannon(&a, &far, &CFG).unwrap(), 1.0);
        assert_eq!(jensen_shannon(&a, &a, &CFG).unwrap(), 0.0);
        assert_eq!(jensen_shannon(&[4.0; 3], &[4.0; 3], &CFG).unwrap(), 0.0);
    }

    #[test]
    fn ks_examples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [1.0, 2.0, 3.0, 10.0];
        assert_eq!(brute_force_ks(&a, &b), 0.25);
        assert_eq!(ks_statistic(&a, &b).unwrap(), 0.25);
        assert_eq!(ks_statistic(&[0.0, 1.0], &[5.0, 6.0]).unwrap(), 1.0);
    }

    #[test]
    fn length_errors() {
        for m in DriftMetricId::ALL {
            assert!(matches!(
                drift(m, &[1.0], &[1.0, 2.0], &CFG),
                Err(Error::LengthMismatch { .. })
            ));
            assert!(matches!(drift(m, &[], &[], &CFG), Err(Error::EmptyInput)));
        }
        assert!(HistogramConfig::new(1).is_err());
    }

    #[test]
    fn reference_matches_direct_dispatch() {
        let a = [0.3, -1.2, 4.0, 2.2];
        let b = [1.0, 0.5, -0.5, 3.0];
        for m in DriftMetricId::ALL {
            let r = Reference::new(m, CFG, b.to_vec());
            assert_eq!(r.drift_from(&a).unwrap(), drift(m, &a, &b, &CFG).unwrap());
        }
    }

    fn pair(max_len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1..=max_len).prop_flat_map(|n| {
            (
                prop::collection::vec(-100.0f64..100.0, n),
                prop::collection::vec(-100.0f64..100.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn w1_is_optimal_transport((a, b) in pair(6)) {
            let w = wasserstein1(&a, &b).unwrap();
            let bf = brute_force_transport(&a, &b);
            prop_assert!((w - bf).abs() <= 1e-9 * (1.0 + bf));
        }

        #[test]
        fn ks_matches_pointwise_ecdf((a, b) in pair(12)) {
            prop_assert_eq!(ks_statistic(&a, &b).unwrap(), brute_force_ks(&a, &b));
        }

        #[test]
        fn self_drift_is_zero((a, _b) in pair(20)) {
            for m in DriftMetricId::ALL {
                prop_assert_eq!(drift(m, &a, &a, &CFG).unwrap(), 0.0);
            }
        }

        #[test]
        fn symmetry_directionality_and_bounds((a, b) in pair(20)) {
            for m in [DriftMetricId::W1, DriftMetricId::Jsd, DriftMetricId::Ks] {
                let ab = drift(m, &a, &b, &CFG).unwrap();
                let ba = drift(m, &b, &a, &CFG).unwrap();
                prop_assert!((ab - ba).abs() <= 1e-12);
                prop_assert!(ab >= 0.0);
                if m != DriftMetricId::W1 {
                    prop_assert!(ab <= 1.0);
                }
            }
            let ab = expected_value_difference(&a, &b).unwrap();
            let ba = expected_value_difference(&b, &a).unwrap();
            prop_assert_eq!(ab, -ba);
        }

        #[test]
        fn w1_sensitive_to_single_points(
            (a, b) in pair(15),
            idx in any::<prop::sample::Index>(),
            eps in 1e-4f64..1.0,
        ) {
            let before = wasserstein1(&a, &b).unwrap();
            let mut a2 = a.clone();
            let i = idx.index(a.len());
            a2[i] += eps;
            let after = wasserstein1(&a2, &b).unwrap();
            // Only a measure-zero configuration leaves W1 unchanged.
            prop_assume!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() > 1e-9));
            prop_assert_ne!(before, after);
        }
    }
}
