//! Synthetic salary data with controllable drift.
//!
//! Each row is an engineer with
//!
//! * location: Springfield (70%) or Centerville,
//! * education: GRAD (80%) or POST_GRAD,
//! * engineer type: Software (85%) or Hardware,
//! * experience and relevant experience: normal with mean 15 and standard
//!   deviation 10, truncated to `[0, 50]` by resampling, with relevant
//!   experience capped at experience.
//!
//! Encodings: Springfield = 1, POST_GRAD = 1, Software = 1, everything else
//! 0. A location string outside the map (such as a lower-cased
//! `springfield`) encodes to 0 with a warning, which is exactly how a
//! case-sensitivity bug upstream silently turns every engineer into a
//! Centerville one.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{write_table, CategoryMap, Schema, UnknownPolicy};
use crate::model::{LinearModel, ModelFn};
use crate::sample::Sample;

pub const PERIOD_COLUMN: &str = "day";

/// Model input order.
pub const SALARY_FEATURES: [&str; 5] = [
    "location",
    "education",
    "experience",
    "engineer_type",
    "relevant_experience",
];

const EXPERIENCE_MEAN: f64 = 15.0;
const EXPERIENCE_SD: f64 = 10.0;
const EXPERIENCE_MAX: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftInjection {
    /// Location strings are lower-cased, so Springfield is no longer recognized.
    LocationCaseBug,
    /// A numeric feature is multiplied by a positive factor.
    FeatureSpike { feature: String, multiplier: f64 },
}

/// An injection applied to periods `start..end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledDrift {
    pub start: usize,
    pub end: usize,
    pub injection: DriftInjection,
}

impl fmt::Display for ScheduledDrift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.injection {
            DriftInjection::LocationCaseBug => f.write_str("location_case_bug")?,
            DriftInjection::FeatureSpike {
                feature,
                multiplier,
            } => write!(f, "feature_spike:{feature}:{multiplier}")?,
        }
        if self.end == self.start + 1 {
            write!(f, "@{}", self.start)
        } else {
            write!(f, "@{}..{}", self.start, self.end)
        }
    }
}

impl FromStr for ScheduledDrift {
    type Err = Error;

    /// `KIND@START` or `KIND@START..END` (end exclusive), where `KIND` is
    /// `location_case_bug` or `feature_spike:FEATURE:MULTIPLIER`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::Config(format!("bad injection `{s}`: {why}"));
        let (kind, range) = s
            .rsplit_once('@')
            .ok_or_else(|| bad("expected KIND@PERIOD"))?;
        let (start, end) = match range.split_once("..") {
            Some((a, b)) => (a.trim().parse(), b.trim().parse()),
            None => {
                let p = range.trim().parse::<usize>();
                (p.clone(), p.map(|p| p + 1))
            }
        };
        let (start, end) = (
            start.map_err(|_| bad("period must be an integer"))?,
            end.map_err(|_| bad("period must be an integer"))?,
        );
        let injection = match kind.split(':').collect::<Vec<_>>().as_slice() {
            ["location_case_bug"] => DriftInjection::LocationCaseBug,
            ["feature_spike", feature, mult] => DriftInjection::FeatureSpike {
                feature: feature.to_string(),
                multiplier: mult.parse().map_err(|_| bad("multiplier must be a number"))?,
            },
            _ => return Err(bad("unknown kind")),
        };
        Ok(Self {
            start,
            end,
            injection,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SalaryGenConfig {
    pub rows_per_period: usize,
    pub periods: usize,
    pub seed: u64,
    pub drift_schedule: Vec<ScheduledDrift>,
}

impl Default for SalaryGenConfig {
    fn default() -> Self {
        Self {
            rows_per_period: 2000,
            periods: 3,
            seed: 0,
            drift_schedule: Vec::new(),
        }
    }
}

impl SalaryGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows_per_period == 0 || self.periods == 0 {
            return Err(Error::Config(
                "rows_per_period and periods must be positive".into(),
            ));
        }
        for d in &self.drift_schedule {
            if d.start >= d.end || d.end > self.periods {
                return Err(Error::Config(format!(
                    "injection `{d}` is outside periods 0..{}",
                    self.periods
                )));
            }
            if let DriftInjection::FeatureSpike {
                feature,
                multiplier,
            } = &d.injection
            {
                if feature != "experience" && feature != "relevant_experience" {
                    return Err(Error::Config(format!(
                        "feature_spike applies to experience or relevant_experience, not `{feature}`"
                    )));
                }
                if !(*multiplier > 0.0 && multiplier.is_finite()) {
                    return Err(Error::Config(format!(
                        "spike multiplier must be positive, got {multiplier}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One generated row with categoricals as strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SalaryRecord {
    pub day: usize,
    pub location: String,
    pub education: String,
    pub experience: f64,
    pub engineer_type: String,
    pub relevant_experience: f64,
}

#[derive(Debug, Clone)]
pub struct SalaryData {
    pub records: Vec<SalaryRecord>,
    /// All rows, encoded, in generation order.
    pub encoded: Sample,
    /// Encoded rows of each period.
    pub periods: Vec<Sample>,
}

impl SalaryData {
    /// Period label of every row, as strings.
    pub fn day_labels(&self) -> Vec<String> {
        self.records.iter().map(|r| r.day.to_string()).collect()
    }
}

fn truncated_experience(rng: &mut ChaCha8Rng) -> f64 {
    let normal = Normal::new(EXPERIENCE_MEAN, EXPERIENCE_SD).expect("valid normal");
    loop {
        let v = normal.sample(rng);
        if (0.0..=EXPERIENCE_MAX).contains(&v) {
            return v;
        }
    }
}

pub fn generate(cfg: &SalaryGenConfig) -> Result<SalaryData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::with_capacity(cfg.rows_per_period * cfg.periods);
    for day in 0..cfg.periods {
        for _ in 0..cfg.rows_per_period {
            let location = if rng.random_bool(0.7) { "Springfield" } else { "Centerville" };
            let education = if rng.random_bool(0.8) { "GRAD" } else { "POST_GRAD" };
            let engineer_type = if rng.random_bool(0.85) { "Software" } else { "Hardware" };
            let experience = truncated_experience(&mut rng);
            let relevant_experience = truncated_experience(&mut rng).min(experience);
            let mut rec = SalaryRecord {
                day,
                location: location.to_string(),
                education: education.to_string(),
                experience,
                engineer_type: engineer_type.to_string(),
                relevant_experience,
            };
            for d in cfg.drift_schedule.iter().filter(|d| (d.start..d.end).contains(&day)) {
                match &d.injection {
                    DriftInjection::LocationCaseBug => rec.location = rec.location.to_lowercase(),
                    DriftInjection::FeatureSpike {
                        feature,
                        multiplier,
                    } => match feature.as_str() {
                        "experience" => rec.experience *= multiplier,
                        _ => rec.relevant_experience *= multiplier,
                    },
                }
            }
            records.push(rec);
        }
    }
    let encoded = encode_records(&records)?;
    let periods = (0..cfg.periods)
        .map(|p| {
            let rows: Vec<usize> =
                (p * cfg.rows_per_period..(p + 1) * cfg.rows_per_period).collect();
            encoded.select_rows(&rows)
        })
        .collect::<Result<_>>()?;
    Ok(SalaryData {
        records,
        encoded,
        periods,
    })
}

/// Category maps for the three categorical features. Unknown locations
/// fall back to 0 (Centerville).
pub fn salary_category_maps() -> [(&'static str, CategoryMap); 3] {
    [
        (
            "location",
            CategoryMap::closed(&[("Springfield", 1.0), ("Centerville", 0.0)])
                .with_unknown(UnknownPolicy::Fallback(0.0)),
        ),
        (
            "education",
            CategoryMap::closed(&[("POST_GRAD", 1.0), ("GRAD", 0.0)]),
        ),
        (
            "engineer_type",
            CategoryMap::closed(&[("Software", 1.0), ("Hardware", 0.0)]),
        ),
    ]
}

/// Schema for files written by [`write_records`].
pub fn salary_schema() -> Schema {
    Schema {
        period_column: Some(PERIOD_COLUMN.to_string()),
        categories: salary_category_maps()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        ..Default::default()
    }
}

/// Encodes records into a sample with columns in [`SALARY_FEATURES`] order.
pub fn encode_records(records: &[SalaryRecord]) -> Result<Sample> {
    let [(_, loc), (_, edu), (_, eng)] = salary_category_maps();
    let mut unknown = 0usize;
    let code = |map: &CategoryMap, label: &str, unknown: &mut usize| -> Result<f64> {
        match (map.code(label), map.unknown) {
            (Some(c), _) => Ok(c),
            (None, UnknownPolicy::Fallback(c)) => {
                *unknown += 1;
                Ok(c)
            }
            (None, _) => Err(Error::Config(format!("unknown category `{label}`"))),
        }
    };
    let rows: Vec<Vec<f64>> = records
        .iter()
        .map(|r| {
            Ok(vec![
                code(&loc, &r.location, &mut unknown)?,
                code(&edu, &r.education, &mut unknown)?,
                r.experience,
                code(&eng, &r.engineer_type, &mut unknown)?,
                r.relevant_experience,
            ])
        })
        .collect::<Result<_>>()?;
    if unknown > 0 {
        log::warn!("{unknown} rows have an unknown location; encoded as Centerville (0)");
    }
    Sample::from_rows(&rows, &SALARY_FEATURES)
}

/// Writes records as CSV with a header and a `day` column first.
pub fn write_records<W: Write>(writer: W, records: &[SalaryRecord]) -> Result<()> {
    let header = [
        PERIOD_COLUMN,
        "location",
        "education",
        "experience",
        "engineer_type",
        "relevant_experience",
    ];
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.day.to_string(),
                r.location.clone(),
                r.education.clone(),
                r.experience.to_string(),
                r.engineer_type.clone(),
                r.relevant_experience.to_string(),
            ]
        })
        .collect();
    write_table(writer, &header, &rows)
}

/// `50000 + 20000 location + 20000 education + 100 experience
///  + 10000 engineer_type + 5000 relevant_experience`.
pub fn salary_model() -> ModelFn {
    Arc::new(LinearModel {
        intercept: 50_000.0,
        coefficients: vec![20_000.0, 20_000.0, 100.0, 10_000.0, 5_000.0],
    })
}
