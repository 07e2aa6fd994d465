//! CSV ingestion with categorical encoding, report serialization and the
//! group specification grammar.
//!
//! Data rows are numbered from 1 (the first line after the header) in all
//! error messages.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::groups::{Group, GroupSpec};
use crate::report::{AttributionReport, EstimatorMeta};
use crate::sample::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnType {
    Numeric,
    Categorical,
}

/// What to do with a category string missing from a map.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownPolicy {
    /// Reject the file, listing every offending row.
    #[default]
    Error,
    /// Encode as the given code and log a warning.
    Fallback(f64),
    /// Append new categories with the next integer codes.
    Extend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryEntry {
    pub label: String,
    pub code: f64,
}

/// Category string to numeric code, in declaration order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CategoryMap {
    pub entries: Vec<CategoryEntry>,
    #[serde(default)]
    pub unknown: UnknownPolicy,
}

impl CategoryMap {
    pub fn closed<S: AsRef<str>>(pairs: &[(S, f64)]) -> Self {
        Self {
            entries: pairs
                .iter()
                .map(|(l, c)| CategoryEntry {
                    label: l.as_ref().to_string(),
                    code: *c,
                })
                .collect(),
            unknown: UnknownPolicy::Error,
        }
    }

    pub fn with_unknown(mut self, unknown: UnknownPolicy) -> Self {
        self.unknown = unknown;
        self
    }

    pub fn code(&self, label: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.label == label).map(|e| e.code)
    }

    /// First label with the given code.
    pub fn label(&self, code: f64) -> Option<&str> {
        self.entries
            .iter()
            .find(|e| e.code == code)
            .map(|e| e.label.as_str())
    }

    fn next_code(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.code)
            .fold(-1.0, f64::max)
            .floor()
            + 1.0
    }
}

/// How to read a table.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Schema {
    /// Column holding period labels; kept as strings, not a feature.
    #[serde(default)]
    pub period_column: Option<String>,
    /// Column of precomputed model outputs; not a feature.
    #[serde(default)]
    pub prediction_column: Option<String>,
    /// Column of row identifiers; not a feature.
    #[serde(default)]
    pub id_column: Option<String>,
    #[serde(default)]
    pub exclude: Vec<String>,
    /// Column types; columns not listed are numeric if every cell parses.
    #[serde(default)]
    pub types: BTreeMap<String, ColumnType>,
    #[serde(default)]
    pub categories: BTreeMap<String, CategoryMap>,
}

impl Schema {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// A loaded table: encoded features plus the non-feature columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub sample: Sample,
    /// Raw cell strings of every column, by header name.
    pub raw: BTreeMap<String, Vec<String>>,
    pub period_column: Option<String>,
    pub predictions: Option<Vec<f64>>,
    /// Maps used for each categorical feature, including inferred ones.
    pub category_maps: BTreeMap<String, CategoryMap>,
}

impl Table {
    pub fn nrows(&self) -> usize {
        self.sample.nrows()
    }

    /// Raw labels of `column` for every row.
    pub fn labels(&self, column: &str) -> Result<&[String]> {
        self.raw
            .get(column)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingColumn(column.to_string()))
    }

    /// Distinct period labels in first-seen order.
    pub fn periods(&self) -> Result<Vec<String>> {
        let col = self
            .period_column
            .as_deref()
            .ok_or_else(|| Error::Config("table has no period column".into()))?;
        let mut seen: Vec<String> = Vec::new();
        for l in self.labels(col)? {
            if !seen.contains(l) {
                seen.push(l.clone());
            }
        }
        Ok(seen)
    }

    /// Row indices of one period.
    pub fn period_rows(&self, label: &str) -> Result<Vec<usize>> {
        let col = self
            .period_column
            .as_deref()
            .ok_or_else(|| Error::Config("table has no period column".into()))?;
        Ok(self
            .labels(col)?
            .iter()
            .enumerate()
            .filter(|(_, l)| *l == label)
            .map(|(i, _)| i)
            .collect())
    }

    /// One sample per period, in first-seen order.
    pub fn split_by_period(&self) -> Result<Vec<(String, Sample)>> {
        self.periods()?
            .into_iter()
            .map(|p| {
                let rows = self.period_rows(&p)?;
                Ok((p, self.sample.select_rows(&rows)?))
            })
            .collect()
    }
}

fn is_number(s: &str) -> bool {
    s.trim().parse::<f64>().is_ok_and(f64::is_finite)
}

pub fn load_table(path: impl AsRef<Path>, schema: &Schema) -> Result<Table> {
    load_table_from_reader(File::open(path)?, schema)
}

pub fn load_table_from_reader<R: Read>(reader: R, schema: &Schema) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut columns: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::RaggedRow {
                row: idx + 1,
                expected: headers.len(),
                found: record.len(),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            columns[c].push(cell.trim().to_string());
        }
    }
    let m = columns.first().map_or(0, Vec::len);
    if m == 0 {
        return Err(Error::NoDataRows);
    }

    let position = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    for name in schema
        .period_column
        .iter()
        .chain(&schema.prediction_column)
        .chain(&schema.id_column)
        .chain(schema.types.keys())
        .chain(schema.categories.keys())
    {
        position(name)?;
    }

    let predictions = match &schema.prediction_column {
        Some(name) => Some(parse_numeric(name, &columns[position(name)?])?),
        None => None,
    };
    let row_ids = match &schema.id_column {
        Some(name) => columns[position(name)?].clone(),
        None => (0..m).map(|i| i.to_string()).collect(),
    };

    let special = |h: &String| {
        Some(h) == schema.period_column.as_ref()
            || Some(h) == schema.prediction_column.as_ref()
            || Some(h) == schema.id_column.as_ref()
            || schema.exclude.contains(h)
    };
    let mut feature_names = Vec::new();
    let mut features = Vec::new();
    let mut category_maps = BTreeMap::new();
    for (c, name) in headers.iter().enumerate() {
        if special(name) {
            continue;
        }
        let cells = &columns[c];
        let kind = schema.types.get(name).copied().unwrap_or_else(|| {
            if schema.categories.contains_key(name) || !cells.iter().all(|s| is_number(s)) {
                ColumnType::Categorical
            } else {
                ColumnType::Numeric
            }
        });
        let encoded = match kind {
            ColumnType::Numeric => parse_numeric(name, cells)?,
            ColumnType::Categorical => {
                let mut map = schema.categories.get(name).cloned().unwrap_or(CategoryMap {
                    entries: Vec::new(),
                    unknown: UnknownPolicy::Extend,
                });
                let codes = encode_column(name, cells, &mut map)?;
                log::info!(
                    "column {name} encoded as {}",
                    map.entries
                        .iter()
                        .map(|e| format!("{}={}", e.label, e.code))
                        .collect::<Vec<_>>()
                        .join(", ")
                );
                category_maps.insert(name.clone(), map);
                codes
            }
        };
        feature_names.push(name.clone());
        features.push(encoded);
    }

    let n = features.len();
    let values = ndarray::Array2::from_shape_fn((m, n), |(i, j)| features[j][i]);
    let sample = Sample::with_row_ids(values, feature_names, row_ids)?;
    let raw = headers.into_iter().zip(columns).collect();
    Ok(Table {
        sample,
        raw,
        period_column: schema.period_column.clone(),
        predictions,
        category_maps,
    })
}

fn parse_numeric(column: &str, cells: &[String]) -> Result<Vec<f64>> {
    cells
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::BadCell {
                    row: i + 1,
                    column: column.to_string(),
                    value: s.clone(),
                })
        })
        .collect()
}

fn encode_column(column: &str, cells: &[String], map: &mut CategoryMap) -> Result<Vec<f64>> {
    let mut unknown = Vec::new();
    let mut out = Vec::with_capacity(cells.len());
    for (i, s) in cells.iter().enumerate() {
        let code = match map.code(s) {
            Some(c) => c,
            None => match map.unknown {
                UnknownPolicy::Error => {
                    unknown.push((i + 1, s.clone()));
                    f64::NAN
                }
                UnknownPolicy::Fallback(c) => {
                    unknown.push((i + 1, s.clone()));
                    c
                }
                UnknownPolicy::Extend => {
                    let c = map.next_code();
                    map.entries.push(CategoryEntry {
                        label: s.clone(),
                        code: c,
                    });
                    c
                }
            },
        };
        out.push(code);
    }
    match map.unknown {
        UnknownPolicy::Error if !unknown.is_empty() => Err(Error::UnknownCategory {
            column: column.to_string(),
            rows: unknown,
        }),
        UnknownPolicy::Fallback(c) if !unknown.is_empty() => {
            let (first_row, first) = &unknown[0];
            log::warn!(
                "{} rows of column {column} have unknown categories (first: `{first}` at row {first_row}); encoded as {c}",
                unknown.len()
            );
            Ok(out)
        }
        _ => Ok(out),
    }
}

/// Writes a header and string rows as CSV.
pub fn write_table<W: Write, S: AsRef<str>>(writer: W, header: &[S], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header.iter().map(AsRef::as_ref))?;
    for (i, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::RaggedRow {
                row: i + 1,
                expected: header.len(),
                found: row.len(),
            });
        }
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            _ => Err(Error::Config(format!("unknown report format `{s}` (json or csv)"))),
        }
    }
}

/// Seventeen significant digits: enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn raw(v: f64) -> Box<RawValue> {
    RawValue::from_string(format_float(v)).expect("finite float is valid JSON")
}

fn raw_opt(v: Option<f64>) -> Option<Box<RawValue>> {
    v.filter(|x| x.is_finite()).map(raw)
}

#[derive(Serialize)]
struct GroupOut<'a> {
    group: &'a str,
    attribution: Box<RawValue>,
    ci: Option<[Box<RawValue>; 2]>,
}

#[derive(Serialize)]
struct MetaOut<'a> {
    permutations: Option<usize>,
    steps: Option<usize>,
    seed: Option<u64>,
    alignment: &'a Option<crate::alignment::AlignmentPolicy>,
    alignment_samples: Option<usize>,
    efficiency_residual: Option<Box<RawValue>>,
    ci_level: Option<Box<RawValue>>,
    bootstrap_repetitions: Option<usize>,
    bootstrap_resample_size: Option<usize>,
}

#[derive(Serialize)]
struct ReportOut<'a> {
    metric: crate::metrics::DriftMetricId,
    method: crate::report::Method,
    total_drift: Box<RawValue>,
    per_group: Vec<GroupOut<'a>>,
    estimator: MetaOut<'a>,
    #[serde(skip_serializing_if = "Option::is_none")]
    encodings: Option<&'a BTreeMap<String, CategoryMap>>,
}

fn report_out<'a>(
    report: &'a AttributionReport,
    encodings: Option<&'a BTreeMap<String, CategoryMap>>,
) -> ReportOut<'a> {
    let EstimatorMeta {
        permutations,
        steps,
        seed,
        alignment,
        alignment_samples,
        efficiency_residual,
        ci_level,
        bootstrap_repetitions,
        bootstrap_resample_size,
    } = &report.estimator;
    ReportOut {
        metric: report.metric,
        method: report.method,
        total_drift: raw(report.total_drift),
        per_group: report
            .per_group
            .iter()
            .map(|g| GroupOut {
                group: &g.group,
                attribution: raw(g.attribution),
                ci: g.ci.map(|(lo, hi)| [raw(lo), raw(hi)]),
            })
            .collect(),
        estimator: MetaOut {
            permutations: *permutations,
            steps: *steps,
            seed: *seed,
            alignment,
            alignment_samples: *alignment_samples,
            efficiency_residual: raw_opt(*efficiency_residual),
            ci_level: raw_opt(*ci_level),
            bootstrap_repetitions: *bootstrap_repetitions,
            bootstrap_resample_size: *bootstrap_resample_size,
        },
        encodings: encodings.filter(|e| !e.is_empty()),
    }
}

/// Serializes a report. JSON carries the full estimator metadata; CSV has
/// one row per group with `group,attribution` and, when any group has an
/// interval, `ci_low,ci_high`.
pub fn write_report(report: &AttributionReport, format: ReportFormat) -> Result<Vec<u8>> {
    write_report_with_encodings(report, format, None)
}

/// Like [`write_report`]; JSON output also lists the category maps used to
/// encode the input.
pub fn write_report_with_encodings(
    report: &AttributionReport,
    format: ReportFormat,
    encodings: Option<&BTreeMap<String, CategoryMap>>,
) -> Result<Vec<u8>> {
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(&report_out(report, encodings))?;
            out.push(b'\n');
            Ok(out)
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            if report.has_ci() {
                w.write_record(["group", "attribution", "ci_low", "ci_high"])?;
            } else {
                w.write_record(["group", "attribution"])?;
            }
            for g in &report.per_group {
                let mut rec = vec![g.group.clone(), format_float(g.attribution)];
                if report.has_ci() {
                    let (lo, hi) = g.ci.map_or((String::new(), String::new()), |(l, h)| {
                        (format_float(l), format_float(h))
                    });
                    rec.push(lo);
                    rec.push(hi);
                }
                w.write_record(&rec)?;
            }
            w.into_inner().map_err(|e| Error::Io(e.into_error()))
        }
    }
}

pub fn read_report_json(bytes: &[u8]) -> Result<AttributionReport> {
    Ok(serde_json::from_slice(bytes)?)
}

/// Parses a group specification against a table.
///
/// * `features`: one group per feature.
/// * `rows:COL`: one group per distinct value of column `COL`.
/// * `features*rows:COL`: the cross product, named `feature:COL=value`.
/// * `file:PATH`: explicit groups, see [`parse_group_file`].
pub fn parse_group_spec(spec: &str, table: &Table) -> Result<GroupSpec> {
    let spec = spec.trim();
    let m = table.nrows();
    let names = table.sample.feature_names();
    if spec == "features" {
        return GroupSpec::per_feature(m, names);
    }
    if let Some(col) = spec.strip_prefix("rows:") {
        return GroupSpec::by_row_labels(col, table.labels(col)?, names.len());
    }
    if let Some(col) = spec
        .strip_prefix("features*rows:")
        .or_else(|| spec.strip_prefix("features×rows:"))
    {
        return GroupSpec::features_by_row_labels(col, table.labels(col)?, names);
    }
    if let Some(path) = spec.strip_prefix("file:") {
        let text = std::fs::read_to_string(path)?;
        return parse_group_file(&text, m, names);
    }
    Err(Error::InvalidGroups(format!(
        "`{spec}` is not one of features, rows:COL, features*rows:COL, file:PATH"
    )))
}

fn parse_rows(field: &str, m: usize) -> Result<Vec<usize>> {
    let bad = || Error::InvalidGroups(format!("bad row range `{field}`"));
    if field.trim() == "*" {
        return Ok((0..m).collect());
    }
    let mut rows = Vec::new();
    for part in field.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once("..") {
            Some((a, b)) => {
                let a: usize = a.trim().parse().map_err(|_| bad())?;
                let b: usize = b.trim().parse().map_err(|_| bad())?;
                if a >= b || b > m {
                    return Err(bad());
                }
                rows.extend(a..b);
            }
            None => {
                let r: usize = part.parse().map_err(|_| bad())?;
                if r >= m {
                    return Err(bad());
                }
                rows.push(r);
            }
        }
    }
    Ok(rows)
}

/// Explicit groups from CSV text with header `name,rows,features`.
///
/// `rows` is `*` or `;`-separated half-open ranges `a..b` and single
/// indices (0-based). `features` is `*` or `;`-separated feature names.
pub fn parse_group_file(text: &str, rows: usize, feature_names: &[String]) -> Result<GroupSpec> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if headers != ["name", "rows", "features"] {
        return Err(Error::InvalidGroups(format!(
            "group file header must be name,rows,features (got {})",
            headers.join(",")
        )));
    }
    let mut groups = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let features: Vec<usize> = if &record[2] == "*" {
            (0..feature_names.len()).collect()
        } else {
            record[2]
                .split(';')
                .map(|f| {
                    feature_names
                        .iter()
                        .position(|n| n == f.trim())
                        .ok_or_else(|| Error::InvalidGroups(format!("unknown feature `{f}`")))
                })
                .collect::<Result<_>>()?
        };
        groups.push(Group::new(&record[0], parse_rows(&record[1], rows)?, features));
    }
    GroupSpec::new(groups, rows, feature_names.len())
}
