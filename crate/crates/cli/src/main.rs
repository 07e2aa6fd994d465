mod config;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use groupdrift::alignment::AlignmentPolicy;
use groupdrift::attribute::{attribute, AttributeOptions, AttributionMethod};
use groupdrift::bootstrap::{
    bootstrap_attributions, bootstrap_drift, proportion_diagnostic, BootstrapConfig,
    GroupTemplate, PROPORTION_THRESHOLD,
};
use groupdrift::error::Error;
use groupdrift::ig::PathConfig;
use groupdrift::io::{
    format_float, load_table, parse_group_spec, write_report_with_encodings, CategoryMap,
    ReportFormat, Schema, Table,
};
use groupdrift::metrics::axioms::{check_metric, AxiomSuiteConfig};
use groupdrift::metrics::{drift, DriftMetricId, HistogramConfig};
use groupdrift::model::{predict_batch, resolve_model, ModelFn, Transform, TransformChain};
use groupdrift::sample::validate_pair;
use groupdrift::shapley::{ContextOptions, SamplingConfig};
use groupdrift::synth::{generate, salary_schema, write_records, SalaryGenConfig, ScheduledDrift};

const SUBCOMMANDS: [&str; 5] = ["drift", "attribute", "synth", "axioms", "timeseries"];

/// Measure prediction drift between two data samples and attribute it to
/// groups of rows and features.
#[derive(Parser, Debug)]
#[command(name = "groupdrift", version, args_override_self = true)]
struct Cli {
    /// Worker threads for parallel estimators (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// File of `key = value` lines mirroring the subcommand's flags;
    /// flags given on the command line take precedence.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Log more (repeat for debug output). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Drift of the model's predictions between two files.
    Drift(DriftArgs),
    /// Attribute the drift to groups of rows and features.
    Attribute(AttributeArgs),
    /// Generate the synthetic salary dataset.
    Synth(SynthArgs),
    /// Check which drift-metric axioms each metric satisfies.
    Axioms(AxiomsArgs),
    /// Drift of every period against a reference period, for all metrics.
    Timeseries(TimeseriesArgs),
}

#[derive(Args, Debug)]
struct InputArgs {
    /// Explicand data file (CSV with header).
    #[arg(long, value_name = "PATH")]
    explicand: PathBuf,

    /// Baseline data file (CSV with header).
    #[arg(long, value_name = "PATH")]
    baseline: PathBuf,

    /// JSON schema: period/prediction/id columns, column types, category maps.
    #[arg(long, value_name = "PATH")]
    schema: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Expression over feature names, or a built-in: demo:xz+y+z, demo:xy,
    /// demo:x-y, demo:x+y-z, demo:xy-z^2, demo:min, demo:abs, salary.
    #[arg(long, value_name = "EXPR")]
    model: Option<String>,

    /// Use this column of precomputed predictions instead of a model.
    #[arg(long, value_name = "COL", conflicts_with = "model")]
    predictions: Option<String>,

    /// Output transform applied before the metric (repeatable, applied in
    /// order): logistic, exp, tanh, affine:SCALE,SHIFT.
    #[arg(long = "transform", value_name = "T")]
    transforms: Vec<String>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum MetricArg {
    W1,
    Evd,
    Jsd,
    Ks,
}

impl From<MetricArg> for DriftMetricId {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::W1 => DriftMetricId::W1,
            MetricArg::Evd => DriftMetricId::Evd,
            MetricArg::Jsd => DriftMetricId::Jsd,
            MetricArg::Ks => DriftMetricId::Ks,
        }
    }
}

#[derive(Args, Debug)]
struct CommonArgs {
    #[arg(long, value_enum)]
    metric: MetricArg,

    /// Bootstrap instead of a single comparison: `k,R,level` (resample
    /// size, repetitions, confidence level). Empty fields take defaults,
    /// e.g. `,200,`.
    #[arg(long, value_name = "k,R,level")]
    bootstrap: Option<String>,

    /// Seed for every random choice.
    #[arg(long)]
    seed: Option<u64>,

    /// Histogram bins for jsd.
    #[arg(long, default_value_t = 10)]
    bins: usize,
}

#[derive(Args, Debug)]
struct DriftArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    common: CommonArgs,

    /// Also write the result as JSON.
    #[arg(long, value_name = "PATH")]
    json: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum MethodArg {
    Shapley,
    ShapleySampled,
    Ig,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum AlignmentArg {
    Sorted,
    Identity,
    Sampled,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct AttributeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    common: CommonArgs,

    #[arg(long, value_enum, default_value = "shapley")]
    method: MethodArg,

    /// `features`, `rows:COL`, `features*rows:COL` or `file:PATH` (CSV with
    /// name,rows,features).
    #[arg(long, value_name = "SPEC")]
    groups: String,

    /// Permutations for shapley-sampled.
    #[arg(long, default_value_t = 1000)]
    permutations: usize,

    /// Trapezoid intervals for ig.
    #[arg(long, default_value_t = 64)]
    steps: usize,

    /// Row pairing; defaults to sorted for w1 and identity otherwise.
    #[arg(long, value_enum)]
    alignment: Option<AlignmentArg>,

    /// Random alignments averaged with --alignment sampled.
    #[arg(long, default_value_t = 30)]
    alignment_samples: usize,

    /// Confidence level of sampled-Shapley intervals.
    #[arg(long, default_value_t = 0.95)]
    ci_level: f64,

    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,

    /// Write the report here instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    rows_per_period: usize,

    #[arg(long, default_value_t = 3)]
    periods: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// `location_case_bug@P` or `feature_spike:FEATURE:MULT@P`; `P` may be
    /// a range `A..B` (end exclusive). Repeatable.
    #[arg(long, value_name = "SPEC")]
    inject: Vec<String>,

    /// Output CSV (`-` for stdout).
    #[arg(long, value_name = "PATH")]
    out: PathBuf,

    /// Write the generator settings as JSON.
    #[arg(long, value_name = "PATH")]
    config_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AxiomsArgs {
    /// A metric, or all of them when omitted.
    #[arg(long, value_enum)]
    metric: Option<MetricArg>,

    #[arg(long, default_value_t = 1000)]
    trials: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, default_value_t = 10)]
    bins: usize,
}

#[derive(Args, Debug)]
struct TimeseriesArgs {
    /// Data file with a period column.
    #[arg(long, value_name = "PATH")]
    data: PathBuf,

    #[arg(long, value_name = "PATH")]
    schema: Option<PathBuf>,

    /// Period column; overrides the schema's.
    #[arg(long, value_name = "COL")]
    period_column: Option<String>,

    #[command(flatten)]
    model: ModelArgs,

    /// Reference period label; defaults to the first period.
    #[arg(long, value_name = "LABEL")]
    reference: Option<String>,

    /// Seed for bootstrapping periods of unequal size.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, default_value_t = 10)]
    bins: usize,

    /// Write JSON here instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

/// Errors caused by the user's input; reported with exit code 2.
#[derive(Debug)]
struct InputError(String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn input_error(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<InputError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Io(io) => io_code(io),
                other if other.is_input_error() => 2,
                _ => 1,
            };
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            return io_code(io);
        }
    }
    1
}

fn io_code(e: &std::io::Error) -> u8 {
    use std::io::ErrorKind::*;
    match e.kind() {
        NotFound | PermissionDenied | InvalidData | InvalidInput => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let argv = match config::locate(&argv, &SUBCOMMANDS) {
        Some(path) => match config::load(Path::new(&path)) {
            Ok(extra) => config::splice(&argv, &SUBCOMMANDS, extra),
            Err(e) => {
                eprintln!("error: {e:#}");
                return ExitCode::from(2);
            }
        },
        None => argv,
    };
    let cli = Cli::parse_from(argv);

    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(1);
        }
    }

    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Drift(a) => cmd_drift(a).map(|_| ExitCode::SUCCESS),
        Command::Attribute(a) => cmd_attribute(a).map(|_| ExitCode::SUCCESS),
        Command::Synth(a) => cmd_synth(a).map(|_| ExitCode::SUCCESS),
        Command::Axioms(a) => cmd_axioms(a),
        Command::Timeseries(a) => cmd_timeseries(a).map(|_| ExitCode::SUCCESS),
    }
}

fn load_schema(path: Option<&Path>, model: &ModelArgs) -> Result<Schema> {
    let mut schema = match path {
        Some(p) => Schema::load(p).with_context(|| format!("schema {}", p.display()))?,
        None if model.model.as_deref() == Some("salary") => salary_schema(),
        None => Schema::default(),
    };
    if let Some(col) = &model.predictions {
        schema.prediction_column = Some(col.clone());
    }
    Ok(schema)
}

fn load(path: &Path, schema: &Schema) -> Result<Table> {
    load_table(path, schema).with_context(|| format!("loading {}", path.display()))
}

fn transforms(model: &ModelArgs) -> Result<TransformChain> {
    Ok(TransformChain(
        model
            .transforms
            .iter()
            .map(|t| t.parse::<Transform>())
            .collect::<Result<_, _>>()?,
    ))
}

fn build_model(model: &ModelArgs, table: &Table) -> Result<ModelFn> {
    let spec = model
        .model
        .as_deref()
        .ok_or_else(|| input_error("--model is required (or --predictions for drift)"))?;
    Ok(Arc::new(resolve_model(spec, table.sample.feature_names())?))
}

fn parse_bootstrap(spec: &str, seed: Option<u64>) -> Result<BootstrapConfig> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(input_error(format!("--bootstrap expects k,R,level, got `{spec}`")));
    }
    let mut cfg = BootstrapConfig {
        seed,
        ..Default::default()
    };
    let bad = |what: &str| input_error(format!("--bootstrap: bad {what} in `{spec}`"));
    if !parts[0].is_empty() {
        cfg.resample_size = Some(parts[0].parse().map_err(|_| bad("k"))?);
    }
    if !parts[1].is_empty() {
        cfg.repetitions = parts[1].parse().map_err(|_| bad("R"))?;
    }
    if !parts[2].is_empty() {
        cfg.level = parts[2].parse().map_err(|_| bad("level"))?;
    }
    Ok(cfg)
}

fn context_options(common: &CommonArgs, model: &ModelArgs) -> Result<ContextOptions> {
    Ok(ContextOptions {
        alignment: None,
        alignment_seed: common.seed,
        transforms: transforms(model)?,
        hist: HistogramConfig::new(common.bins)?,
    })
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) if p != Path::new("-") => {
            fs::write(p, bytes).with_context(|| format!("writing {}", p.display()))
        }
        _ => {
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

fn warn_proportions(e: &Table, b: &Table) {
    if let Some(col) = &e.period_column {
        if let (Ok(le), Ok(lb)) = (e.labels(col), b.labels(col)) {
            proportion_diagnostic(le, lb, PROPORTION_THRESHOLD);
        }
    }
}

#[derive(Serialize)]
struct DriftOutput {
    metric: DriftMetricId,
    drift: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    bootstrap: Option<groupdrift::bootstrap::BootstrapEstimate>,
}

fn cmd_drift(a: DriftArgs) -> Result<()> {
    let schema = load_schema(a.input.schema.as_deref(), &a.model)?;
    let e = load(&a.input.explicand, &schema)?;
    let b = load(&a.input.baseline, &schema)?;
    let metric: DriftMetricId = a.common.metric.into();
    let opts = context_options(&a.common, &a.model)?;
    warn_proportions(&e, &b);

    let out = if let Some(spec) = &a.common.bootstrap {
        let cfg = parse_bootstrap(spec, a.common.seed)?;
        let est = if a.model.predictions.is_some() {
            let column = |t: &Table| {
                let p = t.predictions.clone().unwrap_or_default();
                groupdrift::sample::Sample::from_rows(
                    &p.into_iter().map(|v| vec![v]).collect::<Vec<_>>(),
                    &["prediction"],
                )
            };
            let ident = groupdrift::model::FnModel::new(|r| r[0]);
            bootstrap_drift(&column(&e)?, &column(&b)?, &ident, metric, &opts, &cfg)?
        } else {
            let model = build_model(&a.model, &e)?;
            bootstrap_drift(&e.sample, &b.sample, model.as_ref(), metric, &opts, &cfg)?
        };
        if est.low_confidence {
            log::warn!("{} repetitions are too few for a {} interval", est.repetitions, est.level);
        }
        println!(
            "metric={metric} mean={:?} ci_low={:?} ci_high={:?} level={} repetitions={} resample_size={}{}",
            est.mean,
            est.ci.0,
            est.ci.1,
            est.level,
            est.repetitions,
            est.resample_size,
            if est.low_confidence { " low_confidence" } else { "" }
        );
        DriftOutput {
            metric,
            drift: est.mean,
            bootstrap: Some(est),
        }
    } else {
        if e.nrows() != b.nrows() {
            return Err(input_error(format!(
                "samples have {} and {} rows; use --bootstrap k,R,level for unequal sizes",
                e.nrows(),
                b.nrows()
            )));
        }
        let (mut pe, mut pb) = match (&e.predictions, &b.predictions) {
            (Some(pe), Some(pb)) => (pe.clone(), pb.clone()),
            _ => {
                let model = build_model(&a.model, &e)?;
                // Shared feature validation and diagnostics.
                let pair = validate_pair(e.sample.clone(), b.sample.clone())?;
                (
                    predict_batch(model.as_ref(), pair.explicand.values())?,
                    predict_batch(model.as_ref(), pair.baseline.values())?,
                )
            }
        };
        opts.transforms.apply_in_place(&mut pe)?;
        opts.transforms.apply_in_place(&mut pb)?;
        let d = drift(metric, &pe, &pb, &opts.hist)?;
        println!("metric={metric} drift={d:?}");
        DriftOutput {
            metric,
            drift: d,
            bootstrap: None,
        }
    };
    if let Some(path) = &a.json {
        let mut bytes = serde_json::to_vec_pretty(&out)?;
        bytes.push(b'\n');
        write_output(Some(path), &bytes)?;
    }
    Ok(())
}

fn template_for(spec: &str, table: &Table) -> Result<GroupTemplate> {
    let spec = spec.trim();
    if spec == "features" {
        return Ok(GroupTemplate::PerFeature);
    }
    if let Some(col) = spec.strip_prefix("features*rows:") {
        return Ok(GroupTemplate::FeaturesByRowLabels {
            column: col.to_string(),
            labels: table.labels(col)?.to_vec(),
        });
    }
    if let Some(col) = spec.strip_prefix("rows:") {
        return Ok(GroupTemplate::RowLabels {
            column: col.to_string(),
            labels: table.labels(col)?.to_vec(),
        });
    }
    Err(input_error(format!(
        "--bootstrap supports features, rows:COL and features*rows:COL groups, not `{spec}`"
    )))
}

fn cmd_attribute(a: AttributeArgs) -> Result<()> {
    if a.model.predictions.is_some() {
        return Err(input_error(
            "attribution needs a model to evaluate hybrid samples; --predictions works with drift only",
        ));
    }
    let schema = load_schema(a.input.schema.as_deref(), &a.model)?;
    let e = load(&a.input.explicand, &schema)?;
    let b = load(&a.input.baseline, &schema)?;
    let metric: DriftMetricId = a.common.metric.into();
    let model = build_model(&a.model, &e)?;
    warn_proportions(&e, &b);

    let method = match a.method {
        MethodArg::Shapley => AttributionMethod::ShapleyExact,
        MethodArg::ShapleySampled => AttributionMethod::ShapleySampled(SamplingConfig {
            permutations: a.permutations,
            seed: a.common.seed.unwrap_or(0),
            ci_level: a.ci_level,
            antithetic: true,
        }),
        MethodArg::Ig => {
            if !metric.capabilities().differentiable {
                return Err(Error::NotDifferentiable {
                    metric: metric.name(),
                }
                .into());
            }
            AttributionMethod::Ig(PathConfig {
                steps: a.steps,
                ..Default::default()
            })
        }
    };
    let mut context = context_options(&a.common, &a.model)?;
    context.alignment = a.alignment.map(|al| match al {
        AlignmentArg::Sorted => AlignmentPolicy::SortedPrediction,
        AlignmentArg::Identity => AlignmentPolicy::Identity,
        AlignmentArg::Sampled => AlignmentPolicy::Sampled,
    });
    if context.alignment == Some(AlignmentPolicy::Sampled) && context.alignment_seed.is_none() {
        return Err(input_error("--alignment sampled requires --seed"));
    }
    let opts = AttributeOptions {
        context,
        method,
        alignment_samples: a.alignment_samples,
    };

    let report = if let Some(spec) = &a.common.bootstrap {
        let cfg = parse_bootstrap(spec, a.common.seed)?;
        let template = template_for(&a.groups, &e)?;
        bootstrap_attributions(&e.sample, &b.sample, model, metric, &template, &opts, &cfg)?
    } else {
        if e.nrows() != b.nrows() {
            return Err(input_error(format!(
                "samples have {} and {} rows; use --bootstrap k,R,level for unequal sizes",
                e.nrows(),
                b.nrows()
            )));
        }
        let spec = parse_group_spec(&a.groups, &e)?;
        let pair = validate_pair(e.sample.clone(), b.sample.clone())?;
        attribute(pair, model, metric, &spec, &opts)?
    };
    if let Some(res) = report.estimator.efficiency_residual {
        log::info!("efficiency residual before correction: {res:e}");
    }
    let format = match a.format {
        FormatArg::Json => ReportFormat::Json,
        FormatArg::Csv => ReportFormat::Csv,
    };
    let mut encodings: BTreeMap<String, CategoryMap> = e.category_maps.clone();
    encodings.retain(|_, m| !m.entries.is_empty());
    let bytes = write_report_with_encodings(&report, format, Some(&encodings))?;
    write_output(a.out.as_deref(), &bytes)
}

#[derive(Serialize)]
struct SynthSettings<'a> {
    generator: &'a SalaryGenConfig,
    location_springfield: f64,
    education_grad: f64,
    engineer_type_software: f64,
    experience: &'static str,
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let drift_schedule = a
        .inject
        .iter()
        .map(|s| s.parse::<ScheduledDrift>())
        .collect::<Result<Vec<_>, _>>()?;
    let cfg = SalaryGenConfig {
        rows_per_period: a.rows_per_period,
        periods: a.periods,
        seed: a.seed,
        drift_schedule,
    };
    let data = generate(&cfg)?;
    let mut buf = Vec::new();
    write_records(&mut buf, &data.records)?;
    write_output(Some(&a.out), &buf)?;
    if let Some(path) = &a.config_out {
        let settings = SynthSettings {
            generator: &cfg,
            location_springfield: 0.7,
            education_grad: 0.8,
            engineer_type_software: 0.85,
            experience: "normal(mean 15, sd 10) truncated to [0, 50] by resampling; \
                         relevant_experience capped at experience",
        };
        let mut bytes = serde_json::to_vec_pretty(&settings)?;
        bytes.push(b'\n');
        write_output(Some(path), &bytes)?;
    }
    log::info!("wrote {} rows", data.records.len());
    Ok(())
}

fn cmd_axioms(a: AxiomsArgs) -> Result<ExitCode> {
    let cfg = AxiomSuiteConfig {
        trials: a.trials,
        seed: a.seed,
        hist: HistogramConfig::new(a.bins)?,
    };
    let metrics: Vec<DriftMetricId> = match a.metric {
        Some(m) => vec![m.into()],
        None => DriftMetricId::ALL.to_vec(),
    };
    let mut unexpected = false;
    println!(
        "{:<6} {:<18} {:<9} {:<9} {:<17} counterexample",
        "metric", "axiom", "expected", "observed", "status"
    );
    for metric in metrics {
        for c in check_metric(metric, &cfg) {
            unexpected |= !c.matches_expectation();
            let yn = |b: bool| if b { "holds" } else { "fails" };
            println!(
                "{:<6} {:<18} {:<9} {:<9} {:<17} {}",
                metric.name(),
                c.axiom.to_string(),
                yn(c.expected),
                yn(c.observed),
                c.status(),
                c.counterexample.as_deref().unwrap_or("-")
            );
        }
    }
    Ok(if unexpected {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

#[derive(Serialize)]
struct PeriodDrift {
    period: String,
    rows: usize,
    /// True when the period was compared by bootstrap means because its
    /// size differs from the reference's.
    bootstrapped: bool,
    w1: serde_json::Value,
    evd: serde_json::Value,
    jsd: serde_json::Value,
    ks: serde_json::Value,
}

#[derive(Serialize)]
struct Timeseries {
    reference: String,
    period_column: String,
    periods: Vec<PeriodDrift>,
}

fn number(v: f64) -> serde_json::Value {
    serde_json::from_str(&format_float(v)).expect("finite float")
}

fn cmd_timeseries(a: TimeseriesArgs) -> Result<()> {
    let mut schema = load_schema(a.schema.as_deref(), &a.model)?;
    if let Some(col) = &a.period_column {
        schema.period_column = Some(col.clone());
    }
    let Some(period_column) = schema.period_column.clone() else {
        return Err(input_error("timeseries needs --period-column or a schema with one"));
    };
    let table = load(&a.data, &schema)?;
    let hist = HistogramConfig::new(a.bins)?;
    let tf = transforms(&a.model)?;
    let outputs: Vec<f64> = match &table.predictions {
        Some(p) => p.clone(),
        None => predict_batch(build_model(&a.model, &table)?.as_ref(), table.sample.values())?,
    };
    let mut outputs = outputs;
    tf.apply_in_place(&mut outputs)?;

    let periods = table.periods()?;
    let reference = a.reference.clone().unwrap_or_else(|| periods[0].clone());
    if !periods.contains(&reference) {
        return Err(input_error(format!("no period `{reference}` in column {period_column}")));
    }
    let pick = |label: &str| -> Result<Vec<f64>> {
        Ok(table.period_rows(label)?.into_iter().map(|i| outputs[i]).collect())
    };
    let base = pick(&reference)?;
    let mut rows = Vec::new();
    for p in &periods {
        let cur = pick(p)?;
        let equal = cur.len() == base.len();
        let mut values = Vec::new();
        for metric in DriftMetricId::ALL {
            let v = if equal {
                drift(metric, &cur, &base, &hist)?
            } else {
                let one = |v: &[f64]| {
                    groupdrift::sample::Sample::from_rows(
                        &v.iter().map(|&x| vec![x]).collect::<Vec<_>>(),
                        &["output"],
                    )
                };
                let ident = groupdrift::model::FnModel::new(|r| r[0]);
                bootstrap_drift(
                    &one(&cur)?,
                    &one(&base)?,
                    &ident,
                    metric,
                    &ContextOptions {
                        hist,
                        ..Default::default()
                    },
                    &BootstrapConfig {
                        seed: Some(a.seed),
                        ..Default::default()
                    },
                )?
                .mean
            };
            values.push(number(v));
        }
        let [w1, evd, jsd, ks]: [serde_json::Value; 4] = values.try_into().expect("four metrics");
        rows.push(PeriodDrift {
            period: p.clone(),
            rows: cur.len(),
            bootstrapped: !equal,
            w1,
            evd,
            jsd,
            ks,
        });
    }
    let out = Timeseries {
        reference,
        period_column,
        periods: rows,
    };
    let mut bytes = serde_json::to_vec_pretty(&out)?;
    bytes.push(b'\n');
    write_output(a.out.as_deref(), &bytes)
}
