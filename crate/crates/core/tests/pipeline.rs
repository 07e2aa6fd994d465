use groupdrift::attribute::{attribute, AttributeOptions, AttributionMethod};
use groupdrift::bootstrap::{bootstrap_attributions, BootstrapConfig, GroupTemplate};
use groupdrift::io::{
    load_table_from_reader, parse_group_spec, read_report_json, write_report, ReportFormat, Schema,
};
use groupdrift::metrics::DriftMetricId;
use groupdrift::model::{resolve_model, ModelFn};
use groupdrift::sample::validate_pair;
use groupdrift::shapley::SamplingConfig;
use groupdrift::synth::{generate, salary_model, salary_schema, write_records, SalaryGenConfig};

fn salary_csv(seed: u64, inject: &[&str]) -> Vec<u8> {
    let cfg = SalaryGenConfig {
        rows_per_period: 300,
        periods: 3,
        seed,
        drift_schedule: inject.iter().map(|s| s.parse().unwrap()).collect(),
    };
    let mut buf = Vec::new();
    write_records(&mut buf, &generate(&cfg).unwrap().records).unwrap();
    buf
}

#[test]
fn csv_to_report_round_trip() {
    let schema = salary_schema();
    let e = load_table_from_reader(&salary_csv(1, &["location_case_bug@1"])[..], &schema).unwrap();
    let b = load_table_from_reader(&salary_csv(2, &[])[..], &schema).unwrap();
    assert_eq!(e.periods().unwrap(), ["0", "1", "2"]);
    assert_eq!(e.sample.ncols(), 5);

    let spec = parse_group_spec("features*rows:day", &e).unwrap();
    assert_eq!(spec.len(), 15);
    let model: ModelFn = salary_model();
    let opts = AttributeOptions {
        method: AttributionMethod::ShapleySampled(SamplingConfig {
            permutations: 40,
            seed: 9,
            ..Default::default()
        }),
        ..Default::default()
    };
    let pair = validate_pair(e.sample.clone(), b.sample.clone()).unwrap();
    let report = attribute(pair, model, DriftMetricId::W1, &spec, &opts).unwrap();
    assert!((report.attribution_sum() - report.total_drift).abs() < 1e-9 * report.total_drift.abs().max(1.0));
    let top = report
        .per_group
        .iter()
        .max_by(|a, b| a.attribution.total_cmp(&b.attribution))
        .unwrap();
    assert!(top.group.contains("location") && top.group.contains('1'), "{}", top.group);

    let bytes = write_report(&report, ReportFormat::Json).unwrap();
    assert_eq!(read_report_json(&bytes).unwrap(), report);
}

#[test]
fn expression_model_over_loaded_columns() {
    let text = "id,a,b,label\nr1,1,2,x\nr2,3,4,y\n";
    let schema = Schema::from_json(r#"{"id_column": "id", "exclude": ["label"]}"#).unwrap();
    let t = load_table_from_reader(text.as_bytes(), &schema).unwrap();
    assert_eq!(t.sample.feature_names(), ["a", "b"]);
    assert_eq!(t.sample.row_ids(), ["r1", "r2"]);
    let m = resolve_model("a * b + 1", t.sample.feature_names()).unwrap();
    assert_eq!(groupdrift::model::predict_batch(&m, t.sample.values()).unwrap(), [3.0, 13.0]);
}

#[test]
fn bootstrap_handles_unequal_periods() {
    let schema = salary_schema();
    let e = load_table_from_reader(&salary_csv(3, &["location_case_bug@0"])[..], &schema).unwrap();
    let big = load_table_from_reader(&salary_csv(4, &[])[..], &schema).unwrap();
    let b = big.sample.select_rows(&(0..700).collect::<Vec<_>>()).unwrap();
    let opts = AttributeOptions::default();
    let cfg = BootstrapConfig {
        resample_size: Some(60),
        repetitions: 20,
        seed: Some(5),
        ..Default::default()
    };
    let run = || {
        bootstrap_attributions(
            &e.sample,
            &b,
            salary_model(),
            DriftMetricId::Evd,
            &GroupTemplate::PerFeature,
            &opts,
            &cfg,
        )
        .unwrap()
    };
    let report = run();
    assert_eq!(report.per_group.len(), 5);
    assert!(report.per_group.iter().all(|g| g.ci.is_some()));
    let loc = report.get("location").unwrap();
    assert!(loc < 0.0, "case bug lowers salaries: {loc}");
    assert_eq!(report, run());
}
