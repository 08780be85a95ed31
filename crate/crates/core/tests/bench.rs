use calibkit::bench::{
    cross_validate, evaluate_cell, render_report, split, stratified_folds, BenchmarkSpec,
    ReportFormat,
};
use calibkit::calibrators::Method;
use calibkit::datagen::{gen_dirichlet, DirichletSpec};
use calibkit::metrics::binned_ece;
use calibkit::{PredictionDataset, Wrapper};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn overconfident(n: usize, k: usize, seed: u64) -> PredictionDataset {
    gen_dirichlet(&DirichletSpec::symmetric(n, k, 1.0, 0.5, seed)).unwrap()
}

fn spec(methods: Vec<Method>, folds: usize) -> BenchmarkSpec {
    BenchmarkSpec {
        methods,
        wrappers: Wrapper::ALL.to_vec(),
        folds,
        ..BenchmarkSpec::default()
    }
}

#[test]
fn benchmark_is_deterministic() {
    let ds = overconfident(3000, 4, 1);
    let s = spec(vec![Method::Histogram, Method::Temperature], 3);
    let a = render_report(&cross_validate(&s, &ds).unwrap(), ReportFormat::Json).unwrap();
    let b = render_report(&cross_validate(&s, &ds).unwrap(), ReportFormat::Json).unwrap();
    assert_eq!(a, b);
}

#[test]
fn identity_method_has_zero_relative_ece() {
    let ds = overconfident(2000, 3, 2);
    let report = cross_validate(&spec(vec![Method::Identity], 4), &ds).unwrap();
    for agg in &report.aggregates {
        let rel = agg.ece_relative.unwrap();
        assert_eq!((rel.mean, rel.std), (0.0, 0.0), "{}", agg.wrapper);
    }
}

#[test]
fn recalibration_helps_on_overconfident_data() {
    let ds = overconfident(12_000, 4, 3);
    let report =
        cross_validate(&spec(vec![Method::Histogram, Method::Temperature], 4), &ds).unwrap();
    let uncalibrated: f64 = {
        let a = stratified_folds(&ds, 4, report.spec.seed).unwrap();
        (0..4)
            .map(|f| binned_ece(&ds.subset(&split(&a, f).1), &report.spec.binning))
            .sum::<f64>()
            / 4.0
    };
    for m in [Method::Histogram, Method::Temperature] {
        for w in [Wrapper::Baseline, Wrapper::Reduced] {
            let agg = report.aggregate(m, w).unwrap();
            assert!(
                agg.ece.mean < 0.5 * uncalibrated,
                "{m}/{w}: {} vs {uncalibrated}",
                agg.ece.mean
            );
        }
    }
    // Reduced histogram fits the confidence directly, so it should not lose
    // to one-vs-all histogram binning on the top-label error.
    let base = report
        .aggregate(Method::Histogram, Wrapper::Baseline)
        .unwrap()
        .ece
        .mean;
    let reduced = report
        .aggregate(Method::Histogram, Wrapper::Reduced)
        .unwrap()
        .ece
        .mean;
    assert!(reduced < base, "{reduced} vs {base}");
}

#[test]
fn argmax_preserving_temperature_has_full_condition_mass() {
    let ds = overconfident(3000, 5, 4);
    let s = BenchmarkSpec {
        argmax_preserving: true,
        ..spec(vec![Method::Temperature], 3)
    };
    let report = cross_validate(&s, &ds).unwrap();
    for cell in &report.cells {
        match cell.wrapper {
            Wrapper::Baseline | Wrapper::Classwise => assert!(cell.condition_mass.is_none()),
            _ => assert_eq!(cell.condition_mass, Some(1.0), "{}", cell.wrapper),
        }
    }
}

#[test]
fn permuting_held_out_labels_only_moves_label_metrics() {
    // The fitted map never sees test labels, so shuffling them must leave
    // the condition mass alone and destroy accuracy.
    let ds = overconfident(4000, 4, 5);
    let s = spec(vec![Method::Isotonic], 2);
    let a = stratified_folds(&ds, 2, 0).unwrap();
    let (train, test) = split(&a, 0);
    let (train, test) = (ds.subset(&train), ds.subset(&test));
    let mut labels = test.labels().to_vec();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(9));
    let shuffled = test.clone().with_labels(labels).unwrap();
    for w in Wrapper::ALL {
        let real = evaluate_cell(&s, Method::Isotonic, w, &train, &test).unwrap();
        let fake = evaluate_cell(&s, Method::Isotonic, w, &train, &shuffled).unwrap();
        assert_eq!(real.condition_mass, fake.condition_mass);
        assert!(
            fake.accuracy < 0.6 * real.accuracy,
            "{w}: {} vs {}",
            fake.accuracy,
            real.accuracy
        );
        assert!(fake.ece > real.ece);
    }
}

#[test]
fn csv_and_json_reports_agree() {
    let ds = overconfident(2400, 3, 6);
    let report = cross_validate(&spec(vec![Method::Beta, Method::Histogram], 3), &ds).unwrap();
    let json: serde_json::Value =
        serde_json::from_str(&render_report(&report, ReportFormat::Json).unwrap()).unwrap();
    let csv = render_report(&report, ReportFormat::Csv).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 8 + 3);
    let cells = json["cells"].as_array().unwrap();
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), cells.len());
    for (row, cell) in rows.iter().zip(cells) {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[0], cell["method"].as_str().unwrap());
        assert_eq!(fields[1], cell["wrapper"].as_str().unwrap());
        assert_eq!(
            fields[2].parse::<u64>().unwrap(),
            cell["fold"].as_u64().unwrap() + 1
        );
        for (i, key) in [(3, "ece"), (4, "cwece"), (5, "accuracy"), (6, "nll")] {
            assert_eq!(
                fields[i].parse::<f64>().unwrap(),
                cell[key].as_f64().unwrap(),
                "{key}"
            );
        }
        for k in 0..3 {
            assert_eq!(
                fields[8 + k].parse::<f64>().unwrap(),
                cell["cwece_per_class"][k].as_f64().unwrap()
            );
        }
    }
}

#[test]
fn markdown_report_has_both_tables() {
    let ds = overconfident(1500, 3, 7);
    let report = cross_validate(&spec(vec![Method::Histogram], 3), &ds).unwrap();
    let md = render_report(&report, ReportFormat::Markdown).unwrap();
    assert!(md.contains("ECE") && md.contains("cwECE"));
    assert!(md.contains('%'));
    assert!(md.contains("classwise-reduced"));
}

#[test]
fn too_many_folds_is_reported() {
    let ds = overconfident(30, 3, 8);
    let err = cross_validate(&spec(vec![Method::Histogram], 20), &ds)
        .unwrap_err()
        .to_string();
    assert!(err.contains("fewer folds"), "{err}");
}
