use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde_json::json;
use splitfit_cli::commands::{
    analyze, compression_curve, fit, run_engine, section_file, sections, simulate, Status, CURVE_FILE, REPORT_FILE,
    SCAN_FILE, SERIES_FILE, TRACE_FILE, TRUTH_FILE,
};
use splitfit_cli::io::{fmt_num, read_json, read_series, Table};
use splitfit_cli::{Config, Engine, FitReport};
use splitfit_core::{Data, Model, ModelDefinition, TimeUnit};
use tempfile::TempDir;

fn config(value: serde_json::Value) -> Config {
    Config::parse(&value.to_string()).unwrap()
}

fn golden(noise: serde_json::Value) -> Config {
    config(json!({
        "model": {"kind": "scaled-square", "truth": {"a": 2.0}, "times": [1, 2, 3]},
        "grid": {"axes": [{"parameter": "a", "lo": 1.9, "hi": 2.1, "points": 200001}]},
        "noise": noise
    }))
}

fn golden_noise() -> serde_json::Value {
    json!({"kind": "custom-vector", "values": [0.1, -0.2, 0.2]})
}

fn exponential(noise: serde_json::Value) -> Config {
    config(json!({
        "model": {
            "kind": "exponential",
            "rate_bounds": [0.0, 2.0],
            "truth": {"p1": 10.0, "p2": 0.5},
            "times": (1..=30).map(|i| i as f64 * 0.25).collect::<Vec<_>>()
        },
        "grid": {"axes": [{"parameter": "p2", "lo": 0.0, "hi": 2.0, "points": 401}]},
        "solver": {"start": {"p1": 8.0, "p2": 0.8}, "step": {"p2": 0.1}, "variant": "modified"},
        "noise": noise
    }))
}

fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
    assert!((a - b).abs() <= tol, "{what}: {a} vs {b} (tol {tol})");
}

/// Every numeric cell must reparse to a value that prints back to the same text.
fn assert_csv_round_trips(path: &Path) {
    let table = Table::read(path).unwrap();
    assert!(!table.header.is_empty(), "{}", path.display());
    let text = fs::read_to_string(path).unwrap();
    assert!(!text.contains('\r'), "{} has CR line endings", path.display());
    for row in &table.rows {
        assert_eq!(row.len(), table.header.len());
        for cell in row {
            if let Ok(x) = cell.parse::<f64>() {
                if !x.is_nan() {
                    assert_eq!(&fmt_num(x), cell, "{}", path.display());
                }
            }
        }
    }
}

fn simulate_to(cfg: &Config, dir: &TempDir) -> Data {
    simulate(cfg, None, dir.path()).unwrap();
    read_series(&dir.path().join(SERIES_FILE), TimeUnit::Seconds).unwrap()
}

#[test]
fn simulate_reproduces_hand_computed_noisy_values() {
    let dir = TempDir::new().unwrap();
    let data = simulate_to(&golden(golden_noise()), &dir);
    for (v, want) in data.values().iter().zip([2.1, 7.8, 18.2]) {
        assert_close(*v, want, 1e-12, "simulated value");
    }
    let truth: splitfit_cli::Truth = read_json(&dir.path().join(TRUTH_FILE)).unwrap();
    assert_eq!(truth.values, vec![2.0]);
    assert_eq!(truth.parameters, vec!["a".to_string()]);

    let clean = simulate_to(&golden(json!({"kind": "none"})), &TempDir::new().unwrap());
    assert_eq!(clean.values(), &[2.0, 8.0, 18.0]);
}

#[test]
fn golden_fit_sections_and_analysis() {
    let dir = TempDir::new().unwrap();
    let cfg = golden(golden_noise());
    let data = simulate_to(&cfg, &dir);
    let report = fit(&cfg, &data, Engine::Grid, None, dir.path()).unwrap();
    let a = report.value("a").unwrap();
    assert_close(a, 2.011224, 5e-7, "a'");
    assert_close(report.merit.unwrap(), 0.077653, 5e-7, "merit");
    assert_eq!(report.evaluations, 200001);
    assert_eq!(report.status, Status::Ok);

    let written = sections(&cfg, &data, &report, dir.path()).unwrap();
    assert_eq!(written, vec![dir.path().join(section_file("a"))]);
    let table = Table::read(&written[0]).unwrap();
    let (xr, fr, xf, ff) = (table.numbers(0).unwrap(), table.numbers(1).unwrap(), table.numbers(2).unwrap(), table.numbers(3).unwrap());
    let f_min = report.merit.unwrap();
    for i in (0..xr.len()).step_by(997) {
        assert_eq!(xr[i], xf[i]);
        assert_close(ff[i], 98.0 * (xf[i] - a).powi(2), 1e-9, "follower section");
        let direct: f64 = [(1.0, 2.1), (2.0, 7.8), (3.0, 18.2)].iter().map(|(t, f)| (f - xr[i] * t * t).powi(2)).sum();
        assert_close(fr[i], direct, 1e-9, "real-life section");
        // p_min sits on the grid, so the offset holds to grid accuracy
        assert_close(fr[i], ff[i] + f_min, 1e-4, "real-life minus follower");
    }

    let analysis = analyze(&cfg, &data, &report, dir.path()).unwrap();
    let e = &analysis.error_intervals[0];
    let exact = (analysis.noise_norm_sq / 98.0).sqrt();
    assert_close(e.half_width, exact, 1e-6, "half-width");
    assert_close(e.half_width, 0.028, 5e-4, "half-width");
    assert_close(2.0 * e.half_width, 0.056, 1e-3, "width");
    let true_error = analysis.true_error.as_ref().unwrap()[0];
    assert_close(true_error, 0.011, 5e-4, "true error");
    assert_close(true_error / (2.0 * e.half_width), 0.2, 0.01, "error / width");
    assert!(analysis.max_identity_residual < 1e-10);
    assert!(analysis.probes.iter().all(|p| p.in_band));
}

#[test]
fn zero_noise_sections_coincide_and_width_vanishes() {
    let dir = TempDir::new().unwrap();
    let cfg = golden(json!({"kind": "none"}));
    let data = simulate_to(&cfg, &dir);
    let report = fit(&cfg, &data, Engine::Grid, None, dir.path()).unwrap();
    assert_eq!(report.value("a"), Some(2.0));
    let path = &sections(&cfg, &data, &report, dir.path()).unwrap()[0];
    let table = Table::read(path).unwrap();
    assert_eq!(table.numbers(1).unwrap(), table.numbers(3).unwrap());
    let analysis = analyze(&cfg, &data, &report, dir.path()).unwrap();
    assert_eq!(analysis.noise_norm_sq, 0.0);
    assert_eq!(analysis.error_intervals[0].half_width, 0.0);
}

#[test]
fn identical_inputs_give_byte_identical_files() {
    let cfg = exponential(json!({"kind": "gaussian", "amplitude": 0.05, "seed": 17}));
    let mut runs = Vec::new();
    for _ in 0..2 {
        let dir = TempDir::new().unwrap();
        let data = simulate_to(&cfg, &dir);
        let report = fit(&cfg, &data, Engine::Grid, None, dir.path()).unwrap();
        sections(&cfg, &data, &report, dir.path()).unwrap();
        analyze(&cfg, &data, &report, dir.path()).unwrap();
        let sub = dir.path().join("secant");
        fit(&cfg, &data, Engine::SecantEliminated, Some(3), &sub).unwrap();
        runs.push(dir);
    }
    let files = [
        SERIES_FILE.to_string(),
        TRUTH_FILE.into(),
        REPORT_FILE.into(),
        SCAN_FILE.into(),
        section_file("p2"),
        "analysis.json".into(),
        format!("secant/{REPORT_FILE}"),
        format!("secant/{TRACE_FILE}"),
    ];
    for f in &files {
        let a = fs::read(runs[0].path().join(f)).unwrap();
        let b = fs::read(runs[1].path().join(f)).unwrap();
        assert!(a == b, "{f} differs between runs");
    }

    // another seed changes the data
    let dir = TempDir::new().unwrap();
    simulate(&cfg, Some(18), dir.path()).unwrap();
    assert_ne!(
        fs::read(dir.path().join(SERIES_FILE)).unwrap(),
        fs::read(runs[0].path().join(SERIES_FILE)).unwrap()
    );
}

#[test]
fn every_emitted_csv_reads_back() {
    let dir = TempDir::new().unwrap();
    let cfg = exponential(json!({"kind": "uniform", "amplitude": 0.05, "seed": 2}));
    let data = simulate_to(&cfg, &dir);
    assert_eq!(read_series(&dir.path().join(SERIES_FILE), TimeUnit::Seconds).unwrap(), data);
    let report = fit(&cfg, &data, Engine::Grid, None, dir.path()).unwrap();
    sections(&cfg, &data, &report, dir.path()).unwrap();
    fit(&cfg, &data, Engine::Secant, None, &dir.path().join("full")).unwrap();
    for f in [SERIES_FILE.to_string(), SCAN_FILE.into(), section_file("p2"), format!("full/{TRACE_FILE}")] {
        assert_csv_round_trips(&dir.path().join(f));
    }
    let scan = Table::read(&dir.path().join(SCAN_FILE)).unwrap();
    assert_eq!(scan.header, ["p1", "p2", "merit", "effective_rank", "failed"]);
    assert_eq!(scan.rows.len(), 401);
    let report_back: FitReport = read_json(&dir.path().join(REPORT_FILE)).unwrap();
    assert_eq!(report_back, report);
}

#[test]
fn secant_engines_agree_with_the_grid() {
    let dir = TempDir::new().unwrap();
    let cfg = exponential(json!({"kind": "gaussian", "amplitude": 0.05, "seed": 5}));
    let data = simulate_to(&cfg, &dir);
    let grid = fit(&cfg, &data, Engine::Grid, None, &dir.path().join("g")).unwrap();
    let step = 2.0 / 400.0;
    for engine in [Engine::SecantEliminated, Engine::Secant] {
        let r = fit(&cfg, &data, engine, None, &dir.path().join(format!("{engine:?}"))).unwrap();
        assert_close(r.value("p2").unwrap(), grid.value("p2").unwrap(), step, "p2");
        assert!(r.merit.unwrap() <= grid.merit.unwrap() + 1e-12, "{engine:?} merit above the grid minimum");
        assert!(r.evaluations >= 1);
        assert!(!r.error_intervals.is_empty());
    }
}

/// Wraps a model so that every `evaluate` and `basis` call over the schedule is counted.
fn counted(model: &Model) -> (Model, Arc<AtomicUsize>, Arc<AtomicUsize>) {
    let (evals, bases) = (Arc::new(AtomicUsize::new(0)), Arc::new(AtomicUsize::new(0)));
    let (m1, m2, e, b) = (model.clone(), model.clone(), evals.clone(), bases.clone());
    let wrapped = ModelDefinition::new(
        "counted",
        (**model.space()).clone(),
        move |t: f64, p: &[f64]| {
            e.fetch_add(1, Ordering::Relaxed);
            m1.evaluate(t, p)
        },
    )
    .with_basis(move |t: f64, p2: &[f64], out: &mut [f64]| {
        b.fetch_add(1, Ordering::Relaxed);
        out.copy_from_slice(&m2.basis(t, p2).unwrap());
    });
    (wrapped, evals, bases)
}

#[test]
fn reported_evaluations_match_true_call_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = exponential(json!({"kind": "gaussian", "amplitude": 0.05, "seed": 8}));
    let data = simulate_to(&cfg, &dir);
    let n = data.len();
    let model = cfg.build_model().unwrap();

    // grid and eliminated secant: one design matrix per evaluation
    for engine in [Engine::Grid, Engine::SecantEliminated] {
        let (m, _, bases) = counted(&model);
        let outcome = run_engine(&m, &data, &cfg, engine, None).unwrap();
        assert_eq!(bases.load(Ordering::Relaxed), outcome.evaluations * n, "{engine:?}");
        let report = fit(&cfg, &data, engine, None, &dir.path().join(format!("{engine:?}"))).unwrap();
        assert_eq!(report.evaluations, outcome.evaluations);
    }
    // full-space secant: one response per evaluation, no elimination
    let (m, evals, bases) = counted(&model);
    let outcome = run_engine(&m, &data, &cfg, Engine::Secant, None).unwrap();
    assert_eq!(bases.load(Ordering::Relaxed), 0);
    assert_eq!(evals.load(Ordering::Relaxed), outcome.evaluations * n);
    assert!(outcome.evaluations >= 3);
}

#[test]
fn solver_failure_still_writes_best_point() {
    let dir = TempDir::new().unwrap();
    let mut cfg = exponential(json!({"kind": "none"}));
    cfg.model.kind = splitfit_cli::config::ModelKind::Exponential { rate_bounds: None };
    cfg.model.times = (1..=100).map(f64::from).collect();
    let data = simulate_to(&cfg, &dir);
    // the second trial overflows the response
    cfg.solver.start = [("p1".to_string(), 1.0), ("p2".to_string(), -7.0)].into();
    cfg.solver.step = [("p2".to_string(), -1.0)].into();
    let err = fit(&cfg, &data, Engine::SecantEliminated, None, dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), 4);
    let report: FitReport = read_json(&dir.path().join(REPORT_FILE)).unwrap();
    assert_eq!(report.status, Status::Failed);
    assert_eq!(report.value("p2"), Some(-7.0));
    assert!(report.evaluations >= 1 && report.failure.is_some());
}

// ---------------------------------------------------------------------------------------
// consolidation versions

const IC: [f64; 4] = [1e8, -4e6, 4e4, 150.0];

fn consolidation(version: &str, extra: serde_json::Value, axes: serde_json::Value) -> Config {
    let mut truth = json!({"A": IC[0], "B": IC[1], "C": IC[2], "sigma_inf": IC[3], "c": 1e-7});
    truth.as_object_mut().unwrap().extend(extra.as_object().unwrap().clone());
    config(json!({
        "model": {
            "kind": "consolidation", "version": version, "h": 0.01, "t1": 30.0,
            "truth": truth,
            "times": (0..40).map(|i| 10f64.powf(i as f64 * 5.0 / 39.0)).collect::<Vec<_>>()
        },
        "grid": {"axes": axes}
    }))
}

fn linear_axis(name: &str, lo: f64, hi: f64, points: usize) -> serde_json::Value {
    json!({"parameter": name, "lo": lo, "hi": hi, "points": points})
}

fn check_round_trip(cfg: &Config, steps: &[(&str, f64)]) -> FitReport {
    let dir = TempDir::new().unwrap();
    let data = simulate_to(cfg, &dir);
    let report = fit(cfg, &data, Engine::Grid, None, dir.path()).unwrap();
    let model = cfg.build_model().unwrap();
    let truth = cfg.truth(model.space()).unwrap();
    for (name, &t) in report.parameters.iter().zip(&truth) {
        let got = report.value(name).unwrap();
        match steps.iter().find(|(n, _)| n == name) {
            Some(&(_, step)) => assert!((got - t).abs() <= step, "{name}: {got} vs {t}, step {step}"),
            None => assert_close(got, t, 1e-6 * t.abs().max(1.0), name),
        }
    }
    report
}

#[test]
fn round_trip_hc_on_a_fine_axis() {
    let cfg = consolidation(
        "HC",
        json!({}),
        json!([{"parameter": "c", "lo": 1e-7 / 1.5, "hi": 1.5e-7, "points": 54, "spacing": "log"}]),
    );
    let step = 1e-7 * (1.5f64.powf(2.0 / 53.0) - 1.0);
    let dir = TempDir::new().unwrap();
    let data = simulate_to(&cfg, &dir);
    let report = fit(&cfg, &data, Engine::Grid, None, dir.path()).unwrap();
    assert_eq!(report.evaluations, 54);
    assert!((report.value("c").unwrap() - 1e-7).abs() <= step);

    let on_node = consolidation("HC", json!({}), json!([linear_axis("c", 0.5e-7, 1.5e-7, 101)]));
    check_round_trip(&on_node, &[("c", 1e-9)]);
}

#[test]
fn round_trip_hcr_and_hcrt() {
    let hcr = consolidation("HCR", json!({"sk": 2.0}), json!([linear_axis("c", 0.5e-7, 1.5e-7, 41)]));
    check_round_trip(&hcr, &[("c", 2.5e-9)]);
    let hcrt = consolidation(
        "HCRT",
        json!({"sk": 2.0, "t3": 5.0}),
        json!([linear_axis("c", 0.5e-7, 1.5e-7, 9), linear_axis("t3", 0.0, 10.0, 9)]),
    );
    check_round_trip(&hcrt, &[("c", 1.25e-8), ("t3", 1.25)]);
}

#[test]
fn round_trip_h_on_a_coarse_grid() {
    let cfg = consolidation(
        "H",
        json!({"s": 0.02, "t3": 20.0, "t1": 30.0}),
        json!([
            linear_axis("c", 0.5e-7, 1.5e-7, 5),
            linear_axis("s", 0.0, 0.04, 5),
            linear_axis("t3", 0.0, 40.0, 5),
            linear_axis("t1", 10.0, 50.0, 5)
        ]),
    );
    let report = check_round_trip(&cfg, &[("c", 2.5e-8), ("s", 0.01), ("t3", 10.0), ("t1", 10.0)]);
    assert_eq!(report.evaluations, 625);
}

// ---------------------------------------------------------------------------------------
// multistage

#[test]
fn compression_curve_recovers_stage_stresses() {
    let c_axis = json!([linear_axis("c", 0.5e-7, 1.5e-7, 41)]);
    let long_cfg = consolidation("HC", json!({}), c_axis.clone());
    let dir = TempDir::new().unwrap();
    let long_data = simulate_to(&long_cfg, &dir);
    let long = fit(&long_cfg, &long_data, Engine::Grid, None, dir.path()).unwrap();
    assert_close(long.value("c").unwrap(), 1e-7, 1e-20, "long-stage c");

    // short stages share c and differ in initial condition and σ∞
    let stages: Vec<(serde_json::Value, f64)> = vec![
        (json!({"A": 5e7, "B": -3e6, "C": 3e4, "sigma_inf": 200.0}), 200.0),
        (json!({"A": 0.0, "B": -2e6, "C": 2e4, "sigma_inf": 300.0}), 300.0),
        (json!({"A": -5e7, "B": -1e6, "C": 2e4, "sigma_inf": 400.0}), 400.0),
    ];
    let mut data = Vec::new();
    for (truth, _) in &stages {
        let mut cfg = consolidation("HC", truth.clone(), c_axis.clone());
        cfg.model.times = (1..=20).map(|i| i as f64 * 5.0).collect();
        data.push(simulate_to(&cfg, &TempDir::new().unwrap()));
    }
    let points = compression_curve(&long_cfg, &data, &long, dir.path()).unwrap();
    for (p, (_, sigma)) in points.iter().zip(&stages) {
        assert_eq!(p.gap, 0.0);
        assert_close(p.parameters[3], *sigma, 1e-6 * sigma, "σ∞");
    }
    assert_csv_round_trips(&dir.path().join(CURVE_FILE));
    let table = Table::read(&dir.path().join(CURVE_FILE)).unwrap();
    assert_eq!(table.header, ["stage", "A", "B", "C", "sigma_inf", "c", "merit", "gap"]);

    // the long stage alone reproduces its own fit
    let own = compression_curve(&long_cfg, std::slice::from_ref(&long_data), &long, dir.path()).unwrap();
    assert_eq!(own[0].parameters, long.solution);

    // a long-stage value outside the scanned range is a configuration error
    let narrow = consolidation("HC", json!({}), json!([linear_axis("c", 2e-7, 3e-7, 11)]));
    let err = compression_curve(&narrow, &data, &long, dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}
