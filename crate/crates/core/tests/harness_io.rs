//! End-to-end harness checks: persistence, determinism, self-consistency of
//! diagnostics, running integrals, golden values and the CLI surface.

use std::path::Path;
use std::process::Command;

use filtered_observer::diagnostics::running_integral;
use filtered_observer::harness::csv::{diagnose_table, format_csv};
use filtered_observer::harness::run::simulate;
use filtered_observer::harness::{
    diagnose_trace, parse_csv, render_svg, run_scenario, scenarios, DiagnoseOptions, EstimatorKind, ScenarioConfig,
};
use filtered_observer::signals::d_default;

fn short(t_final: f64) -> ScenarioConfig {
    ScenarioConfig { t_final, emit_svg: false, ..Default::default() }
}

#[test]
fn csv_round_trip_within_twelve_digits() {
    let art = simulate(&short(20.0)).unwrap();
    let text = format_csv(&art.records);
    assert!(text.ends_with('\n') && !text.contains('\r'));
    let back = parse_csv(&text, Path::new("mem.csv")).unwrap();
    assert_eq!(back.columns, art.records.columns);
    assert_eq!(back.n_rows(), art.records.n_rows());
    for (a, b) in art.records.data.iter().zip(&back.data) {
        assert!((a - b).abs() <= 5e-12 * a.abs(), "{a} vs {b}");
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let cfg = short(30.0);
    let (a, b) = (simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
    assert_eq!(format_csv(&a.records), format_csv(&b.records));
    let fa = scenarios::errors_figure(&a, "x");
    let fb = scenarios::errors_figure(&b, "x");
    assert_eq!(render_svg(&fa).unwrap(), render_svg(&fb).unwrap());
    assert_eq!(
        serde_json::to_string(&a.report()).unwrap(),
        serde_json::to_string(&b.report()).unwrap()
    );
}

#[test]
fn running_integrals_match_quadrature_of_records() {
    let cfg = ScenarioConfig { t_final: 20.0, record_every: 1, emit_svg: false, ..Default::default() };
    let art = simulate(&cfg).unwrap();
    let t = art.records.column("t").unwrap();
    let det = art.records.column("det_M").unwrap();
    let sq: Vec<f64> = det.iter().map(|d| d * d).collect();
    let quad = running_integral(&t, &sq);
    let acc = art.records.column("int_det2").unwrap();
    let scale = acc.last().unwrap().abs();
    for (a, q) in acc.iter().zip(&quad) {
        assert!((a - q).abs() <= 1e-6 * scale, "{a} vs {q}");
    }
    let ddot: Vec<f64> = t.iter().map(|&s| d_default(s).unwrap().d_dot.powi(2)).collect();
    let quad = running_integral(&t, &ddot);
    let acc = art.records.column("int_ddot2").unwrap();
    for (a, q) in acc.iter().zip(&quad) {
        assert!((a - q).abs() <= 1e-6 * acc.last().unwrap(), "{a} vs {q}");
    }
}

#[test]
fn diagnose_reproduces_in_process_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig { output_dir: Some(dir.path().to_path_buf()), ..short(300.0) };
    let art = run_scenario(&cfg).unwrap();
    let rep = diagnose_trace(&dir.path().join("run.csv"), &DiagnoseOptions::default()).unwrap();
    let (a, b) = (art.excitation.divergence_fit.unwrap(), rep.divergence_fit.unwrap());
    assert!((a.slope - b.slope).abs() <= 1e-9 * a.slope.abs());
    assert!((a.relative_residual - b.relative_residual).abs() <= 1e-9);
    assert_eq!(art.excitation.growth, rep.growth);
    for (x, y) in art.excitation.det_l2_integral.iter().zip(&rep.det_l2_integral) {
        assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
    }
    let (p, q) = (art.excitation.pe_margin.unwrap(), rep.pe_margin.unwrap());
    assert!((p.margin - q.margin).abs() <= 1e-9);
    for f in ["run.csv", "run_report.json", "run_metadata.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    // the metadata echo alone reproduces the run
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run_metadata.json")).unwrap()).unwrap();
    let echoed: ScenarioConfig = serde_json::from_value(meta["config"].clone()).unwrap();
    assert_eq!(echoed, cfg);
}

#[test]
fn regressor_only_table_gives_pe_margin() {
    let art = simulate(&ScenarioConfig { estimators: vec![EstimatorKind::VecB1], ..short(100.0) }).unwrap();
    let rep = diagnose_table(&art.records, &DiagnoseOptions::default()).unwrap();
    assert!(rep.divergence_fit.is_none());
    assert!(rep.pe_margin.unwrap().margin > 0.0);
}

#[test]
fn default_run_matches_golden_values() {
    let golden: serde_json::Value =
        serde_json::from_str(include_str!("golden/baselines.json")).unwrap();
    let art = simulate(&short(300.0)).unwrap();
    for (col, v) in golden["fig1_t300"].as_object().unwrap() {
        let want = v.as_f64().unwrap();
        let got = art.final_value(col).unwrap();
        assert!((got - want).abs() <= 1e-6 * want.abs() + 1e-12, "{col}: {got} vs {want}");
    }
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_filtered-observer"))
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"schema_version": 1, "gamma": -1}"#).unwrap();
    let out = cli().arg("validate").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma"));

    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "t,phi_1\n0,1\n0.1\n").unwrap();
    let out = cli().arg("diagnose").arg(&csv).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":3:"));

    let out = cli().arg("run").arg(dir.path().join("missing.json")).output().unwrap();
    assert_eq!(out.status.code(), Some(4));

    let good = dir.path().join("good.json");
    let out_dir = dir.path().join("out");
    std::fs::write(&good, format!(r#"{{"schema_version": 1, "t_final": 1.0, "output_dir": {:?}}}"#, out_dir)).unwrap();
    let out = cli().arg("validate").arg(&good).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let out = cli().args(["run", good.to_str().unwrap(), "--gamma", "2", "--m0", "identity"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let meta = std::fs::read_to_string(out_dir.join("run_metadata.json")).unwrap();
    assert!(meta.contains("\"gamma\": 2.0") && meta.contains("identity"));
    assert!(out_dir.join("run_errors.svg").exists() && out_dir.join("run_det.svg").exists());

    let stiff = dir.path().join("stiff.json");
    std::fs::write(&stiff, r#"{"schema_version": 1, "gamma": 10000}"#).unwrap();
    let out = cli().arg("validate").arg(&stiff).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn nonzero_initial_filter_is_supported() {
    let cfg = ScenarioConfig {
        initial_conditions: serde_json::from_str(r#"{"m0": "identity"}"#).unwrap(),
        ..short(5.0)
    };
    let art = simulate(&cfg).unwrap();
    assert_eq!(art.records.row(0)[art.records.index_of("det_M").unwrap()], 1.0);
    assert!(art.lyapunov_of(EstimatorKind::MatB).unwrap().violations == 0);
}
