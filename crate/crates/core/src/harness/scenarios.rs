//! Built-in comparison scenarios: the three-estimator comparison and the
//! adaptation-gain sweep of the matrix estimator.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::diagnostics::OvershootMetric;

use super::config::{EstimatorKind, ScenarioConfig};
use super::csv::format_value;
use super::run::{simulate, RunArtifacts};
use super::svg::{emit_svg, Figure, LineStyle, Panel, Series};
use super::{write_file, HarnessError};

/// `(γ, dt)` pairs of the sweep. The step shrinks with `γ` because the
/// fastest error-dynamics rate grows linearly in it.
pub const GAMMA_SWEEP: [(f64, f64); 3] = [(1.0, 1e-3), (100.0, 1e-4), (1e4, 1e-5)];

/// Recording interval of the sweep runs, in seconds.
pub const SWEEP_RECORD_INTERVAL: f64 = 0.01;

pub fn style_of(kind: EstimatorKind) -> LineStyle {
    match kind {
        EstimatorKind::VecB1 => LineStyle::Dashed,
        EstimatorKind::VecB2 => LineStyle::DashDot,
        EstimatorKind::MatB => LineStyle::Solid,
    }
}

fn label_of(kind: EstimatorKind) -> &'static str {
    match kind {
        EstimatorKind::VecB1 => "estimator b1",
        EstimatorKind::VecB2 => "estimator b2",
        EstimatorKind::MatB => "estimator B",
    }
}

fn column_points(art: &RunArtifacts, column: &str) -> Vec<(f64, f64)> {
    let t = art.records.column("t").unwrap_or_default();
    let v = art.records.column(column).unwrap_or_default();
    t.into_iter().zip(v).collect()
}

fn panel(title: &str, y_label: &str, log_y: bool, series: Vec<Series>) -> Panel {
    Panel { title: title.into(), x_label: "time [s]".into(), y_label: y_label.into(), log_y, series }
}

/// `θ̃₁`, `θ̃₂` and `x̃` panels, one series per estimator.
pub fn errors_figure(art: &RunArtifacts, title: &str) -> Figure {
    let kinds = art.estimators();
    let series = |suffix: &str| -> Vec<Series> {
        kinds
            .iter()
            .map(|k| Series {
                name: label_of(*k).into(),
                style: style_of(*k),
                points: column_points(art, &format!("{}_{suffix}", k.name())),
            })
            .collect()
    };
    Figure {
        title: title.into(),
        panels: vec![
            panel("theta_1 error", "θ₁ − θ̂₁ [-]", false, series("theta_err_1")),
            panel("theta_2 error", "θ₂ − θ̂₂ [-]", false, series("theta_err_2")),
            panel("state error", "x − x̂ [-]", false, series("x_err")),
        ],
    }
}

pub fn det_figure(art: &RunArtifacts, log_y: bool) -> Figure {
    Figure {
        title: "Filter matrix determinant".into(),
        panels: vec![panel(
            "|det M(t)|",
            "|det M| [-]",
            log_y,
            vec![Series { name: "|det M|".into(), style: LineStyle::Solid, points: column_points(art, "abs_det_M") }],
        )],
    }
}

#[derive(Debug, Clone)]
pub struct Fig1Output {
    pub artifacts: RunArtifacts,
    pub svg_paths: Vec<PathBuf>,
}

/// All three estimators on the example system. With an output directory,
/// writes `fig1.csv`, `fig1_report.json`, `fig1_metadata.json`,
/// `fig1_errors.svg` and `fig1_det.svg`.
pub fn figure1_scenario(base: &ScenarioConfig, output_dir: Option<&Path>) -> Result<Fig1Output, HarnessError> {
    let cfg = ScenarioConfig { estimators: EstimatorKind::ALL.to_vec(), ..base.clone() };
    let artifacts = simulate(&cfg)?;
    let mut svg_paths = Vec::new();
    if let Some(dir) = output_dir {
        artifacts.persist(dir, "fig1")?;
        if cfg.emit_svg {
            let p = dir.join("fig1_errors.svg");
            emit_svg(&errors_figure(&artifacts, "Transient performance of estimators b1, b2 and B"), &p)?;
            svg_paths.push(p);
            let p = dir.join("fig1_det.svg");
            emit_svg(&det_figure(&artifacts, cfg.log_det_axis), &p)?;
            svg_paths.push(p);
        }
    }
    Ok(Fig1Output { artifacts, svg_paths })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OvershootRow {
    pub gamma: f64,
    pub dt: f64,
    pub metric: OvershootMetric,
    /// `max |x − x̂|` over the recorded samples.
    pub max_abs_x_err: f64,
}

#[derive(Debug, Clone)]
pub struct Fig2Output {
    pub runs: Vec<(f64, RunArtifacts)>,
    pub table: Vec<OvershootRow>,
    pub svg_path: Option<PathBuf>,
}

pub fn sweep_config(base: &ScenarioConfig, gamma: f64, dt: f64) -> ScenarioConfig {
    ScenarioConfig {
        estimators: vec![EstimatorKind::MatB],
        gamma,
        dt,
        record_every: (SWEEP_RECORD_INTERVAL / dt).round().max(1.0) as usize,
        ..base.clone()
    }
}

pub fn overshoot_table_csv(rows: &[OvershootRow]) -> String {
    let mut out = String::from("gamma,dt,peak,peak_time,component_overshoot,settle_time,max_abs_x_err\n");
    for r in rows {
        let settle = r.metric.settle_time.map(format_value).unwrap_or_else(|| "nan".into());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            format_value(r.gamma),
            format_value(r.dt),
            format_value(r.metric.peak),
            format_value(r.metric.peak_time),
            format_value(r.metric.component_overshoot),
            settle,
            format_value(r.max_abs_x_err)
        );
    }
    out
}

/// Matrix estimator for each `γ` in [`GAMMA_SWEEP`], run in parallel.
/// With an output directory, writes one CSV per run
/// (`fig2_gamma_<γ>.csv`), `fig2_overshoot.csv` and `fig2.svg`.
pub fn figure2_scenario(base: &ScenarioConfig, output_dir: Option<&Path>) -> Result<Fig2Output, HarnessError> {
    let cfgs: Vec<ScenarioConfig> = GAMMA_SWEEP.iter().map(|&(g, dt)| sweep_config(base, g, dt)).collect();
    for c in &cfgs {
        c.validate()?;
    }
    let results: Vec<Result<RunArtifacts, HarnessError>> = std::thread::scope(|s| {
        let handles: Vec<_> = cfgs.iter().map(|c| s.spawn(move || simulate(c))).collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let mut runs = Vec::with_capacity(cfgs.len());
    for (c, r) in cfgs.iter().zip(results) {
        runs.push((c.gamma, r?));
    }
    let table: Vec<OvershootRow> = runs
        .iter()
        .zip(&cfgs)
        .map(|((g, art), c)| OvershootRow {
            gamma: *g,
            dt: c.dt,
            metric: *art.overshoot_of(EstimatorKind::MatB).expect("matrix estimator present"),
            max_abs_x_err: art
                .records
                .column("mat_B_x_err")
                .unwrap_or_default()
                .iter()
                .fold(0.0, |m, v| m.max(v.abs())),
        })
        .collect();

    let mut svg_path = None;
    if let Some(dir) = output_dir {
        for (g, art) in &runs {
            art.persist(dir, &format!("fig2_gamma_{g}"))?;
        }
        write_file(&dir.join("fig2_overshoot.csv"), overshoot_table_csv(&table).as_bytes())?;
        if base.emit_svg {
            let styles = [LineStyle::Dashed, LineStyle::DashDot, LineStyle::Solid];
            let series = |col: &str| -> Vec<Series> {
                runs.iter()
                    .zip(styles)
                    .map(|((g, art), style)| Series {
                        name: format!("γ = {g}"),
                        style,
                        points: column_points(art, col),
                    })
                    .collect()
            };
            let fig = Figure {
                title: "Estimator B for changes in γ".into(),
                panels: vec![
                    panel("theta_1 error", "θ₁ − θ̂₁ [-]", false, series("mat_B_theta_err_1")),
                    panel("theta_2 error", "θ₂ − θ̂₂ [-]", false, series("mat_B_theta_err_2")),
                    panel("state error", "x − x̂ [-]", false, series("mat_B_x_err")),
                ],
            };
            let p = dir.join("fig2.svg");
            emit_svg(&fig, &p)?;
            svg_path = Some(p);
        }
    }
    Ok(Fig2Output { runs, table, svg_path })
}
