//! One configured simulation: integrate, derive record columns, compute
//! diagnostics, persist.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::diagnostics::{
    det_l2_report, lambda_m_sq, overshoot, pe_margin, ExcitationReport, GrowthClass, LogGrowthFit, LyapunovTracker,
    OvershootMetric, PeMargin, SampledTrace,
};
use crate::linalg;
use crate::ode::integrate;
use crate::signals::{Benchmark, DecayingSine};

use super::config::{EstimatorKind, ScenarioConfig};
use super::system::{CoupledSystem, StepMonitor};
use super::{write_file, HarnessError};

/// Window used for the regressor PE margin in run reports.
pub const PE_WINDOW: f64 = 2.0 * std::f64::consts::PI;

/// Horizon over which reconstructed and direct errors are compared.
pub const ORACLE_HORIZON: f64 = 50.0;

/// Named columns over row-major data.
///
/// Column order: `t, y, x, phi_1..phi_q`; then for each estimator in the
/// order `vec_b1, vec_b2, mat_B`: `<e>_x_hat, <e>_x_err,
/// <e>_theta_hat_i, <e>_theta_err_i, <e>_theta_err_norm, <e>_V`; with a
/// matrix estimator `M_i_j` (row-major), `det_M, abs_det_M, lambda_m_sq,
/// int_det2`; finally `int_ddot2`. Errors are true minus estimate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecordTable {
    pub columns: Vec<String>,
    pub data: Vec<f64>,
}

impl RecordTable {
    pub fn new(columns: Vec<String>) -> Self {
        Self { columns, data: Vec::new() }
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn n_rows(&self) -> usize {
        if self.columns.is_empty() {
            0
        } else {
            self.data.len() / self.columns.len()
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n_cols();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.index_of(name)?;
        Some((0..self.n_rows()).map(|i| self.row(i)[j]).collect())
    }

    /// Columns whose names start with `prefix`, stacked per row.
    pub fn trace(&self, names: &[String]) -> Option<SampledTrace> {
        let idx: Option<Vec<usize>> = names.iter().map(|n| self.index_of(n)).collect();
        let idx = idx?;
        let times = self.column("t")?;
        let mut values = Vec::with_capacity(times.len() * idx.len());
        for i in 0..self.n_rows() {
            let r = self.row(i);
            values.extend(idx.iter().map(|&j| r[j]));
        }
        Some(SampledTrace { times, dim: idx.len(), values })
    }
}

pub fn phi_columns(q: usize) -> Vec<String> {
    (1..=q).map(|i| format!("phi_{i}")).collect()
}

pub fn m_columns(q: usize) -> Vec<String> {
    (1..=q).flat_map(|i| (1..=q).map(move |j| format!("M_{i}_{j}"))).collect()
}

pub fn theta_err_columns(kind: EstimatorKind, q: usize) -> Vec<String> {
    (1..=q).map(|i| format!("{}_theta_err_{i}", kind.name())).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub config: ScenarioConfig,
    pub wall_time_s: f64,
    pub steps: usize,
    pub records: usize,
    pub stiffness: f64,
}

/// Deterministic summary written next to the CSV.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub steps: usize,
    pub records: usize,
    pub stiffness: f64,
    pub pe_margin: Option<PeMargin>,
    pub divergence_fit: Option<LogGrowthFit>,
    pub growth: Option<GrowthClass>,
    pub overshoot: BTreeMap<String, OvershootMetric>,
    pub lyapunov: BTreeMap<String, LyapunovTracker>,
    pub oracle_discrepancy: BTreeMap<String, f64>,
    pub f_abs_range: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub records: RecordTable,
    pub excitation: ExcitationReport,
    pub overshoot: Vec<(EstimatorKind, OvershootMetric)>,
    /// Per-step Lyapunov monitoring, one tracker per estimator.
    pub lyapunov: Vec<(EstimatorKind, LyapunovTracker)>,
    /// `sup ‖z_reconstructed − z_direct‖∞` over `t ≤ 50`; only with the
    /// error oracle enabled.
    pub oracle_discrepancy: Vec<(EstimatorKind, f64)>,
    pub f_abs_range: (f64, f64),
    pub metadata: RunMetadata,
}

impl RunArtifacts {
    pub fn estimators(&self) -> Vec<EstimatorKind> {
        self.overshoot.iter().map(|(k, _)| *k).collect()
    }

    pub fn overshoot_of(&self, kind: EstimatorKind) -> Option<&OvershootMetric> {
        self.overshoot.iter().find(|(k, _)| *k == kind).map(|(_, m)| m)
    }

    pub fn lyapunov_of(&self, kind: EstimatorKind) -> Option<&LyapunovTracker> {
        self.lyapunov.iter().find(|(k, _)| *k == kind).map(|(_, m)| m)
    }

    pub fn final_value(&self, column: &str) -> Option<f64> {
        let j = self.records.index_of(column)?;
        let n = self.records.n_rows();
        (n > 0).then(|| self.records.row(n - 1)[j])
    }

    pub fn report(&self) -> RunReport {
        let name = |k: &EstimatorKind| k.name().to_string();
        RunReport {
            steps: self.metadata.steps,
            records: self.metadata.records,
            stiffness: self.metadata.stiffness,
            pe_margin: self.excitation.pe_margin,
            divergence_fit: self.excitation.divergence_fit,
            growth: self.excitation.growth,
            overshoot: self.overshoot.iter().map(|(k, m)| (name(k), *m)).collect(),
            lyapunov: self.lyapunov.iter().map(|(k, m)| (name(k), m.clone())).collect(),
            oracle_discrepancy: self.oracle_discrepancy.iter().map(|(k, d)| (name(k), *d)).collect(),
            f_abs_range: self.f_abs_range,
        }
    }

    /// Writes `<stem>.csv`, `<stem>_report.json` and
    /// `<stem>_metadata.json` into `dir`. Only the metadata file carries
    /// wall-clock time.
    pub fn persist(&self, dir: &Path, stem: &str) -> Result<(), HarnessError> {
        super::csv::emit_csv(&self.records, &dir.join(format!("{stem}.csv")))?;
        let report = serde_json::to_string_pretty(&self.report()).expect("report serializes");
        write_file(&dir.join(format!("{stem}_report.json")), format!("{report}\n").as_bytes())?;
        let meta = serde_json::to_string_pretty(&self.metadata).expect("metadata serializes");
        write_file(&dir.join(format!("{stem}_metadata.json")), format!("{meta}\n").as_bytes())
    }
}

/// Validates, integrates and derives diagnostics without touching disk.
pub fn simulate(cfg: &ScenarioConfig) -> Result<RunArtifacts, HarnessError> {
    let stiffness = cfg.validate()?;
    let started = Instant::now();
    let bench = Benchmark::new(cfg.signal_params(), Arc::new(DecayingSine))
        .map_err(|e| HarnessError::config("a/b1/b2", e.to_string()))?;
    let model = cfg.build_model(bench.clone())?;
    let q = model.q();
    let kinds = cfg.estimator_set();
    let gains: Vec<_> = kinds.iter().map(|k| (*k, cfg.gains_for(*k))).collect();
    let sys = CoupledSystem::new(model, bench, &gains, cfg.error_oracle)
        .map_err(|e| HarnessError::config("estimators", e.to_string()))?;
    let ic = &cfg.initial_conditions;
    let m0 = ic.m0.to_row_major(q)?;
    let s0 = sys
        .initial_state(ic.y, ic.x, &m0)
        .map_err(|e| HarnessError::config("initial_conditions", e.to_string()))?;

    let step_cfg = cfg.step_config();
    let mut monitor = StepMonitor::new(&sys, cfg.lyapunov_tol, ORACLE_HORIZON);
    let mut rhs = sys.rhs();
    let traj = integrate(&mut rhs, &s0, &step_cfg, &mut [&mut monitor])?;

    let records = derive_records(&sys, &traj)?;
    let excitation = excitation_report(&records, q, kinds.contains(&EstimatorKind::MatB))?;
    let mut overshoots = Vec::with_capacity(kinds.len());
    for k in &kinds {
        let trace = records.trace(&theta_err_columns(*k, q)).expect("theta error columns exist");
        overshoots.push((*k, overshoot(&trace, cfg.settle_threshold)?));
    }
    let lyapunov = kinds.iter().copied().zip(monitor.lyapunov.iter().cloned()).collect();
    let oracle_discrepancy = if cfg.error_oracle {
        kinds.iter().copied().zip(monitor.oracle_discrepancy.iter().copied()).collect()
    } else {
        Vec::new()
    };
    let metadata = RunMetadata {
        config: cfg.clone(),
        wall_time_s: started.elapsed().as_secs_f64(),
        steps: step_cfg.n_steps(),
        records: records.n_rows(),
        stiffness,
    };
    Ok(RunArtifacts {
        records,
        excitation,
        overshoot: overshoots,
        lyapunov,
        oracle_discrepancy,
        f_abs_range: monitor.f_abs_range,
        metadata,
    })
}

/// [`simulate`], then persist to `cfg.output_dir` (if set) under the stem
/// `run`, with an SVG when `cfg.emit_svg` is on.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunArtifacts, HarnessError> {
    let art = simulate(cfg)?;
    if let Some(dir) = &cfg.output_dir {
        art.persist(dir, "run")?;
        if cfg.emit_svg {
            let fig = super::scenarios::errors_figure(&art, "Estimation errors");
            super::svg::emit_svg(&fig, &dir.join("run_errors.svg"))?;
            if art.estimators().contains(&EstimatorKind::MatB) {
                let fig = super::scenarios::det_figure(&art, cfg.log_det_axis);
                super::svg::emit_svg(&fig, &dir.join("run_det.svg"))?;
            }
        }
    }
    Ok(art)
}

fn derive_records(sys: &CoupledSystem, traj: &crate::ode::Trajectory) -> Result<RecordTable, HarnessError> {
    let model = sys.model();
    let q = model.q();
    let theta = model.theta_true();
    let mut cols: Vec<String> = vec!["t".into(), "y".into(), "x".into()];
    cols.extend(phi_columns(q));
    for b in sys.blocks() {
        let e = b.kind.name();
        cols.push(format!("{e}_x_hat"));
        cols.push(format!("{e}_x_err"));
        cols.extend((1..=q).map(|i| format!("{e}_theta_hat_{i}")));
        cols.extend(theta_err_columns(b.kind, q));
        cols.push(format!("{e}_theta_err_norm"));
        cols.push(format!("{e}_V"));
    }
    let mat = sys.blocks().iter().find(|b| b.kind.is_matrix());
    if mat.is_some() {
        cols.extend(m_columns(q));
        cols.extend(["det_M", "abs_det_M", "lambda_m_sq", "int_det2"].map(String::from));
    }
    cols.push("int_ddot2".into());

    let mut table = RecordTable::new(cols);
    table.data.reserve(traj.len() * table.n_cols());
    let mut phi = vec![0.0; q];
    let mut z = Vec::new();
    let plant = sys.plant_range();
    let integration_err = |t: f64, e: &dyn std::fmt::Display| {
        HarnessError::Integration(crate::ode::OdeError::Probe { t, source: e.to_string().into() })
    };
    for i in 0..traj.len() {
        let t = traj.times()[i];
        let s = traj.state(i);
        let (y, x) = (s[plant.start], s[plant.start + 1]);
        let row = &mut table.data;
        row.extend([t, y, x]);
        model.known().phi_into(y, t, &mut phi).map_err(|e| integration_err(t, &e))?;
        row.extend_from_slice(&phi);
        for b in sys.blocks() {
            let (x_hat, theta_hat) = b.estimates(s, y).map_err(|e| integration_err(t, &e))?;
            row.push(x_hat);
            row.push(x - x_hat);
            row.extend_from_slice(&theta_hat);
            let err: Vec<f64> = theta.iter().zip(&theta_hat).map(|(a, b)| a - b).collect();
            row.extend_from_slice(&err);
            row.push(linalg::norm(&err));
            z.resize(b.error_len(), 0.0);
            b.reconstruct_error(s, x, theta, y, &mut z).map_err(|e| integration_err(t, &e))?;
            row.push(b.lyapunov(&z));
        }
        if let Some(b) = mat {
            let m = &s[b.filter_range()];
            let det = linalg::determinant(m, q);
            row.extend_from_slice(m);
            row.extend([det, det.abs(), lambda_m_sq(m, q), s[sys.int_det2_range().unwrap().start]]);
        }
        row.push(s[sys.int_ddot2_range().start]);
    }
    if let Some(k) = table.data.iter().position(|v| !v.is_finite()) {
        let n = table.n_cols();
        return Err(integration_err(table.row(k / n)[0], &format!("non-finite value in column `{}`", table.columns[k % n])));
    }
    Ok(table)
}

fn excitation_report(records: &RecordTable, q: usize, with_m: bool) -> Result<ExcitationReport, HarnessError> {
    let mut rep = if with_m {
        det_l2_report(&records.trace(&m_columns(q)).expect("M columns exist"), None)?
    } else {
        ExcitationReport::empty()
    };
    let phi = records.trace(&phi_columns(q)).expect("phi columns exist");
    rep.pe_margin = pe_margin(&phi, PE_WINDOW).ok();
    Ok(rep)
}
