//! Plant plus estimators on one flat state vector and one clock.

use std::ops::Range;
use std::sync::Arc;

use smallvec::SmallVec;

use crate::diagnostics::LyapunovTracker;
use crate::gains::EstimatorGains;
use crate::linalg;
use crate::mat_estimator::MatEstimator;
use crate::model::{plant_rhs, PlantState, SystemModel};
use crate::ode::{BoxError, FlatState, Layout, Probe, RhsResult};
use crate::signals::Benchmark;
use crate::vec_estimator::{EstimatorError, VecEstimator};

use super::config::EstimatorKind;

type Buf = SmallVec<[f64; 16]>;

#[derive(Debug, Clone)]
pub(crate) enum Engine {
    Vec { est: VecEstimator, mu: Range<usize> },
    Mat { est: MatEstimator, m: Range<usize> },
}

#[derive(Debug, Clone)]
pub struct Block {
    pub kind: EstimatorKind,
    pub(crate) engine: Engine,
    pub zeta: Range<usize>,
    /// Closed-form error dynamics integrated alongside, if requested.
    pub z_direct: Option<Range<usize>>,
}

impl Block {
    /// `μ` or row-major `M`.
    pub fn filter_range(&self) -> Range<usize> {
        match &self.engine {
            Engine::Vec { mu, .. } => mu.clone(),
            Engine::Mat { m, .. } => m.clone(),
        }
    }

    pub fn error_len(&self) -> usize {
        self.zeta.len()
    }

    pub fn estimates(&self, s: &[f64], y: f64) -> Result<(f64, Vec<f64>), EstimatorError> {
        let zeta = &s[self.zeta.clone()];
        match &self.engine {
            Engine::Vec { est, mu } => est.estimates(zeta, &s[mu.clone()], y),
            Engine::Mat { est, m } => est.estimates(zeta, &s[m.clone()], y),
        }
    }

    /// Error `z` rebuilt from the true `x` and `θ`.
    pub fn reconstruct_error(&self, s: &[f64], x: f64, theta: &[f64], y: f64, out: &mut [f64]) -> Result<(), EstimatorError> {
        let zeta = &s[self.zeta.clone()];
        match &self.engine {
            Engine::Vec { est, mu } => est.reconstruct_error(x, theta, zeta, &s[mu.clone()], y, out),
            Engine::Mat { est, m } => est.reconstruct_error(x, theta, zeta, &s[m.clone()], y, out),
        }
    }

    pub fn lyapunov(&self, z: &[f64]) -> f64 {
        match &self.engine {
            Engine::Vec { est, .. } => est.lyapunov(z),
            Engine::Mat { est, .. } => est.lyapunov(z),
        }
    }
}

/// Plant, estimators and running integrals. State layout:
/// `plant` = (y, x); per estimator `<name>.zeta` and `<name>.mu` or
/// `<name>.M`; optional `<name>.z_direct`; `int_det2` (∫det M², present
/// with a matrix estimator) and `int_ddot2` (∫ḋ²).
#[derive(Debug, Clone)]
pub struct CoupledSystem {
    model: SystemModel,
    bench: Benchmark,
    layout: Arc<Layout>,
    plant: Range<usize>,
    blocks: Vec<Block>,
    int_det2: Option<Range<usize>>,
    int_ddot2: Range<usize>,
}

impl CoupledSystem {
    pub fn new(
        model: SystemModel,
        bench: Benchmark,
        estimators: &[(EstimatorKind, EstimatorGains)],
        error_oracle: bool,
    ) -> Result<Self, EstimatorError> {
        let q = model.q();
        let sign = model.known().sign_f();
        let mut layout = Layout::new();
        let plant = layout.push("plant", 2);
        let mut blocks = Vec::with_capacity(estimators.len());
        for (kind, gains) in estimators {
            let name = kind.name();
            let block = if kind.is_matrix() {
                let est = MatEstimator::new(gains.clone(), sign)?;
                let zeta = layout.push(format!("{name}.zeta"), 2 * q);
                let m = layout.push(format!("{name}.M"), q * q);
                let z_direct = error_oracle.then(|| layout.push(format!("{name}.z_direct"), 2 * q));
                Block { kind: *kind, engine: Engine::Mat { est, m }, zeta, z_direct }
            } else {
                let est = VecEstimator::new(gains.clone(), sign)?;
                let zeta = layout.push(format!("{name}.zeta"), 1 + q);
                let mu = layout.push(format!("{name}.mu"), q);
                let z_direct = error_oracle.then(|| layout.push(format!("{name}.z_direct"), 1 + q));
                Block { kind: *kind, engine: Engine::Vec { est, mu }, zeta, z_direct }
            };
            blocks.push(block);
        }
        let int_det2 = blocks.iter().any(|b| b.kind.is_matrix()).then(|| layout.push("int_det2", 1));
        let int_ddot2 = layout.push("int_ddot2", 1);
        Ok(Self { model, bench, layout: Arc::new(layout), plant, blocks, int_det2, int_ddot2 })
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn model(&self) -> &SystemModel {
        &self.model
    }

    pub fn bench(&self) -> &Benchmark {
        &self.bench
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, kind: EstimatorKind) -> Option<&Block> {
        self.blocks.iter().find(|b| b.kind == kind)
    }

    pub fn plant_range(&self) -> Range<usize> {
        self.plant.clone()
    }

    pub fn int_det2_range(&self) -> Option<Range<usize>> {
        self.int_det2.clone()
    }

    pub fn int_ddot2_range(&self) -> Range<usize> {
        self.int_ddot2.clone()
    }

    /// Initial state: plant at `(y0, x0)`, every matrix filter at `m0`,
    /// everything else zero. The direct-error blocks start at the
    /// reconstructed error so both representations describe the same
    /// trajectory.
    pub fn initial_state(&self, y0: f64, x0: f64, m0: &[f64]) -> Result<FlatState, EstimatorError> {
        let mut s = FlatState::zeros(Arc::clone(&self.layout));
        {
            let v = s.values_mut();
            v[self.plant.start] = y0;
            v[self.plant.start + 1] = x0;
            for b in &self.blocks {
                if let Engine::Mat { m, .. } = &b.engine {
                    crate::vec_estimator::check_len("M(0)", m0, m.len())?;
                    v[m.clone()].copy_from_slice(m0);
                }
            }
        }
        let values = s.values_mut();
        let theta = self.model.theta_true().to_vec();
        for b in &self.blocks {
            if let Some(zr) = &b.z_direct {
                let mut z = vec![0.0; zr.len()];
                b.reconstruct_error(values, x0, &theta, y0, &mut z)?;
                values[zr.clone()].copy_from_slice(&z);
            }
        }
        Ok(s)
    }

    pub fn eval(&self, t: f64, s: &[f64], ds: &mut [f64]) -> Result<(), EstimatorError> {
        let (y, x) = (s[self.plant.start], s[self.plant.start + 1]);
        let (dy, dx) = plant_rhs(&PlantState { y, x, t }, &self.model)?;
        ds[self.plant.start] = dy;
        ds[self.plant.start + 1] = dx;
        let maps = self.model.known();
        for b in &self.blocks {
            let zeta = &s[b.zeta.clone()];
            match &b.engine {
                Engine::Vec { est, mu } => {
                    let mu_s = &s[mu.clone()];
                    let mut mu_dot: Buf = SmallVec::from_elem(0.0, mu.len());
                    est.mu_rhs_into(mu_s, y, t, maps, &mut mu_dot)?;
                    ds[mu.clone()].copy_from_slice(&mu_dot);
                    est.zeta_rhs_into(zeta, mu_s, &mu_dot, y, t, maps, &mut ds[b.zeta.clone()])?;
                    if let Some(zr) = &b.z_direct {
                        est.error_rhs_into(&s[zr.clone()], y, t, mu_s, maps, &mut ds[zr.clone()])?;
                    }
                }
                Engine::Mat { est, m } => {
                    let m_s = &s[m.clone()];
                    let mut m_dot: Buf = SmallVec::from_elem(0.0, m.len());
                    est.m_rhs_into(m_s, y, t, maps, &mut m_dot)?;
                    ds[m.clone()].copy_from_slice(&m_dot);
                    est.zeta_rhs_into(zeta, m_s, &m_dot, y, t, maps, &mut ds[b.zeta.clone()])?;
                    if let Some(zr) = &b.z_direct {
                        est.error_rhs_into(&s[zr.clone()], y, t, m_s, maps, &mut ds[zr.clone()])?;
                    }
                }
            }
        }
        if let Some(r) = &self.int_det2 {
            let m = self
                .blocks
                .iter()
                .find_map(|b| match &b.engine {
                    Engine::Mat { m, .. } => Some(&s[m.clone()]),
                    Engine::Vec { .. } => None,
                })
                .expect("int_det2 exists only with a matrix block");
            let q = self.model.q();
            let d = linalg::determinant(m, q);
            ds[r.start] = d * d;
        }
        let d_dot = self.bench.d(t).map_err(crate::model::ModelError::from)?.d_dot;
        ds[self.int_ddot2.start] = d_dot * d_dot;
        Ok(())
    }

    /// Closure form for [`crate::ode::integrate`].
    pub fn rhs(&self) -> impl FnMut(f64, &[f64], &mut [f64]) -> RhsResult + '_ {
        move |t, s, ds| self.eval(t, s, ds).map_err(|e| Box::new(e) as BoxError)
    }
}

/// Per-step checks that need every integration step rather than only the
/// recorded ones: Lyapunov monotonicity, agreement of reconstructed and
/// directly integrated errors, and the range of `|f|` along the output.
#[derive(Debug, Clone)]
pub struct StepMonitor<'a> {
    system: &'a CoupledSystem,
    pub lyapunov: Vec<LyapunovTracker>,
    /// Largest `‖z_reconstructed − z_direct‖∞` per estimator, over steps
    /// with `t ≤ oracle_horizon`.
    pub oracle_discrepancy: Vec<f64>,
    pub oracle_horizon: f64,
    pub f_abs_range: (f64, f64),
    z: Vec<f64>,
}

impl<'a> StepMonitor<'a> {
    pub fn new(system: &'a CoupledSystem, lyapunov_tol: f64, oracle_horizon: f64) -> Self {
        let n = system.blocks.len();
        Self {
            system,
            lyapunov: vec![LyapunovTracker::new(lyapunov_tol); n],
            oracle_discrepancy: vec![0.0; n],
            oracle_horizon,
            f_abs_range: (f64::INFINITY, 0.0),
            z: Vec::with_capacity(8),
        }
    }
}

impl Probe for StepMonitor<'_> {
    fn on_step(&mut self, step: usize, t: f64, s: &[f64]) -> RhsResult {
        let sys = self.system;
        let (y, x) = (s[sys.plant.start], s[sys.plant.start + 1]);
        let f_abs = sys.model.known().abs_f(y, t)?;
        self.f_abs_range = (self.f_abs_range.0.min(f_abs), self.f_abs_range.1.max(f_abs));
        let theta = sys.model.theta_true();
        for (i, b) in sys.blocks.iter().enumerate() {
            self.z.resize(b.error_len(), 0.0);
            b.reconstruct_error(s, x, theta, y, &mut self.z)?;
            self.lyapunov[i].push(step, b.lyapunov(&self.z));
            if let Some(zr) = &b.z_direct {
                if t <= self.oracle_horizon + 1e-12 {
                    let diff = self.z.iter().zip(&s[zr.clone()]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    self.oracle_discrepancy[i] = self.oracle_discrepancy[i].max(diff);
                }
            }
        }
        Ok(())
    }
}
