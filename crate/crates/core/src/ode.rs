//! Fixed-step classical Runge–Kutta integration over a flat state vector
//! with named fields.

use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type BoxError = Box<dyn std::error::Error + Send + Sync>;
pub type RhsResult = Result<(), BoxError>;

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("invalid step configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite value in field `{field}` (index {index}) at RK4 stage {stage}, t = {t}")]
    NonFinite { stage: usize, field: String, index: usize, t: f64 },
    #[error("right-hand side failed at t = {t}: {source}")]
    Rhs { t: f64, source: BoxError },
    #[error("probe failed at t = {t}: {source}")]
    Probe { t: f64, source: BoxError },
    #[error("state has {got} entries but the layout needs {expected}")]
    LayoutMismatch { expected: usize, got: usize },
    #[error("unknown field `{0}`")]
    UnknownField(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Field {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

/// Maps named fields onto contiguous, non-overlapping index ranges.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Layout {
    fields: Vec<Field>,
    len: usize,
}

impl Layout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a field and returns its index range. Panics on a duplicate
    /// name.
    pub fn push(&mut self, name: impl Into<String>, len: usize) -> Range<usize> {
        let name = name.into();
        assert!(self.range(&name).is_none(), "duplicate field `{name}`");
        let offset = self.len;
        self.fields.push(Field { name, offset, len });
        self.len += len;
        offset..offset + len
    }

    pub fn range(&self, name: &str) -> Option<Range<usize>> {
        self.fields
            .iter()
            .find(|f| f.name == name)
            .map(|f| f.offset..f.offset + f.len)
    }

    /// Name of the field owning `index`.
    pub fn field_at(&self, index: usize) -> Option<&str> {
        self.fields
            .iter()
            .find(|f| index >= f.offset && index < f.offset + f.len)
            .map(|f| f.name.as_str())
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlatState {
    layout: Arc<Layout>,
    values: Vec<f64>,
}

impl FlatState {
    pub fn zeros(layout: Arc<Layout>) -> Self {
        let values = vec![0.0; layout.len()];
        Self { layout, values }
    }

    pub fn from_values(layout: Arc<Layout>, values: Vec<f64>) -> Result<Self, OdeError> {
        if values.len() != layout.len() {
            return Err(OdeError::LayoutMismatch { expected: layout.len(), got: values.len() });
        }
        Ok(Self { layout, values })
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.layout.range(name).map(|r| &self.values[r])
    }

    pub fn set(&mut self, name: &str, data: &[f64]) -> Result<(), OdeError> {
        let r = self.layout.range(name).ok_or_else(|| OdeError::UnknownField(name.to_string()))?;
        if r.len() != data.len() {
            return Err(OdeError::LayoutMismatch { expected: r.len(), got: data.len() });
        }
        self.values[r].copy_from_slice(data);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub dt: f64,
    pub t_final: f64,
    pub record_every: usize,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self { dt: 1e-3, t_final: 300.0, record_every: 100 }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<(), OdeError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(OdeError::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final.is_finite() && self.t_final >= self.dt * (1.0 - 1e-9)) {
            return Err(OdeError::InvalidConfig(format!(
                "t_final must be at least dt, got t_final = {} with dt = {}",
                self.t_final, self.dt
            )));
        }
        if self.record_every == 0 {
            return Err(OdeError::InvalidConfig("record_every must be positive".into()));
        }
        Ok(())
    }

    /// Number of integration steps; `t_final/dt` is rounded when it is an
    /// integer up to floating-point noise and floored otherwise.
    pub fn n_steps(&self) -> usize {
        let ratio = self.t_final / self.dt;
        let rounded = ratio.round();
        if (ratio - rounded).abs() <= 1e-9 * rounded.max(1.0) {
            rounded as usize
        } else {
            ratio.floor() as usize
        }
    }

    pub fn n_records(&self) -> usize {
        self.n_steps() / self.record_every + 1
    }
}

/// Right-hand side `ds = F(t, s)`.
pub trait Rhs {
    fn eval(&mut self, t: f64, s: &[f64], ds: &mut [f64]) -> RhsResult;
}

impl<F> Rhs for F
where
    F: FnMut(f64, &[f64], &mut [f64]) -> RhsResult,
{
    fn eval(&mut self, t: f64, s: &[f64], ds: &mut [f64]) -> RhsResult {
        self(t, s, ds)
    }
}

/// Reusable stage buffers for [`Rk4::step`].
#[derive(Debug, Clone)]
pub struct Rk4 {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(n: usize) -> Self {
        Self {
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            tmp: vec![0.0; n],
        }
    }

    fn stage<R: Rhs + ?Sized>(
        rhs: &mut R,
        layout: &Layout,
        stage: usize,
        t: f64,
        s: &[f64],
        out: &mut [f64],
    ) -> Result<(), OdeError> {
        rhs.eval(t, s, out).map_err(|source| OdeError::Rhs { t, source })?;
        if let Some(index) = out.iter().position(|v| !v.is_finite()) {
            return Err(OdeError::NonFinite {
                stage,
                field: layout.field_at(index).unwrap_or("?").to_string(),
                index,
                t,
            });
        }
        Ok(())
    }

    /// Advances `s` in place from `t` to `t + dt`.
    pub fn step<R: Rhs + ?Sized>(
        &mut self,
        rhs: &mut R,
        layout: &Layout,
        s: &mut [f64],
        t: f64,
        dt: f64,
    ) -> Result<(), OdeError> {
        let n = s.len();
        let [k1, k2, k3, k4] = &mut self.k;
        let tmp = &mut self.tmp;
        let half = 0.5 * dt;

        Self::stage(rhs, layout, 1, t, s, k1)?;
        for i in 0..n {
            tmp[i] = s[i] + half * k1[i];
        }
        Self::stage(rhs, layout, 2, t + half, tmp, k2)?;
        for i in 0..n {
            tmp[i] = s[i] + half * k2[i];
        }
        Self::stage(rhs, layout, 3, t + half, tmp, k3)?;
        for i in 0..n {
            tmp[i] = s[i] + dt * k3[i];
        }
        Self::stage(rhs, layout, 4, t + dt, tmp, k4)?;
        let sixth = dt / 6.0;
        for i in 0..n {
            s[i] += sixth * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
        }
        Ok(())
    }
}

/// One classical RK4 step.
pub fn rk4_step<R: Rhs + ?Sized>(rhs: &mut R, s: &FlatState, t: f64, dt: f64) -> Result<FlatState, OdeError> {
    let mut out = s.clone();
    Rk4::new(s.values.len()).step(rhs, &s.layout, &mut out.values, t, dt)?;
    Ok(out)
}

/// Per-step observer. Called with the initial state (step 0) and after
/// every integration step.
pub trait Probe {
    fn on_step(&mut self, step: usize, t: f64, state: &[f64]) -> RhsResult;
}

/// Recorded samples of an integration.
#[derive(Debug, Clone)]
pub struct Trajectory {
    layout: Arc<Layout>,
    times: Vec<f64>,
    data: Vec<f64>,
}

impl Trajectory {
    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        let n = self.layout.len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn field(&self, i: usize, name: &str) -> Option<&[f64]> {
        self.layout.range(name).map(|r| &self.state(i)[r])
    }

    pub fn last(&self) -> Option<&[f64]> {
        (!self.is_empty()).then(|| self.state(self.len() - 1))
    }
}

/// Fixed-step march from `t = 0` to `cfg.t_final`, recording every
/// `cfg.record_every` steps (the initial state is always recorded). Time
/// is computed as `k·dt` from the integer step counter.
pub fn integrate<R: Rhs + ?Sized>(
    rhs: &mut R,
    s0: &FlatState,
    cfg: &StepConfig,
    probes: &mut [&mut dyn Probe],
) -> Result<Trajectory, OdeError> {
    cfg.validate()?;
    let layout = Arc::clone(&s0.layout);
    let n = layout.len();
    let n_steps = cfg.n_steps();
    let mut times = Vec::with_capacity(cfg.n_records());
    let mut data = Vec::with_capacity(cfg.n_records() * n);
    let mut s = s0.values.clone();
    let mut rk = Rk4::new(n);

    times.push(0.0);
    data.extend_from_slice(&s);
    for p in probes.iter_mut() {
        p.on_step(0, 0.0, &s).map_err(|source| OdeError::Probe { t: 0.0, source })?;
    }
    for k in 0..n_steps {
        let t = k as f64 * cfg.dt;
        rk.step(rhs, &layout, &mut s, t, cfg.dt)?;
        let t_next = (k + 1) as f64 * cfg.dt;
        for p in probes.iter_mut() {
            p.on_step(k + 1, t_next, &s)
                .map_err(|source| OdeError::Probe { t: t_next, source })?;
        }
        if (k + 1) % cfg.record_every == 0 {
            times.push(t_next);
            data.extend_from_slice(&s);
        }
    }
    Ok(Trajectory { layout, times, data })
}
