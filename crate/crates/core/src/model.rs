//! Plant class `ẏ = f(y,t)x + g₀(y,t)`, `ẋ = g₁(y,t) + φ(y,t)ᵀθ`.
//!
//! The maps an estimator is allowed to see live in [`KnownMaps`]. The true
//! parameter vector is kept next to them in [`SystemModel`] and is only read
//! by the plant integrator and by test oracles.

use std::sync::Arc;

use nalgebra::DMatrix;
use smallvec::SmallVec;
use thiserror::Error;

use crate::signals::{Benchmark, SignalError};

pub type ScalarMap = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// Writes `φ(y, t)` into the output slice.
pub type RegressorMap = Arc<dyn Fn(f64, f64, &mut [f64]) + Send + Sync>;

pub(crate) type Scratch = SmallVec<[f64; 16]>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("map `{map}` is not finite at y = {y}, t = {t}")]
    NonFinite { map: &'static str, y: f64, t: f64 },
    #[error("f(y, t) = {value} at y = {y}, t = {t} violates the declared sign")]
    SignViolation { value: f64, y: f64, t: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("model needs at least one unknown parameter")]
    EmptyParameterVector,
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// Everything an estimator may evaluate: the output gain, drifts, and the
/// regressor.
#[derive(Clone)]
pub struct KnownMaps {
    q: usize,
    f: ScalarMap,
    f_is_positive: bool,
    g0: ScalarMap,
    g1: ScalarMap,
    phi: RegressorMap,
}

impl std::fmt::Debug for KnownMaps {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KnownMaps")
            .field("q", &self.q)
            .field("f_is_positive", &self.f_is_positive)
            .finish_non_exhaustive()
    }
}

fn finite(map: &'static str, v: f64, y: f64, t: f64) -> Result<f64, ModelError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ModelError::NonFinite { map, y, t })
    }
}

impl KnownMaps {
    pub fn new(
        q: usize,
        f: ScalarMap,
        f_is_positive: bool,
        g0: ScalarMap,
        g1: ScalarMap,
        phi: RegressorMap,
    ) -> Result<Self, ModelError> {
        if q == 0 {
            return Err(ModelError::EmptyParameterVector);
        }
        Ok(Self { q, f, f_is_positive, g0, g1, phi })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// The declared constant sign of `f`, as ±1.
    pub fn sign_f(&self) -> f64 {
        if self.f_is_positive {
            1.0
        } else {
            -1.0
        }
    }

    pub fn f_is_positive(&self) -> bool {
        self.f_is_positive
    }

    /// `f(y, t)`, rejecting non-finite values and sign changes.
    pub fn f(&self, y: f64, t: f64) -> Result<f64, ModelError> {
        let v = finite("f", (self.f)(y, t), y, t)?;
        if v * self.sign_f() <= 0.0 {
            return Err(ModelError::SignViolation { value: v, y, t });
        }
        Ok(v)
    }

    /// `|f| = f·sgn(f)` with the declared sign.
    pub fn abs_f(&self, y: f64, t: f64) -> Result<f64, ModelError> {
        Ok(self.f(y, t)? * self.sign_f())
    }

    pub fn g0(&self, y: f64, t: f64) -> Result<f64, ModelError> {
        finite("g0", (self.g0)(y, t), y, t)
    }

    pub fn g1(&self, y: f64, t: f64) -> Result<f64, ModelError> {
        finite("g1", (self.g1)(y, t), y, t)
    }

    pub fn phi_into(&self, y: f64, t: f64, out: &mut [f64]) -> Result<(), ModelError> {
        if out.len() != self.q {
            return Err(ModelError::DimensionMismatch { expected: self.q, got: out.len() });
        }
        (self.phi)(y, t, out);
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(ModelError::NonFinite { map: "phi", y, t })
        }
    }

    pub fn phi(&self, y: f64, t: f64) -> Result<Vec<f64>, ModelError> {
        let mut out = vec![0.0; self.q];
        self.phi_into(y, t, &mut out)?;
        Ok(out)
    }
}

/// Plant description including the ground-truth parameters.
#[derive(Clone, Debug)]
pub struct SystemModel {
    known: KnownMaps,
    theta_true: Vec<f64>,
}

impl SystemModel {
    pub fn new(known: KnownMaps, theta_true: Vec<f64>) -> Result<Self, ModelError> {
        if theta_true.len() != known.q() {
            return Err(ModelError::DimensionMismatch {
                expected: known.q(),
                got: theta_true.len(),
            });
        }
        Ok(Self { known, theta_true })
    }

    pub fn known(&self) -> &KnownMaps {
        &self.known
    }

    pub fn q(&self) -> usize {
        self.known.q()
    }

    pub fn theta_true(&self) -> &[f64] {
        &self.theta_true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantState {
    pub y: f64,
    pub x: f64,
    pub t: f64,
}

/// `(ẏ, ẋ)` of the plant.
pub fn plant_rhs(state: &PlantState, model: &SystemModel) -> Result<(f64, f64), ModelError> {
    let PlantState { y, x, t } = *state;
    let maps = model.known();
    let mut phi: Scratch = SmallVec::from_elem(0.0, maps.q());
    maps.phi_into(y, t, &mut phi)?;
    let dy = maps.f(y, t)? * x + maps.g0(y, t)?;
    let dx = maps.g1(y, t)? + crate::linalg::dot(&phi, model.theta_true());
    Ok((dy, dx))
}

/// Linear plant with the benchmark regressor `φ = [1, φ₂(t)]`:
/// `f ≡ f_gain`, `g₀ = g0_coeff·y`, `g₁ = g1_coeff·y`.
pub fn linear_benchmark_system(
    f_gain: f64,
    g0_coeff: f64,
    g1_coeff: f64,
    theta: [f64; 2],
    bench: Benchmark,
) -> Result<SystemModel, ModelError> {
    if !(f_gain.is_finite() && f_gain != 0.0) {
        return Err(ModelError::SignViolation { value: f_gain, y: 0.0, t: 0.0 });
    }
    let phi: RegressorMap = Arc::new(move |_y, t, out: &mut [f64]| {
        out[0] = 1.0;
        out[1] = bench.phi2(t).unwrap_or(f64::NAN);
    });
    let known = KnownMaps::new(
        2,
        Arc::new(move |_y, _t| f_gain),
        f_gain > 0.0,
        Arc::new(move |y, _t| g0_coeff * y),
        Arc::new(move |y, _t| g1_coeff * y),
        phi,
    )?;
    SystemModel::new(known, theta.to_vec())
}

/// The benchmark plant: `f = 1`, `g₀ = g₁ = −y`, `θ = (−1, 1)`,
/// `φ = [1, φ₂(t)]`.
pub fn example_system_with(bench: Benchmark) -> SystemModel {
    linear_benchmark_system(1.0, -1.0, -1.0, [-1.0, 1.0], bench)
        .expect("benchmark plant is well formed")
}

pub fn make_example_system() -> SystemModel {
    example_system_with(Benchmark::paper_default())
}

/// Filter state used for the change of coordinates.
#[derive(Debug, Clone, Copy)]
pub enum FilterRef<'a> {
    /// `μ ∈ ℝ^q`
    Vector(&'a [f64]),
    /// `M ∈ ℝ^{q×q}`
    Matrix(&'a DMatrix<f64>),
}

/// Unavailable extended states built from the true `x` and `θ`.
#[derive(Debug, Clone, PartialEq)]
pub enum TrueExtendedState {
    /// `p = x − μᵀθ`, `η = (p, θ)`.
    Vector { p: f64, eta: Vec<f64> },
    /// `π = ιx − Mᵀθ`, `ϑ = (π, θ)`.
    Matrix { pi: Vec<f64>, vartheta: Vec<f64> },
}

pub fn true_extended_state(x: f64, theta: &[f64], filter: FilterRef<'_>) -> Result<TrueExtendedState, ModelError> {
    let q = theta.len();
    match filter {
        FilterRef::Vector(mu) => {
            if mu.len() != q {
                return Err(ModelError::DimensionMismatch { expected: q, got: mu.len() });
            }
            let p = x - crate::linalg::dot(mu, theta);
            let mut eta = Vec::with_capacity(1 + q);
            eta.push(p);
            eta.extend_from_slice(theta);
            Ok(TrueExtendedState::Vector { p, eta })
        }
        FilterRef::Matrix(m) => {
            if m.shape() != (q, q) {
                return Err(ModelError::DimensionMismatch { expected: q, got: m.nrows() });
            }
            let pi: Vec<f64> = (0..q)
                .map(|i| x - (0..q).map(|j| m[(j, i)] * theta[j]).sum::<f64>())
                .collect();
            let mut vartheta = pi.clone();
            vartheta.extend_from_slice(theta);
            Ok(TrueExtendedState::Matrix { pi, vartheta })
        }
    }
}
