//! Benchmark regressor family built from a decaying signal `d(t)`.
//!
//! The second regressor entry is obtained algebraically from `d` and its
//! first two derivatives, so every quantity below (including the
//! steady-state filter solutions) is available in closed form. Nothing in
//! this module integrates an ODE.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("signal evaluated at negative time t = {0}")]
    NegativeTime(f64),
    #[error("benchmark gain `{name}` must be positive and finite, got {value}")]
    NonPositiveGain { name: &'static str, value: f64 },
    #[error("benchmark gains require b1 != b2 (both are {0})")]
    EqualFilterGains(f64),
    #[error("steady-state branch must be 1 or 2, got {0}")]
    InvalidBranch(u8),
}

/// Value and first two derivatives of a benchmark signal at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DTriple {
    pub d: f64,
    pub d_dot: f64,
    pub d_ddot: f64,
}

/// A twice-differentiable signal with analytically consistent derivatives.
pub trait DSignal: Send + Sync {
    fn eval(&self, t: f64) -> Result<DTriple, SignalError>;
}

/// `d(t) = sin t / sqrt(1 + t)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct DecayingSine;

impl DSignal for DecayingSine {
    fn eval(&self, t: f64) -> Result<DTriple, SignalError> {
        d_default(t)
    }
}

/// The identically zero signal.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroSignal;

impl DSignal for ZeroSignal {
    fn eval(&self, t: f64) -> Result<DTriple, SignalError> {
        if t < 0.0 {
            return Err(SignalError::NegativeTime(t));
        }
        Ok(DTriple::default())
    }
}

/// User-supplied signal given as a closure returning the derivative triple.
pub struct FnSignal<F>(pub F);

impl<F> DSignal for FnSignal<F>
where
    F: Fn(f64) -> DTriple + Send + Sync,
{
    fn eval(&self, t: f64) -> Result<DTriple, SignalError> {
        if t < 0.0 {
            return Err(SignalError::NegativeTime(t));
        }
        Ok((self.0)(t))
    }
}

/// Closed-form `sin t / sqrt(1+t)` and its first two derivatives.
pub fn d_default(t: f64) -> Result<DTriple, SignalError> {
    if t < 0.0 {
        return Err(SignalError::NegativeTime(t));
    }
    let (s, c) = t.sin_cos();
    let u = 1.0 + t;
    let r1 = u.powf(-0.5);
    let r3 = r1 / u;
    let r5 = r3 / u;
    Ok(DTriple {
        d: s * r1,
        d_dot: c * r1 - 0.5 * s * r3,
        d_ddot: -s * r1 - c * r3 + 0.75 * s * r5,
    })
}

/// Filter gains shared by the benchmark regressor and the estimators that
/// are tuned against it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSignalParams {
    pub a: f64,
    pub b1: f64,
    pub b2: f64,
}

impl Default for BenchmarkSignalParams {
    fn default() -> Self {
        Self { a: 0.5, b1: 0.5, b2: 2.0 }
    }
}

impl BenchmarkSignalParams {
    pub fn new(a: f64, b1: f64, b2: f64) -> Result<Self, SignalError> {
        let p = Self { a, b1, b2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        for (name, value) in [("a", self.a), ("b1", self.b1), ("b2", self.b2)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(SignalError::NonPositiveGain { name, value });
            }
        }
        if self.b1 == self.b2 {
            return Err(SignalError::EqualFilterGains(self.b1));
        }
        Ok(())
    }
}

/// Benchmark regressor `φ = [1, φ₂(t)]` together with its steady-state
/// filter oracles.
#[derive(Clone)]
pub struct Benchmark {
    params: BenchmarkSignalParams,
    signal: Arc<dyn DSignal>,
}

impl std::fmt::Debug for Benchmark {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Benchmark").field("params", &self.params).finish()
    }
}

impl Benchmark {
    pub fn new(params: BenchmarkSignalParams, signal: Arc<dyn DSignal>) -> Result<Self, SignalError> {
        params.validate()?;
        Ok(Self { params, signal })
    }

    /// Default gains (0.5, 0.5, 2) with the decaying sine.
    pub fn paper_default() -> Self {
        Self {
            params: BenchmarkSignalParams::default(),
            signal: Arc::new(DecayingSine),
        }
    }

    pub fn params(&self) -> &BenchmarkSignalParams {
        &self.params
    }

    pub fn signal(&self) -> &Arc<dyn DSignal> {
        &self.signal
    }

    pub fn d(&self, t: f64) -> Result<DTriple, SignalError> {
        self.signal.eval(t)
    }

    fn denom(&self) -> f64 {
        self.params.a * (self.params.b1 - self.params.b2)
    }

    /// `d₁ = (ḋ + a(1+b₂)d) / (a(b₁−b₂))`.
    pub fn d1(&self, t: f64) -> Result<f64, SignalError> {
        let s = self.d(t)?;
        Ok((s.d_dot + self.params.a * (1.0 + self.params.b2) * s.d) / self.denom())
    }

    pub fn d1_dot(&self, t: f64) -> Result<f64, SignalError> {
        let s = self.d(t)?;
        Ok((s.d_ddot + self.params.a * (1.0 + self.params.b2) * s.d_dot) / self.denom())
    }

    /// `φ₂ = ḋ₁ + a(1+b₁)d₁`.
    pub fn phi2(&self, t: f64) -> Result<f64, SignalError> {
        let s = self.d(t)?;
        let BenchmarkSignalParams { a, b1, b2 } = self.params;
        let den = self.denom();
        let d1 = (s.d_dot + a * (1.0 + b2) * s.d) / den;
        let d1_dot = (s.d_ddot + a * (1.0 + b2) * s.d_dot) / den;
        Ok(d1_dot + a * (1.0 + b1) * d1)
    }

    /// Steady-state solution of the vector filter with `B = b_i I`.
    pub fn mu_ss(&self, t: f64, branch: u8) -> Result<[f64; 2], SignalError> {
        let BenchmarkSignalParams { a, b1, b2 } = self.params;
        match branch {
            1 => Ok([1.0 / (a * (1.0 + b1)), self.d1(t)?]),
            2 => Ok([1.0 / (a * (1.0 + b2)), self.d1(t)? + self.d(t)?.d]),
            other => Err(SignalError::InvalidBranch(other)),
        }
    }

    /// `M_ss = [μ₁ss, μ₂ss]` (columns), row-major.
    pub fn m_ss(&self, t: f64) -> Result<[f64; 4], SignalError> {
        let m1 = self.mu_ss(t, 1)?;
        let m2 = self.mu_ss(t, 2)?;
        Ok([m1[0], m2[0], m1[1], m2[1]])
    }

    /// Time derivative of `M_ss`, row-major.
    pub fn m_ss_dot(&self, t: f64) -> Result<[f64; 4], SignalError> {
        let d1_dot = self.d1_dot(t)?;
        let d_dot = self.d(t)?.d_dot;
        Ok([0.0, 0.0, d1_dot, d1_dot + d_dot])
    }

    /// `det M_ss = −ḋ / (a²(1+b₁)(1+b₂))`.
    ///
    /// The `a²` factor comes out of eliminating `d₁`; the numerically
    /// assembled determinant of [`Benchmark::m_ss`] is the reference.
    pub fn det_m_ss(&self, t: f64) -> Result<f64, SignalError> {
        let BenchmarkSignalParams { a, b1, b2 } = self.params;
        Ok(-self.d(t)?.d_dot / (a * a * (1.0 + b1) * (1.0 + b2)))
    }
}

/// Numeric evidence for membership of a signal in the decaying,
/// non-square-integrable-derivative class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DMembership {
    /// sup |d|, sup |ḋ|, sup |d̈| over the scanned horizon.
    pub sup_abs: [f64; 3],
    /// Same suprema restricted to the last tenth of the horizon.
    pub tail_sup_abs: [f64; 3],
    /// Samples `(T, ∫₀ᵀ ḋ²)`.
    pub ddot_energy: Vec<(f64, f64)>,
    /// Coefficient `c` of the fit `∫₀ᵀ ḋ² ≈ c·ln(1+T) + const` on the
    /// second half of the horizon.
    pub log_growth: f64,
    pub log_fit_relative_residual: f64,
}

/// Scans `signal` on `[0, horizon]` with step `dt`.
///
/// Divergence of an improper integral cannot be decided from a finite
/// trace, so the result is a growth-rate fit, not a verdict.
pub fn membership_report(signal: &dyn DSignal, horizon: f64, dt: f64) -> Result<DMembership, SignalError> {
    let n = (horizon / dt).round() as usize;
    let mut sup = [0.0_f64; 3];
    let mut tail = [0.0_f64; 3];
    let tail_start = n - n / 10;
    let mut energy = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    let mut prev = signal.eval(0.0)?.d_dot.powi(2);
    for k in 0..=n {
        let t = k as f64 * dt;
        let s = signal.eval(t)?;
        let vals = [s.d.abs(), s.d_dot.abs(), s.d_ddot.abs()];
        for i in 0..3 {
            sup[i] = sup[i].max(vals[i]);
            if k >= tail_start {
                tail[i] = tail[i].max(vals[i]);
            }
        }
        let cur = s.d_dot * s.d_dot;
        if k > 0 {
            acc += 0.5 * dt * (prev + cur);
        }
        prev = cur;
        energy.push((t, acc));
    }
    let half: Vec<(f64, f64)> = energy[n / 2..].to_vec();
    let fit = crate::diagnostics::fit_log_growth(&half);
    Ok(DMembership {
        sup_abs: sup,
        tail_sup_abs: tail,
        ddot_energy: energy,
        log_growth: fit.slope,
        log_fit_relative_residual: fit.relative_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_signal_at_origin() {
        let s = d_default(0.0).unwrap();
        assert_eq!(s.d, 0.0);
        assert_relative_eq!(s.d_dot, 1.0, epsilon = 1e-15);
        assert_relative_eq!(s.d_ddot, -1.0, epsilon = 1e-15);
    }

    #[test]
    fn default_signal_at_pi_and_far_tail() {
        assert!(d_default(std::f64::consts::PI).unwrap().d.abs() < 1e-15);
        assert!(d_default(1e4).unwrap().d.abs() <= 0.01);
    }

    #[test]
    fn negative_time_rejected() {
        assert_eq!(d_default(-1.0), Err(SignalError::NegativeTime(-1.0)));
    }

    #[test]
    fn equal_gains_rejected() {
        assert_eq!(
            BenchmarkSignalParams::new(0.5, 1.0, 1.0),
            Err(SignalError::EqualFilterGains(1.0))
        );
        assert!(matches!(
            BenchmarkSignalParams::new(0.0, 1.0, 2.0),
            Err(SignalError::NonPositiveGain { name: "a", .. })
        ));
    }

    #[test]
    fn paper_gains_at_origin() {
        let b = Benchmark::paper_default();
        assert_relative_eq!(b.d1(0.0).unwrap(), -4.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(b.d1_dot(0.0).unwrap(), -2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(b.phi2(0.0).unwrap(), -5.0 / 3.0, epsilon = 1e-12);
        let m1 = b.mu_ss(0.0, 1).unwrap();
        let m2 = b.mu_ss(0.0, 2).unwrap();
        assert_relative_eq!(m1[0], 4.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(m2[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(m2[1], -4.0 / 3.0, epsilon = 1e-12);
        assert!(b.mu_ss(0.0, 3).is_err());
    }

    #[test]
    fn m_ss_at_origin_and_determinant() {
        let b = Benchmark::paper_default();
        let m = b.m_ss(0.0).unwrap();
        let expected = [4.0 / 3.0, 2.0 / 3.0, -4.0 / 3.0, -4.0 / 3.0];
        for (g, e) in m.iter().zip(&expected) {
            assert_relative_eq!(g, e, epsilon = 1e-12);
        }
        let numeric = crate::linalg::determinant(&m, 2);
        assert_relative_eq!(numeric, -8.0 / 9.0, epsilon = 1e-12);
        assert_relative_eq!(b.det_m_ss(0.0).unwrap(), -8.0 / 9.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_signal_gives_zero_regressor() {
        let b = Benchmark::new(BenchmarkSignalParams::default(), Arc::new(ZeroSignal)).unwrap();
        for t in [0.0, 1.0, 17.5] {
            assert_eq!(b.d1(t).unwrap(), 0.0);
            assert_eq!(b.phi2(t).unwrap(), 0.0);
            assert_eq!(b.det_m_ss(t).unwrap(), 0.0);
            let m = b.m_ss(t).unwrap();
            assert_eq!(&m[2..], &[0.0, 0.0]);
            assert_eq!(crate::linalg::determinant(&m, 2), 0.0);
        }
    }

    #[test]
    fn regressor_vanishes_in_the_tail() {
        let b = Benchmark::paper_default();
        assert!(b.d1(1e6).unwrap().abs() < 1e-2);
        assert!(b.phi2(1e6).unwrap().abs() < 1e-2);
    }
}
