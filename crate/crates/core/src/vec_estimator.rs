//! Estimator built on the vector filtered transformation `x = p + μᵀθ`.
//!
//! The estimator memory is `(ζ, μ)` with `ζ ∈ ℝ^{1+q}` and `μ ∈ ℝ^q`. The
//! unavailable vector `η = (p, θ)` is recovered as `ζ + β(y, μ)` where
//!
//! ```text
//! β(y, μ) = sgn(f) [1; ΓBμ] k(y)
//! μ̇       = −|f| k'(y) (I + B) μ + φ(y, t)
//! ```
//!
//! and the `ζ` update cancels every term of the error dynamics except
//! `ż = −|f| k' [[1, −μᵀB], [ΓBμ, ΓBμμᵀ]] z`, which is exposed separately
//! by [`VecEstimator::error_rhs`] so the two can be checked against each
//! other.

use smallvec::SmallVec;
use thiserror::Error;

use crate::diagnostics::{validate_gains, GainValidationError};
use crate::gains::EstimatorGains;
use crate::linalg;
use crate::model::{KnownMaps, ModelError, Scratch};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Gains(#[from] GainValidationError),
    #[error("dimension mismatch in `{what}`: expected {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("k'(y) = {value} at y = {y} is outside (0, {bound}]")]
    OutputSlope { y: f64, value: f64, bound: f64 },
    #[error("non-finite intermediate `{0}`")]
    NonFinite(&'static str),
}

pub(crate) fn check_len(what: &'static str, v: &[f64], expected: usize) -> Result<(), EstimatorError> {
    if v.len() == expected {
        Ok(())
    } else {
        Err(EstimatorError::DimensionMismatch { what, expected, got: v.len() })
    }
}

pub(crate) fn output_slope(gains: &EstimatorGains, y: f64) -> Result<f64, EstimatorError> {
    let value = gains.k.dk(y);
    let bound = gains.k.dk_bound();
    if value > 0.0 && value <= bound * (1.0 + 1e-12) {
        Ok(value)
    } else {
        Err(EstimatorError::OutputSlope { y, value, bound })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VecEstimatorState {
    pub zeta: Vec<f64>,
    pub mu: Vec<f64>,
    pub t: f64,
}

impl VecEstimatorState {
    pub fn zeros(q: usize) -> Self {
        Self { zeta: vec![0.0; 1 + q], mu: vec![0.0; q], t: 0.0 }
    }
}

#[derive(Debug, Clone)]
pub struct VecEstimator {
    q: usize,
    gains: EstimatorGains,
    sign_f: f64,
    b: Vec<f64>,
    gb: Vec<f64>,
    gamma_inv: Vec<f64>,
}

impl VecEstimator {
    /// Validates the gains (symmetric positive definite `Γ`, `B`) and
    /// caches `ΓB` and `Γ⁻¹`.
    pub fn new(gains: EstimatorGains, sign_f: f64) -> Result<Self, EstimatorError> {
        validate_gains(&gains, gains.require_distinct_b_eigs)?;
        let q = gains.q();
        let gb = linalg::to_row_major(&(&gains.gamma * &gains.b));
        let gamma_inv = gains
            .gamma
            .clone()
            .try_inverse()
            .map(|m| linalg::to_row_major(&m))
            .ok_or(EstimatorError::NonFinite("gamma inverse"))?;
        Ok(Self {
            q,
            b: linalg::to_row_major(&gains.b),
            gb,
            gamma_inv,
            gains,
            sign_f: if sign_f >= 0.0 { 1.0 } else { -1.0 },
        })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn gains(&self) -> &EstimatorGains {
        &self.gains
    }

    pub fn sign_f(&self) -> f64 {
        self.sign_f
    }

    /// `β = sgn(f)·[k(y); ΓBμ·k(y)]`.
    pub fn beta(&self, y: f64, mu: &[f64]) -> Result<Vec<f64>, EstimatorError> {
        let mut out = vec![0.0; 1 + self.q];
        self.beta_into(y, mu, &mut out)?;
        Ok(out)
    }

    pub fn beta_into(&self, y: f64, mu: &[f64], out: &mut [f64]) -> Result<(), EstimatorError> {
        check_len("mu", mu, self.q)?;
        check_len("beta", out, 1 + self.q)?;
        let sk = self.sign_f * self.gains.k.k(y);
        out[0] = sk;
        linalg::mat_vec(&self.gb, mu, self.q, &mut out[1..]);
        for v in &mut out[1..] {
            *v *= sk;
        }
        Ok(())
    }

    /// `μ̇ = −|f|k'(I+B)μ + φ(y,t)`.
    pub fn mu_rhs(&self, mu: &[f64], y: f64, t: f64, maps: &KnownMaps) -> Result<Vec<f64>, EstimatorError> {
        let mut out = vec![0.0; self.q];
        self.mu_rhs_into(mu, y, t, maps, &mut out)?;
        Ok(out)
    }

    pub fn mu_rhs_into(
        &self,
        mu: &[f64],
        y: f64,
        t: f64,
        maps: &KnownMaps,
        out: &mut [f64],
    ) -> Result<(), EstimatorError> {
        let q = self.q;
        check_len("mu", mu, q)?;
        check_len("mu_dot", out, q)?;
        let c = maps.abs_f(y, t)? * output_slope(&self.gains, y)?;
        maps.phi_into(y, t, out)?;
        for i in 0..q {
            let bmu: f64 = (0..q).map(|j| self.b[i * q + j] * mu[j]).sum();
            out[i] -= c * (mu[i] + bmu);
        }
        Ok(())
    }

    /// `ζ̇` with `μ̇` evaluated internally.
    pub fn zeta_rhs(&self, state: &VecEstimatorState, y: f64, maps: &KnownMaps) -> Result<Vec<f64>, EstimatorError> {
        let mut mu_dot = vec![0.0; self.q];
        self.mu_rhs_into(&state.mu, y, state.t, maps, &mut mu_dot)?;
        let mut out = vec![0.0; 1 + self.q];
        self.zeta_rhs_into(&state.zeta, &state.mu, &mu_dot, y, state.t, maps, &mut out)?;
        Ok(out)
    }

    /// `ζ̇ = −(∂β/∂y f [1 μᵀ] − A)(ζ+β) + [g₁; 0] − (∂β/∂y) g₀ − (∂β/∂μ) μ̇`
    /// with the `A` block evaluated at `φ − μ̇ = |f|k'(I+B)μ`.
    #[allow(clippy::too_many_arguments)]
    pub fn zeta_rhs_into(
        &self,
        zeta: &[f64],
        mu: &[f64],
        mu_dot: &[f64],
        y: f64,
        t: f64,
        maps: &KnownMaps,
        out: &mut [f64],
    ) -> Result<(), EstimatorError> {
        let q = self.q;
        check_len("zeta", zeta, 1 + q)?;
        check_len("mu", mu, q)?;
        check_len("mu_dot", mu_dot, q)?;
        check_len("zeta_dot", out, 1 + q)?;

        let dk = output_slope(&self.gains, y)?;
        let k = self.gains.k.k(y);
        let c = maps.abs_f(y, t)? * dk;
        let g0 = maps.g0(y, t)?;
        let g1 = maps.g1(y, t)?;

        // w = ζ + β, h = [1; ΓBμ]
        let mut w: Scratch = SmallVec::from_elem(0.0, 1 + q);
        self.beta_into(y, mu, &mut w)?;
        for (wi, zi) in w.iter_mut().zip(zeta) {
            *wi += zi;
        }
        let mut h: Scratch = SmallVec::from_elem(0.0, 1 + q);
        h[0] = 1.0;
        linalg::mat_vec(&self.gb, mu, q, &mut h[1..]);
        let mut gb_mu_dot: Scratch = SmallVec::from_elem(0.0, q);
        linalg::mat_vec(&self.gb, mu_dot, q, &mut gb_mu_dot);

        let x_proj = w[0] + linalg::dot(mu, &w[1..]);
        // (φ − μ̇)ᵀ w₂ = |f|k' ((I+B)μ)ᵀ w₂
        let mut a_term = 0.0;
        for i in 0..q {
            let bmu: f64 = (0..q).map(|j| self.b[i * q + j] * mu[j]).sum();
            a_term += (mu[i] + bmu) * w[1 + i];
        }
        a_term *= c;

        let s = self.sign_f;
        for i in 0..=q {
            out[i] = -c * h[i] * x_proj - s * dk * g0 * h[i];
        }
        out[0] += a_term + g1;
        for i in 0..q {
            out[1 + i] -= s * k * gb_mu_dot[i];
        }
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(EstimatorError::NonFinite("zeta_dot"))
        }
    }

    /// Error dynamics in closed form,
    /// `ż = −|f|k' [[1, −μᵀB], [ΓBμ, ΓBμμᵀ]] z`.
    pub fn error_rhs(&self, z: &[f64], y: f64, t: f64, mu: &[f64], maps: &KnownMaps) -> Result<Vec<f64>, EstimatorError> {
        let mut out = vec![0.0; 1 + self.q];
        self.error_rhs_into(z, y, t, mu, maps, &mut out)?;
        Ok(out)
    }

    pub fn error_rhs_into(
        &self,
        z: &[f64],
        y: f64,
        t: f64,
        mu: &[f64],
        maps: &KnownMaps,
        out: &mut [f64],
    ) -> Result<(), EstimatorError> {
        let q = self.q;
        let n = 1 + q;
        check_len("z", z, n)?;
        check_len("mu", mu, q)?;
        check_len("z_dot", out, n)?;
        let c = maps.abs_f(y, t)? * output_slope(&self.gains, y)?;

        let mut gbmu: Scratch = SmallVec::from_elem(0.0, q);
        linalg::mat_vec(&self.gb, mu, q, &mut gbmu);
        let mut mu_b: Scratch = SmallVec::from_elem(0.0, q);
        linalg::mat_t_vec(&self.b, mu, q, &mut mu_b);

        let mut a: SmallVec<[f64; 36]> = SmallVec::from_elem(0.0, n * n);
        a[0] = 1.0;
        for j in 0..q {
            a[1 + j] = -mu_b[j];
        }
        for i in 0..q {
            a[(1 + i) * n] = gbmu[i];
            for j in 0..q {
                a[(1 + i) * n + 1 + j] = gbmu[i] * mu[j];
            }
        }
        for i in 0..n {
            out[i] = -c * (0..n).map(|j| a[i * n + j] * z[j]).sum::<f64>();
        }
        Ok(())
    }

    /// `x̂ = [1 μᵀ](ζ+β)`, `θ̂ = (ζ+β)₂`.
    pub fn estimates(&self, zeta: &[f64], mu: &[f64], y: f64) -> Result<(f64, Vec<f64>), EstimatorError> {
        check_len("zeta", zeta, 1 + self.q)?;
        let mut w = self.beta(y, mu)?;
        for (wi, zi) in w.iter_mut().zip(zeta) {
            *wi += zi;
        }
        let x_hat = w[0] + linalg::dot(mu, &w[1..]);
        Ok((x_hat, w[1..].to_vec()))
    }

    /// `V(z) = ½(z₁² + z₂ᵀΓ⁻¹z₂)`.
    pub fn lyapunov(&self, z: &[f64]) -> f64 {
        let q = self.q;
        let z2 = &z[1..];
        let mut quad = 0.0;
        for i in 0..q {
            for j in 0..q {
                quad += z2[i] * self.gamma_inv[i * q + j] * z2[j];
            }
        }
        0.5 * (z[0] * z[0] + quad)
    }

    /// `z = η − ζ − β` from the true `x` and `θ`. Oracle use only.
    pub fn reconstruct_error(
        &self,
        x: f64,
        theta: &[f64],
        zeta: &[f64],
        mu: &[f64],
        y: f64,
        out: &mut [f64],
    ) -> Result<(), EstimatorError> {
        check_len("theta", theta, self.q)?;
        self.beta_into(y, mu, out)?;
        out[0] = x - linalg::dot(mu, theta) - zeta[0] - out[0];
        for i in 0..self.q {
            out[1 + i] = theta[i] - zeta[1 + i] - out[1 + i];
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gains::OutputMap;
    use crate::model::make_example_system;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use std::sync::Arc;

    fn est(b: &[f64], k_slope: f64, sign: f64) -> VecEstimator {
        VecEstimator::new(EstimatorGains::diagonal(1.0, b, k_slope), sign).unwrap()
    }

    fn unit_maps(q: usize, f: f64) -> KnownMaps {
        KnownMaps::new(
            q,
            Arc::new(move |_, _| f),
            f > 0.0,
            Arc::new(|_, _| 0.0),
            Arc::new(|_, _| 0.0),
            Arc::new(|_, _, out: &mut [f64]| out.fill(0.0)),
        )
        .unwrap()
    }

    #[test]
    fn beta_examples() {
        let e = est(&[1.0, 1.0], 0.5, 1.0);
        assert_eq!(e.beta(2.0, &[0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0]);
        let e = est(&[0.5, 2.0], 1.0, 1.0);
        assert_eq!(e.beta(1.0, &[1.0, 0.0]).unwrap(), vec![1.0, 0.5, 0.0]);
        let e = est(&[0.5, 2.0], 1.0, -1.0);
        assert_eq!(e.beta(1.0, &[1.0, 0.0]).unwrap(), vec![-1.0, -0.5, 0.0]);
    }

    #[test]
    fn beta_dimension_mismatch() {
        let e = est(&[1.0, 2.0], 1.0, 1.0);
        assert!(matches!(e.beta(1.0, &[1.0]), Err(EstimatorError::DimensionMismatch { .. })));
    }

    #[test]
    fn mu_rhs_examples() {
        let model = make_example_system();
        let e = est(&[0.5, 0.5], 0.5, 1.0);
        let d = e.mu_rhs(&[0.0, 0.0], 0.0, 0.0, model.known()).unwrap();
        assert_relative_eq!(d[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(d[1], -5.0 / 3.0, epsilon = 1e-12);

        let d = e.mu_rhs(&[4.0 / 3.0, 0.0], 0.0, 0.0, model.known()).unwrap();
        assert_relative_eq!(d[0], 0.0, epsilon = 1e-15);

        let e = est(&[1.0, 1.0], 1.0, 1.0);
        let d = e.mu_rhs(&[1.0, 0.0], 0.0, 0.0, &unit_maps(2, 1.0)).unwrap();
        assert_eq!(d, vec![-2.0, 0.0]);
    }

    #[test]
    fn zeta_rhs_at_rest() {
        let model = make_example_system();
        let e = est(&[0.5, 0.5], 0.5, 1.0);
        let d = e.zeta_rhs(&VecEstimatorState::zeros(2), 0.0, model.known()).unwrap();
        assert_eq!(d, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn error_rhs_examples() {
        let maps = unit_maps(2, 2.0);
        let e = est(&[0.5, 2.0], 0.5, 1.0);
        assert_eq!(e.error_rhs(&[0.0; 3], 0.3, 0.0, &[1.0, -2.0], &maps).unwrap(), vec![0.0; 3]);
        let d = e.error_rhs(&[1.0, 0.7, -0.3], 0.3, 0.0, &[0.0, 0.0], &maps).unwrap();
        assert_eq!(d, vec![-1.0, 0.0, 0.0]);
    }

    #[test]
    fn lyapunov_examples() {
        let e = est(&[1.0, 1.0], 1.0, 1.0);
        assert_eq!(e.lyapunov(&[0.0; 3]), 0.0);
        assert_relative_eq!(e.lyapunov(&[1.0, 1.0, 1.0]), 1.5);
        let g = EstimatorGains::diagonal(100.0, &[1.0, 1.0], 1.0);
        let e = VecEstimator::new(g, 1.0).unwrap();
        assert_relative_eq!(e.lyapunov(&[0.0, 1.0, 0.0]), 0.005, epsilon = 1e-15);
    }

    #[test]
    fn estimates_examples() {
        let e = est(&[0.5, 2.0], 1.0, 1.0);
        // ζ = η − β makes the estimates exact
        let beta = e.beta(0.7, &[0.0, 0.0]).unwrap();
        let zeta: Vec<f64> = [3.0, -1.0, 1.0].iter().zip(&beta).map(|(a, b)| a - b).collect();
        let (x_hat, th) = e.estimates(&zeta, &[0.0, 0.0], 0.7).unwrap();
        assert_relative_eq!(x_hat, 3.0, epsilon = 1e-15);
        assert_relative_eq!(th[0], -1.0, epsilon = 1e-15);
        assert_relative_eq!(th[1], 1.0, epsilon = 1e-15);
        let (x_hat, _) = e.estimates(&[0.0; 3], &[0.0, 0.0], 1.0).unwrap();
        assert_eq!(x_hat, 1.0);
    }

    #[test]
    fn non_spd_gamma_rejected() {
        let g = EstimatorGains::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
            DMatrix::identity(2, 2),
            OutputMap::linear(1.0),
        );
        assert!(matches!(VecEstimator::new(g, 1.0), Err(EstimatorError::Gains(_))));
    }

    #[test]
    fn decreasing_output_map_rejected_at_runtime() {
        let mut g = EstimatorGains::diagonal(1.0, &[1.0, 2.0], 1.0);
        g.k = OutputMap::new(Arc::new(|y| y), Arc::new(|y| if y > 1e4 { -1.0 } else { 1.0 }), 1.0);
        let e = VecEstimator::new(g, 1.0).unwrap();
        let err = e.mu_rhs(&[0.0, 0.0], 2e4, 0.0, &unit_maps(2, 1.0)).unwrap_err();
        assert!(matches!(err, EstimatorError::OutputSlope { .. }));
    }
}
