//! Estimator built on the matrix filtered transformation `ιx = π + Mᵀθ`.
//!
//! With `S = ΓMB`, `ψ = −MB`, `κ(y) = ι·k(y)`:
//!
//! ```text
//! β   = sgn(f) [I; S] κ(y)
//! Ṁ   = −|f| k' M (I + B) + φ ιᵀ          (row i of Mᵀ is a vector filter with B → b_i)
//! ζ̇   = −|f| k' [[I, ψᵀ], [S, SMᵀ]] (ζ+β) + [ι g₁; 0]
//!       − sgn(f) (k' [I; S] ι g₀ + [0; Ṡ] κ(y)),        Ṡ = ΓṀB
//! ż   = −|f| k' [[I, −BMᵀ], [ΓMB, ΓMBMᵀ]] z
//! ```
//!
//! `M` is stored row-major everywhere in this module.

use smallvec::SmallVec;

use crate::diagnostics::validate_gains;
use crate::gains::EstimatorGains;
use crate::linalg;
use crate::model::{KnownMaps, Scratch};
use crate::vec_estimator::{check_len, output_slope, EstimatorError};

type MatScratch = SmallVec<[f64; 64]>;

#[derive(Debug, Clone, PartialEq)]
pub struct MatEstimatorState {
    pub zeta: Vec<f64>,
    /// Row-major `q × q`.
    pub m: Vec<f64>,
    pub t: f64,
}

impl MatEstimatorState {
    pub fn zeros(q: usize) -> Self {
        Self { zeta: vec![0.0; 2 * q], m: vec![0.0; q * q], t: 0.0 }
    }

    /// Zero `ζ` with the given initial filter matrix.
    pub fn with_m0(q: usize, m0: Vec<f64>) -> Self {
        assert_eq!(m0.len(), q * q, "M(0) must be q×q");
        Self { zeta: vec![0.0; 2 * q], m: m0, t: 0.0 }
    }
}

#[derive(Debug, Clone)]
pub struct MatEstimator {
    q: usize,
    gains: EstimatorGains,
    sign_f: f64,
    gamma: Vec<f64>,
    b: Vec<f64>,
    gamma_inv: Vec<f64>,
}

impl MatEstimator {
    /// Strict validation: `Γ`, `B` symmetric positive definite and the
    /// eigenvalues of `B` pairwise distinct.
    pub fn new(gains: EstimatorGains, sign_f: f64) -> Result<Self, EstimatorError> {
        let gains = gains.for_matrix_estimator();
        validate_gains(&gains, true)?;
        let gamma_inv = gains
            .gamma
            .clone()
            .try_inverse()
            .map(|m| linalg::to_row_major(&m))
            .ok_or(EstimatorError::NonFinite("gamma inverse"))?;
        Ok(Self {
            q: gains.q(),
            gamma: linalg::to_row_major(&gains.gamma),
            b: linalg::to_row_major(&gains.b),
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

    /// `Γ X B` for a row-major `X`.
    fn sandwich(&self, x: &[f64], out: &mut [f64]) {
        let q = self.q;
        let mut tmp: MatScratch = SmallVec::from_elem(0.0, q * q);
        linalg::mat_mul(&self.gamma, x, q, &mut tmp);
        linalg::mat_mul(&tmp, &self.b, q, out);
    }

    /// `S = ΓMB`.
    pub fn s_matrix(&self, m: &[f64]) -> Result<Vec<f64>, EstimatorError> {
        check_len("M", m, self.q * self.q)?;
        let mut s = vec![0.0; self.q * self.q];
        self.sandwich(m, &mut s);
        Ok(s)
    }

    /// `β = sgn(f)·[κ(y); ΓMB·κ(y)]`.
    pub fn beta(&self, y: f64, m: &[f64]) -> Result<Vec<f64>, EstimatorError> {
        let mut out = vec![0.0; 2 * self.q];
        self.beta_into(y, m, &mut out)?;
        Ok(out)
    }

    pub fn beta_into(&self, y: f64, m: &[f64], out: &mut [f64]) -> Result<(), EstimatorError> {
        let q = self.q;
        check_len("M", m, q * q)?;
        check_len("beta", out, 2 * q)?;
        let sk = self.sign_f * self.gains.k.k(y);
        let mut s: MatScratch = SmallVec::from_elem(0.0, q * q);
        self.sandwich(m, &mut s);
        for i in 0..q {
            out[i] = sk;
            out[q + i] = sk * s[i * q..(i + 1) * q].iter().sum::<f64>();
        }
        Ok(())
    }

    /// `Ṁ = −|f|k' M(I+B) + φιᵀ`, i.e. the transpose of
    /// `Ṁᵀ = −|f|k'(I+B)Mᵀ + ιφᵀ`. Row-major in and out.
    pub fn m_rhs(&self, m: &[f64], y: f64, t: f64, maps: &KnownMaps) -> Result<Vec<f64>, EstimatorError> {
        let mut out = vec![0.0; self.q * self.q];
        self.m_rhs_into(m, y, t, maps, &mut out)?;
        Ok(out)
    }

    pub fn m_rhs_into(
        &self,
        m: &[f64],
        y: f64,
        t: f64,
        maps: &KnownMaps,
        out: &mut [f64],
    ) -> Result<(), EstimatorError> {
        let q = self.q;
        check_len("M", m, q * q)?;
        check_len("M_dot", out, q * q)?;
        let c = maps.abs_f(y, t)? * output_slope(&self.gains, y)?;
        let mut phi: Scratch = SmallVec::from_elem(0.0, q);
        maps.phi_into(y, t, &mut phi)?;
        for i in 0..q {
            for j in 0..q {
                let mb: f64 = (0..q).map(|l| m[i * q + l] * self.b[l * q + j]).sum();
                out[i * q + j] = -c * (m[i * q + j] + mb) + phi[i];
            }
        }
        Ok(())
    }

    /// `ζ̇` with `Ṁ` evaluated internally.
    pub fn zeta_rhs(&self, state: &MatEstimatorState, y: f64, maps: &KnownMaps) -> Result<Vec<f64>, EstimatorError> {
        let mut m_dot = vec![0.0; self.q * self.q];
        self.m_rhs_into(&state.m, y, state.t, maps, &mut m_dot)?;
        let mut out = vec![0.0; 2 * self.q];
        self.zeta_rhs_into(&state.zeta, &state.m, &m_dot, y, state.t, maps, &mut out)?;
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn zeta_rhs_into(
        &self,
        zeta: &[f64],
        m: &[f64],
        m_dot: &[f64],
        y: f64,
        t: f64,
        maps: &KnownMaps,
        out: &mut [f64],
    ) -> Result<(), EstimatorError> {
        let q = self.q;
        check_len("zeta", zeta, 2 * q)?;
        check_len("M", m, q * q)?;
        check_len("M_dot", m_dot, q * q)?;
        check_len("zeta_dot", out, 2 * q)?;

        let dk = output_slope(&self.gains, y)?;
        let k = self.gains.k.k(y);
        let c = maps.abs_f(y, t)? * dk;
        let g0 = maps.g0(y, t)?;
        let g1 = maps.g1(y, t)?;
        let sgn = self.sign_f;

        let mut s: MatScratch = SmallVec::from_elem(0.0, q * q);
        self.sandwich(m, &mut s);
        let mut s_dot: MatScratch = SmallVec::from_elem(0.0, q * q);
        self.sandwich(m_dot, &mut s_dot);

        let mut w: Scratch = SmallVec::from_elem(0.0, 2 * q);
        self.beta_into(y, m, &mut w)?;
        for (wi, zi) in w.iter_mut().zip(zeta) {
            *wi += zi;
        }
        let (w1, w2) = w.split_at(q);

        // Mᵀ w₂, then ψᵀ w₂ = −B Mᵀ w₂ and S Mᵀ w₂
        let mut mt_w2: Scratch = SmallVec::from_elem(0.0, q);
        linalg::mat_t_vec(m, w2, q, &mut mt_w2);
        let mut b_mt_w2: Scratch = SmallVec::from_elem(0.0, q);
        linalg::mat_vec(&self.b, &mt_w2, q, &mut b_mt_w2);

        let mut inner: Scratch = SmallVec::from_elem(0.0, q);
        for i in 0..q {
            inner[i] = w1[i] + mt_w2[i];
        }
        let mut s_inner: Scratch = SmallVec::from_elem(0.0, q);
        linalg::mat_vec(&s, &inner, q, &mut s_inner);

        for i in 0..q {
            out[i] = -c * (w1[i] - b_mt_w2[i]) + g1 - sgn * dk * g0;
            let s_row: f64 = s[i * q..(i + 1) * q].iter().sum();
            let s_dot_row: f64 = s_dot[i * q..(i + 1) * q].iter().sum();
            out[q + i] = -c * s_inner[i] - sgn * (dk * g0 * s_row + k * s_dot_row);
        }
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(EstimatorError::NonFinite("zeta_dot"))
        }
    }

    /// `ż = −|f|k' [[I, −BMᵀ], [ΓMB, ΓMBMᵀ]] z`.
    pub fn error_rhs(&self, z: &[f64], y: f64, t: f64, m: &[f64], maps: &KnownMaps) -> Result<Vec<f64>, EstimatorError> {
        let mut out = vec![0.0; 2 * self.q];
        self.error_rhs_into(z, y, t, m, maps, &mut out)?;
        Ok(out)
    }

    pub fn error_rhs_into(
        &self,
        z: &[f64],
        y: f64,
        t: f64,
        m: &[f64],
        maps: &KnownMaps,
        out: &mut [f64],
    ) -> Result<(), EstimatorError> {
        let q = self.q;
        let n = 2 * q;
        check_len("z", z, n)?;
        check_len("M", m, q * q)?;
        check_len("z_dot", out, n)?;
        let c = maps.abs_f(y, t)? * output_slope(&self.gains, y)?;

        let mut s: MatScratch = SmallVec::from_elem(0.0, q * q);
        self.sandwich(m, &mut s);
        let mut a: MatScratch = SmallVec::from_elem(0.0, n * n);
        for i in 0..q {
            a[i * n + i] = 1.0;
            for j in 0..q {
                // (B Mᵀ)_ij = Σ_l B_il M_jl
                let bmt: f64 = (0..q).map(|l| self.b[i * q + l] * m[j * q + l]).sum();
                a[i * n + q + j] = -bmt;
                a[(q + i) * n + j] = s[i * q + j];
                // (S Mᵀ)_ij = Σ_l S_il M_jl
                let smt: f64 = (0..q).map(|l| s[i * q + l] * m[j * q + l]).sum();
                a[(q + i) * n + q + j] = smt;
            }
        }
        for i in 0..n {
            out[i] = -c * (0..n).map(|j| a[i * n + j] * z[j]).sum::<f64>();
        }
        Ok(())
    }

    /// `θ̂ = (ζ+β)₂`, `x̂ = q⁻¹ ιᵀ [I Mᵀ](ζ+β)`.
    pub fn estimates(&self, zeta: &[f64], m: &[f64], y: f64) -> Result<(f64, Vec<f64>), EstimatorError> {
        let q = self.q;
        check_len("zeta", zeta, 2 * q)?;
        let mut w = self.beta(y, m)?;
        for (wi, zi) in w.iter_mut().zip(zeta) {
            *wi += zi;
        }
        let mut chi = vec![0.0; q];
        linalg::mat_t_vec(m, &w[q..], q, &mut chi);
        let x_hat = (0..q).map(|i| w[i] + chi[i]).sum::<f64>() / q as f64;
        Ok((x_hat, w[q..].to_vec()))
    }

    /// `V(z) = ½(z₁ᵀz₁ + z₂ᵀΓ⁻¹z₂)`.
    pub fn lyapunov(&self, z: &[f64]) -> f64 {
        let q = self.q;
        let (z1, z2) = z.split_at(q);
        let mut quad = 0.0;
        for i in 0..q {
            for j in 0..q {
                quad += z2[i] * self.gamma_inv[i * q + j] * z2[j];
            }
        }
        0.5 * (linalg::dot(z1, z1) + quad)
    }

    /// `z = ϑ − ζ − β` from the true `x` and `θ`. Oracle use only.
    pub fn reconstruct_error(
        &self,
        x: f64,
        theta: &[f64],
        zeta: &[f64],
        m: &[f64],
        y: f64,
        out: &mut [f64],
    ) -> Result<(), EstimatorError> {
        let q = self.q;
        check_len("theta", theta, q)?;
        self.beta_into(y, m, out)?;
        for i in 0..q {
            let mt_theta: f64 = (0..q).map(|j| m[j * q + i] * theta[j]).sum();
            out[i] = x - mt_theta - zeta[i] - out[i];
            out[q + i] = theta[i] - zeta[q + i] - out[q + i];
        }
        Ok(())
    }

    /// `χ̃ = z₁ + Mᵀz₂`.
    pub fn chi_error(&self, z: &[f64], m: &[f64]) -> Vec<f64> {
        let q = self.q;
        let mut out = vec![0.0; q];
        linalg::mat_t_vec(m, &z[q..], q, &mut out);
        for i in 0..q {
            out[i] += z[i];
        }
        out
    }
}
