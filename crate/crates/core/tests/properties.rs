//! Structural invariants of the estimators over random states.

use filtered_observer::gains::EstimatorGains;
use filtered_observer::linalg;
use filtered_observer::mat_estimator::MatEstimator;
use filtered_observer::model::{make_example_system, plant_rhs, PlantState, SystemModel};
use filtered_observer::vec_estimator::VecEstimator;
use proptest::prelude::*;

fn vec_est(gamma: f64, b: f64) -> VecEstimator {
    VecEstimator::new(EstimatorGains::diagonal(gamma, &[b, b], 0.5), 1.0).unwrap()
}

fn mat_est(gamma: f64) -> MatEstimator {
    MatEstimator::new(EstimatorGains::diagonal(gamma, &[0.5, 2.0], 0.5).for_matrix_estimator(), 1.0).unwrap()
}

/// Coupled plant + vector estimator state `(y, x, ζ, μ)`.
fn vec_flow(e: &VecEstimator, m: &SystemModel, s: &[f64], t: f64) -> Vec<f64> {
    let (y, x) = (s[0], s[1]);
    let (zeta, mu) = (&s[2..5], &s[5..7]);
    let (dy, dx) = plant_rhs(&PlantState { y, x, t }, m).unwrap();
    let mu_dot = e.mu_rhs(mu, y, t, m.known()).unwrap();
    let mut zeta_dot = vec![0.0; 3];
    e.zeta_rhs_into(zeta, mu, &mu_dot, y, t, m.known(), &mut zeta_dot).unwrap();
    [vec![dy, dx], zeta_dot, mu_dot].concat()
}

fn vec_z(e: &VecEstimator, m: &SystemModel, s: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; 3];
    e.reconstruct_error(s[1], m.theta_true(), &s[2..5], &s[5..7], s[0], &mut z).unwrap();
    z
}

/// Coupled plant + matrix estimator state `(y, x, ζ, M)`.
fn mat_flow(e: &MatEstimator, m: &SystemModel, s: &[f64], t: f64) -> Vec<f64> {
    let (y, x) = (s[0], s[1]);
    let (zeta, mm) = (&s[2..6], &s[6..10]);
    let (dy, dx) = plant_rhs(&PlantState { y, x, t }, m).unwrap();
    let m_dot = e.m_rhs(mm, y, t, m.known()).unwrap();
    let mut zeta_dot = vec![0.0; 4];
    e.zeta_rhs_into(zeta, mm, &m_dot, y, t, m.known(), &mut zeta_dot).unwrap();
    [vec![dy, dx], zeta_dot, m_dot].concat()
}

fn mat_z(e: &MatEstimator, m: &SystemModel, s: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; 4];
    e.reconstruct_error(s[1], m.theta_true(), &s[2..6], &s[6..10], s[0], &mut z).unwrap();
    z
}

/// Central difference of `z` along the exact flow.
fn flow_derivative(s: &[f64], ds: &[f64], z: impl Fn(&[f64]) -> Vec<f64>, h: f64) -> Vec<f64> {
    let plus: Vec<f64> = s.iter().zip(ds).map(|(a, b)| a + h * b).collect();
    let minus: Vec<f64> = s.iter().zip(ds).map(|(a, b)| a - h * b).collect();
    z(&plus).iter().zip(z(&minus)).map(|(p, m)| (p - m) / (2.0 * h)).collect()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    let scale = 1.0 + linalg::max_abs(b);
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
}

fn state(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// `z = η − ζ − β` evolves exactly by the closed-form error dynamics.
    /// The error is affine in the state with time-independent `β`, so the
    /// time shift of the flow does not enter the difference quotient.
    #[test]
    fn vec_error_follows_closed_form(s in state(7), t in 0.1..40.0f64, gamma in 0.1..20.0f64, b in 0.2..3.0f64) {
        let m = make_example_system();
        let e = vec_est(gamma, b);
        let ds = vec_flow(&e, &m, &s, t);
        let numeric = flow_derivative(&s, &ds, |x| vec_z(&e, &m, x), 1e-5);
        let z = vec_z(&e, &m, &s);
        let closed = e.error_rhs(&z, s[0], t, &s[5..7], m.known()).unwrap();
        prop_assert!(close(&numeric, &closed, 1e-6), "{numeric:?} vs {closed:?}");
    }

    #[test]
    fn mat_error_follows_closed_form(s in state(10), t in 0.1..40.0f64, gamma in 0.1..20.0f64) {
        let m = make_example_system();
        let e = mat_est(gamma);
        let ds = mat_flow(&e, &m, &s, t);
        let numeric = flow_derivative(&s, &ds, |x| mat_z(&e, &m, x), 1e-5);
        let z = mat_z(&e, &m, &s);
        let closed = e.error_rhs(&z, s[0], t, &s[6..10], m.known()).unwrap();
        prop_assert!(close(&numeric, &closed, 1e-6), "{numeric:?} vs {closed:?}");
    }

    /// Estimates plus errors recover the true quantities.
    #[test]
    fn reconstruction_identity(s in state(10), gamma in 0.1..20.0f64) {
        let m = make_example_system();
        let theta = m.theta_true();
        let e = mat_est(gamma);
        let (x_hat, th_hat) = e.estimates(&s[2..6], &s[6..10], s[0]).unwrap();
        let z = mat_z(&e, &m, &s);
        for i in 0..2 {
            prop_assert!((th_hat[i] + z[2 + i] - theta[i]).abs() < 1e-12);
        }
        let chi = e.chi_error(&z, &s[6..10]);
        prop_assert!((x_hat + 0.5 * (chi[0] + chi[1]) - s[1]).abs() < 1e-12);

        let v = vec_est(gamma, 1.0);
        let (x_hat, th_hat) = v.estimates(&s[2..5], &s[5..7], s[0]).unwrap();
        let z = vec_z(&v, &m, &s[..7]);
        for i in 0..2 {
            prop_assert!((th_hat[i] + z[1 + i] - theta[i]).abs() < 1e-12);
        }
        let x_err = z[0] + linalg::dot(&s[5..7], &z[1..]);
        prop_assert!((x_hat + x_err - s[1]).abs() < 1e-12);
    }

    /// `V̇ = −c(z₁² + (μᵀBz₂)(μᵀz₂))` for the vector estimator and
    /// `V̇ = −c(‖z₁‖² + z₂ᵀMBMᵀz₂) ≤ 0` for the matrix estimator.
    #[test]
    fn lyapunov_derivative_identity(z in state(4), mm in state(4), mu in state(2), y in -3.0..3.0f64, gamma in 0.1..50.0f64, b in 0.2..3.0f64) {
        let model = make_example_system();
        let c = 0.5;
        let v = vec_est(gamma, b);
        let zv = &z[..3];
        let dz = v.error_rhs(zv, y, 1.0, &mu, model.known()).unwrap();
        let vdot = zv[0] * dz[0] + (zv[1] * dz[1] + zv[2] * dz[2]) / gamma;
        let mz = linalg::dot(&mu, &zv[1..]);
        prop_assert!((vdot + c * (zv[0] * zv[0] + b * mz * mz)).abs() < 1e-9 * (1.0 + vdot.abs()));
        prop_assert!(vdot <= 1e-12);

        let e = mat_est(gamma);
        let dz = e.error_rhs(&z, y, 1.0, &mm, model.known()).unwrap();
        let vdot = z[0] * dz[0] + z[1] * dz[1] + (z[2] * dz[2] + z[3] * dz[3]) / gamma;
        let mut mt_z2 = vec![0.0; 2];
        linalg::mat_t_vec(&mm, &z[2..], 2, &mut mt_z2);
        let quad = 0.5 * mt_z2[0] * mt_z2[0] + 2.0 * mt_z2[1] * mt_z2[1];
        let expected = -c * (z[0] * z[0] + z[1] * z[1] + quad);
        prop_assert!((vdot - expected).abs() < 1e-9 * (1.0 + vdot.abs()));
        prop_assert!(vdot <= 1e-12);
    }

    /// The upper block of the error dynamics ignores `Γ`; the lower block
    /// is linear in it.
    #[test]
    fn error_blocks_scale_with_gamma(z in state(4), mm in state(4), y in -3.0..3.0f64, gamma in 0.1..50.0f64, k in 0.1..10.0f64) {
        let model = make_example_system();
        let d1 = mat_est(gamma).error_rhs(&z, y, 2.0, &mm, model.known()).unwrap();
        let d2 = mat_est(k * gamma).error_rhs(&z, y, 2.0, &mm, model.known()).unwrap();
        for i in 0..2 {
            prop_assert!((d1[i] - d2[i]).abs() < 1e-12 * (1.0 + d1[i].abs()));
            prop_assert!((k * d1[2 + i] - d2[2 + i]).abs() < 1e-9 * (1.0 + d2[2 + i].abs()));
        }
    }

    /// Determinant and eigenvalues against the nalgebra reference.
    #[test]
    fn small_linear_algebra_matches_reference(a in state(9)) {
        let m = nalgebra::DMatrix::from_row_slice(3, 3, &a);
        prop_assert!((linalg::determinant(&a, 3) - m.determinant()).abs() < 1e-10);
        let g = linalg::gram(&a, 3);
        let mut reference: Vec<f64> = nalgebra::DMatrix::from_row_slice(3, 3, &g).symmetric_eigen().eigenvalues.iter().copied().collect();
        reference.sort_by(f64::total_cmp);
        let ours = linalg::symmetric_eigenvalues(&g, 3);
        for (x, y) in ours.iter().zip(&reference) {
            prop_assert!((x - y).abs() < 1e-9 * (1.0 + y.abs()));
        }
    }
}
