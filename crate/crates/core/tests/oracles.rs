//! Independent oracles for the signals, the steady-state filter, the
//! integrator and the filter structure.

use std::sync::Arc;

use approx::assert_relative_eq;
use filtered_observer::gains::EstimatorGains;
use filtered_observer::mat_estimator::MatEstimator;
use filtered_observer::model::make_example_system;
use filtered_observer::ode::{integrate, FlatState, Layout, RhsResult, StepConfig};
use filtered_observer::signals::{d_default, Benchmark};
use filtered_observer::vec_estimator::VecEstimator;

/// `sin t / √(1+t)` written out independently of the library.
fn d_ref(t: f64) -> f64 {
    t.sin() / (1.0 + t).sqrt()
}

#[test]
fn d_derivatives_match_finite_differences() {
    let h = 1e-4;
    for k in 1..=400 {
        let t = 0.125 * k as f64;
        let s = d_default(t).unwrap();
        assert_relative_eq!(s.d, d_ref(t), epsilon = 1e-15);
        let fd1 = (d_ref(t + h) - d_ref(t - h)) / (2.0 * h);
        let fd2 = (d_ref(t + h) - 2.0 * d_ref(t) + d_ref(t - h)) / (h * h);
        assert!((s.d_dot - fd1).abs() < 1e-6, "t = {t}");
        assert!((s.d_ddot - fd2).abs() < 1e-6, "t = {t}");
    }
}

#[test]
fn benchmark_constants_at_origin() {
    // d(0) = 0, ḋ(0) = 1, d̈(0) = −1 by hand; with a = 0.5, b = (0.5, 2):
    // d₁ = (ḋ + 1.5 d)/(−0.75), ḋ₁ = (d̈ + 1.5 ḋ)/(−0.75), φ₂ = ḋ₁ + 0.75 d₁.
    let b = Benchmark::paper_default();
    let d1 = 1.0 / -0.75;
    let d1_dot = (-1.0 + 1.5) / -0.75;
    assert_relative_eq!(b.d1(0.0).unwrap(), -4.0 / 3.0, epsilon = 1e-12);
    assert_relative_eq!(b.d1(0.0).unwrap(), d1, epsilon = 1e-12);
    assert_relative_eq!(b.d1_dot(0.0).unwrap(), d1_dot, epsilon = 1e-12);
    assert_relative_eq!(b.phi2(0.0).unwrap(), -5.0 / 3.0, epsilon = 1e-12);
    assert_relative_eq!(b.det_m_ss(0.0).unwrap(), -8.0 / 9.0, epsilon = 1e-12);
}

#[test]
fn steady_state_solves_the_filter_equation() {
    // Ṁ = −a M (I + B) + φ ιᵀ with f = 1, k' = a.
    let b = Benchmark::paper_default();
    let (a, bs) = (0.5, [0.5, 2.0]);
    let h = 1e-5;
    for k in 1..=200 {
        let t = 0.37 * k as f64;
        let m = b.m_ss(t).unwrap();
        let dm = b.m_ss_dot(t).unwrap();
        let phi = [1.0, b.phi2(t).unwrap()];
        for i in 0..2 {
            for j in 0..2 {
                let rhs = -a * m[i * 2 + j] * (1.0 + bs[j]) + phi[i];
                assert!((dm[i * 2 + j] - rhs).abs() < 1e-12, "t = {t}, ({i},{j})");
            }
        }
        let (mp, mm) = (b.m_ss(t + h).unwrap(), b.m_ss(t - h).unwrap());
        for e in 0..4 {
            assert!(((mp[e] - mm[e]) / (2.0 * h) - dm[e]).abs() < 1e-8);
        }
        // determinant against the closed form −ḋ/(a²(1+b₁)(1+b₂))
        let det_closed = -d_default(t).unwrap().d_dot / (a * a * 1.5 * 3.0);
        assert!((b.det_m_ss(t).unwrap() - det_closed).abs() < 1e-12);
    }
}

fn exp_error(dt: f64) -> f64 {
    let mut l = Layout::new();
    l.push("y", 1);
    let s0 = FlatState::from_values(Arc::new(l), vec![1.0]).unwrap();
    let mut rhs = |_t: f64, s: &[f64], ds: &mut [f64]| -> RhsResult {
        ds[0] = -s[0];
        Ok(())
    };
    let cfg = StepConfig { dt, t_final: 1.0, record_every: 1 };
    let traj = integrate(&mut rhs, &s0, &cfg, &mut []).unwrap();
    (traj.last().unwrap()[0] - (-1.0f64).exp()).abs()
}

/// Observed order from successive halvings of the step.
pub fn measured_rk4_order() -> f64 {
    let e1 = exp_error(0.1);
    let e2 = exp_error(0.05);
    (e1 / e2).log2()
}

#[test]
fn rk4_is_fourth_order() {
    let p = measured_rk4_order();
    assert!((3.7..=4.3).contains(&p), "order {p}");
    assert!((exp_error(0.025).log2() - exp_error(0.0125).log2() - 4.0).abs() < 0.3);
}

#[test]
fn matrix_filter_columns_are_vector_filters() {
    let model = make_example_system();
    let maps = model.known();
    let mat = MatEstimator::new(EstimatorGains::diagonal(1.0, &[0.5, 2.0], 0.5).for_matrix_estimator(), 1.0).unwrap();
    let v1 = VecEstimator::new(EstimatorGains::diagonal(1.0, &[0.5, 0.5], 0.5), 1.0).unwrap();
    let v2 = VecEstimator::new(EstimatorGains::diagonal(1.0, &[2.0, 2.0], 0.5), 1.0).unwrap();
    let mut l = Layout::new();
    let rm = l.push("M", 4);
    let r1 = l.push("mu1", 2);
    let r2 = l.push("mu2", 2);
    let s0 = FlatState::zeros(Arc::new(l));
    let y = 0.3;
    let mut rhs = |t: f64, s: &[f64], ds: &mut [f64]| -> RhsResult {
        let m_dot = mat.m_rhs(&s[rm.clone()], y, t, maps)?;
        ds[rm.clone()].copy_from_slice(&m_dot);
        let d1 = v1.mu_rhs(&s[r1.clone()], y, t, maps)?;
        ds[r1.clone()].copy_from_slice(&d1);
        let d2 = v2.mu_rhs(&s[r2.clone()], y, t, maps)?;
        ds[r2.clone()].copy_from_slice(&d2);
        Ok(())
    };
    let cfg = StepConfig { dt: 1e-3, t_final: 50.0, record_every: 10 };
    let traj = integrate(&mut rhs, &s0, &cfg, &mut []).unwrap();
    let mut worst = 0.0_f64;
    for k in 0..traj.len() {
        let s = traj.state(k);
        let m = &s[0..4];
        let (mu1, mu2) = (&s[4..6], &s[6..8]);
        for i in 0..2 {
            worst = worst.max((m[i * 2] - mu1[i]).abs()).max((m[i * 2 + 1] - mu2[i]).abs());
        }
    }
    assert!(worst <= 1e-9, "{worst}");
}
