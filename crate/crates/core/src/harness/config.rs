//! Scenario configuration (JSON, versioned, unknown fields rejected).

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::diagnostics::validate_gains;
use crate::gains::EstimatorGains;
use crate::linalg;
use crate::model::{linear_benchmark_system, SystemModel};
use crate::ode::StepConfig;
use crate::signals::{Benchmark, BenchmarkSignalParams};

use super::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;

/// Upper limit on `dt` times the fastest error-dynamics rate estimate.
/// Classical RK4 is stable on the negative real axis up to about 2.785.
pub const STABILITY_LIMIT: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    /// Vector-filter estimator with `B = b₁ I`.
    #[serde(rename = "vec_b1")]
    VecB1,
    /// Vector-filter estimator with `B = b₂ I`.
    #[serde(rename = "vec_b2")]
    VecB2,
    /// Matrix-filter estimator with `B = diag(b₁, b₂)`.
    #[serde(rename = "mat_B")]
    MatB,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 3] = [Self::VecB1, Self::VecB2, Self::MatB];

    pub fn name(self) -> &'static str {
        match self {
            Self::VecB1 => "vec_b1",
            Self::VecB2 => "vec_b2",
            Self::MatB => "mat_B",
        }
    }

    pub fn is_matrix(self) -> bool {
        matches!(self, Self::MatB)
    }
}

/// Linear plant with the benchmark regressor:
/// `ẏ = f·x + g0·y`, `ẋ = g1·y + θ₁ + φ₂(t)θ₂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearPlantSpec {
    pub f: f64,
    pub g0: f64,
    pub g1: f64,
    pub theta: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SystemSpec {
    /// `f = 1`, `g₀ = g₁ = −y`, `θ = (−1, 1)`.
    #[default]
    Example,
    Custom(LinearPlantSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedM0 {
    Zero,
    Identity,
}

/// Initial filter matrix: `"zero"`, `"identity"`, or explicit rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum M0Spec {
    Named(NamedM0),
    Rows(Vec<Vec<f64>>),
}

impl Default for M0Spec {
    fn default() -> Self {
        Self::Named(NamedM0::Zero)
    }
}

impl M0Spec {
    pub fn to_row_major(&self, q: usize) -> Result<Vec<f64>, HarnessError> {
        match self {
            Self::Named(NamedM0::Zero) => Ok(vec![0.0; q * q]),
            Self::Named(NamedM0::Identity) => {
                let mut m = vec![0.0; q * q];
                for i in 0..q {
                    m[i * q + i] = 1.0;
                }
                Ok(m)
            }
            Self::Rows(rows) => {
                if rows.len() != q || rows.iter().any(|r| r.len() != q) {
                    return Err(HarnessError::config("initial_conditions.m0", format!("must be {q}x{q}")));
                }
                Ok(rows.iter().flatten().copied().collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct InitialConditions {
    #[serde(default)]
    pub y: f64,
    #[serde(default)]
    pub x: f64,
    #[serde(default)]
    pub m0: M0Spec,
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}
fn default_estimators() -> Vec<EstimatorKind> {
    EstimatorKind::ALL.to_vec()
}
fn default_a() -> f64 {
    0.5
}
fn default_b1() -> f64 {
    0.5
}
fn default_b2() -> f64 {
    2.0
}
fn default_gamma() -> f64 {
    1.0
}
fn default_dt() -> f64 {
    1e-3
}
fn default_t_final() -> f64 {
    300.0
}
fn default_record_every() -> usize {
    100
}
fn default_settle() -> f64 {
    0.1
}
fn default_lyap_tol() -> f64 {
    1e-8
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(default)]
    pub system: SystemSpec,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default = "default_a")]
    pub a: f64,
    #[serde(default = "default_b1")]
    pub b1: f64,
    #[serde(default = "default_b2")]
    pub b2: f64,
    /// `Γ = γ·I`.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default)]
    pub initial_conditions: InitialConditions,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub emit_svg: bool,
    /// Log-scale y axis for the `|det M|` panel.
    #[serde(default)]
    pub log_det_axis: bool,
    /// Error-norm threshold for the settle time.
    #[serde(default = "default_settle")]
    pub settle_threshold: f64,
    /// Allowed per-step increase of the Lyapunov function.
    #[serde(default = "default_lyap_tol")]
    pub lyapunov_tol: f64,
    /// Also integrate the closed-form error dynamics next to the estimators.
    #[serde(default)]
    pub error_oracle: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::config("config", e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn step_config(&self) -> StepConfig {
        StepConfig { dt: self.dt, t_final: self.t_final, record_every: self.record_every }
    }

    pub fn signal_params(&self) -> BenchmarkSignalParams {
        BenchmarkSignalParams { a: self.a, b1: self.b1, b2: self.b2 }
    }

    /// Estimators in canonical order without duplicates.
    pub fn estimator_set(&self) -> Vec<EstimatorKind> {
        let mut v = self.estimators.clone();
        v.sort();
        v.dedup();
        v
    }

    pub fn gains_for(&self, kind: EstimatorKind) -> EstimatorGains {
        let b: Vec<f64> = match kind {
            EstimatorKind::VecB1 => vec![self.b1, self.b1],
            EstimatorKind::VecB2 => vec![self.b2, self.b2],
            EstimatorKind::MatB => vec![self.b1, self.b2],
        };
        let g = EstimatorGains::diagonal(self.gamma, &b, self.a);
        if kind.is_matrix() {
            g.for_matrix_estimator()
        } else {
            g
        }
    }

    pub fn build_model(&self, bench: Benchmark) -> Result<SystemModel, HarnessError> {
        let spec = match &self.system {
            SystemSpec::Example => LinearPlantSpec { f: 1.0, g0: -1.0, g1: -1.0, theta: [-1.0, 1.0] },
            SystemSpec::Custom(s) => s.clone(),
        };
        linear_benchmark_system(spec.f, spec.g0, spec.g1, spec.theta, bench)
            .map_err(|e| HarnessError::config("system", e.to_string()))
    }

    /// Field-level checks, gain validation, and the explicit-integrator
    /// stability screen. Returns the stiffness estimate on success.
    pub fn validate(&self) -> Result<f64, HarnessError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(HarnessError::config(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        for (name, v) in [("a", self.a), ("b1", self.b1), ("b2", self.b2), ("gamma", self.gamma)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(HarnessError::config(name, format!("must be positive, got {v}")));
            }
        }
        if self.b1 == self.b2 {
            return Err(HarnessError::config("b1", "b1 must differ from b2 for the benchmark regressor"));
        }
        if self.estimators.is_empty() {
            return Err(HarnessError::config("estimators", "at least one estimator is required"));
        }
        if !(self.settle_threshold.is_finite() && self.settle_threshold > 0.0) {
            return Err(HarnessError::config("settle_threshold", "must be positive"));
        }
        if !(self.lyapunov_tol.is_finite() && self.lyapunov_tol >= 0.0) {
            return Err(HarnessError::config("lyapunov_tol", "must be non-negative"));
        }
        self.step_config()
            .validate()
            .map_err(|e| HarnessError::config("dt/t_final/record_every", e.to_string()))?;
        if let SystemSpec::Custom(s) = &self.system {
            if !(s.f.is_finite() && s.f != 0.0) {
                return Err(HarnessError::config("system.custom.f", "must be finite and nonzero"));
            }
        }
        let ic = &self.initial_conditions;
        if !(ic.y.is_finite() && ic.x.is_finite()) {
            return Err(HarnessError::config("initial_conditions", "y and x must be finite"));
        }
        let m0 = self.initial_conditions.m0.to_row_major(2)?;
        for kind in self.estimator_set() {
            validate_gains(&self.gains_for(kind), kind.is_matrix())
                .map_err(|e| HarnessError::config(format!("estimators.{}", kind.name()), e.to_string()))?;
        }
        let stiffness = self.stiffness(&m0)?;
        if stiffness > STABILITY_LIMIT {
            return Err(HarnessError::config(
                "dt",
                format!(
                    "dt = {} is too large for gamma = {}: stiffness estimate {stiffness:.3} exceeds {STABILITY_LIMIT}",
                    self.dt, self.gamma
                ),
            ));
        }
        Ok(stiffness)
    }

    /// `dt · λ_max(Γ) · |f| · k' · λ_max(B) · m̄²`, where `m̄` bounds the
    /// filter state through its input-to-state estimate
    /// `‖M(0)‖_F + √q · sup‖φ‖ / (|f| k' (1 + λ_min(B)))`.
    pub fn stiffness(&self, m0: &[f64]) -> Result<f64, HarnessError> {
        let bench = Benchmark::new(self.signal_params(), std::sync::Arc::new(crate::signals::DecayingSine))
            .map_err(|e| HarnessError::config("a/b1/b2", e.to_string()))?;
        let model = self.build_model(bench.clone())?;
        let f_abs = model.known().abs_f(0.0, 0.0).map_err(|e| HarnessError::config("system", e.to_string()))?;
        let n = (self.t_final / 0.01).ceil() as usize;
        let mut phi_sup = 0.0_f64;
        for k in 0..=n {
            let t = (k as f64 * 0.01).min(self.t_final);
            let p2 = bench.phi2(t).map_err(|e| HarnessError::config("signal", e.to_string()))?;
            phi_sup = phi_sup.max((1.0 + p2 * p2).sqrt());
        }
        let rate = f_abs * self.a;
        let mut worst = 0.0_f64;
        for kind in self.estimator_set() {
            let g = self.gains_for(kind);
            let b_eig = linalg::symmetric_eigenvalues(&linalg::to_row_major(&g.b), 2);
            let start = if kind.is_matrix() { linalg::norm(m0) } else { 0.0 };
            let m_bar = start + (2.0_f64).sqrt() * phi_sup / (rate * (1.0 + b_eig[0]));
            let fast = self.gamma * rate * b_eig[1] * m_bar * m_bar;
            let filter = rate * (1.0 + b_eig[1]);
            worst = worst.max(fast.max(filter));
        }
        Ok(self.dt * worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_benchmark() {
        let c = ScenarioConfig::default();
        assert_eq!(c.schema_version, 1);
        assert_eq!((c.a, c.b1, c.b2, c.gamma), (0.5, 0.5, 2.0, 1.0));
        assert_eq!((c.dt, c.t_final), (1e-3, 300.0));
        assert_eq!(c.estimator_set(), EstimatorKind::ALL.to_vec());
        assert!(c.validate().is_ok());
    }

    #[test]
    fn unknown_fields_rejected() {
        let err = ScenarioConfig::from_json(r#"{"schema_version": 1, "gama": 3}"#).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("gama"));
    }

    #[test]
    fn parses_full_document() {
        let c = ScenarioConfig::from_json(
            r#"{
                "schema_version": 1,
                "system": {"custom": {"f": 2.0, "g0": -1.0, "g1": 0.0, "theta": [0.5, -2.0]}},
                "estimators": ["mat_B", "vec_b1"],
                "gamma": 10,
                "initial_conditions": {"y": 0.1, "m0": "identity"}
            }"#,
        )
        .unwrap();
        assert_eq!(c.estimator_set(), vec![EstimatorKind::VecB1, EstimatorKind::MatB]);
        assert_eq!(c.initial_conditions.m0, M0Spec::Named(NamedM0::Identity));
        assert!(c.validate().is_ok());
        let echo = ScenarioConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(echo, c);
    }

    #[test]
    fn explicit_m0_rows() {
        let c = ScenarioConfig::from_json(r#"{"initial_conditions": {"m0": [[1, 0], [0, 2]]}}"#).unwrap();
        assert_eq!(c.initial_conditions.m0.to_row_major(2).unwrap(), vec![1.0, 0.0, 0.0, 2.0]);
        let c = ScenarioConfig::from_json(r#"{"initial_conditions": {"m0": [[1, 0]]}}"#).unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn equal_b_rejected_with_field_name() {
        let c = ScenarioConfig { b2: 0.5, ..Default::default() };
        let err = c.validate().unwrap_err();
        assert!(err.to_string().contains("b1"));
    }

    #[test]
    fn stiff_gamma_refused_at_coarse_dt() {
        let c = ScenarioConfig { gamma: 1e4, ..Default::default() };
        let err = c.validate().unwrap_err();
        assert!(err.to_string().contains("stiffness"));
        let c = ScenarioConfig { gamma: 1e4, dt: 1e-5, estimators: vec![EstimatorKind::MatB], ..Default::default() };
        assert!(c.validate().is_ok());
        let c = ScenarioConfig { gamma: 100.0, dt: 1e-4, ..Default::default() };
        assert!(c.validate().is_ok());
    }

    #[test]
    fn bad_schema_version() {
        let c = ScenarioConfig { schema_version: 7, ..Default::default() };
        assert!(c.validate().unwrap_err().to_string().contains("schema_version"));
    }
}
