//! Excitation and convergence diagnostics over sampled traces, plus gain
//! validation.
//!
//! Persistency of excitation is reported as a `(window, margin)` pair and
//! non-square-integrability as a growth-rate fit: finite traces support
//! margins and fits, not verdicts.

use serde::Serialize;
use thiserror::Error;

use crate::gains::EstimatorGains;
use crate::linalg;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("trace has {len} samples but the window needs {needed}")]
    TraceTooShort { len: usize, needed: usize },
    #[error("window must span at least 10 samples, got {0}")]
    WindowTooSmall(usize),
    #[error("trace is not uniformly sampled near t = {0}")]
    NonUniformSampling(f64),
    #[error("sample {index} has {got} entries, expected {expected}")]
    RaggedSample { index: usize, expected: usize, got: usize },
    #[error("empty trace")]
    Empty,
}

/// One reason a set of gains is rejected.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum GainViolation {
    DimensionMismatch { gamma: (usize, usize), b: (usize, usize) },
    NotSymmetric { matrix: &'static str },
    NotPositiveDefinite { matrix: &'static str, min_eigenvalue: f64 },
    RepeatedEigenvalues { lambda_i: f64, lambda_j: f64 },
    OutputSlope { y: f64, value: f64, bound: f64 },
    NonFinite { matrix: &'static str },
}

impl std::fmt::Display for GainViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::DimensionMismatch { gamma, b } => {
                write!(f, "Gamma is {}x{} and B is {}x{}; both must be q x q", gamma.0, gamma.1, b.0, b.1)
            }
            Self::NotSymmetric { matrix } => write!(f, "{matrix} is not symmetric"),
            Self::NotPositiveDefinite { matrix, min_eigenvalue } => {
                write!(f, "{matrix} is not positive definite (min eigenvalue {min_eigenvalue})")
            }
            Self::RepeatedEigenvalues { lambda_i, lambda_j } => {
                write!(f, "B has repeated eigenvalues {lambda_i} and {lambda_j}")
            }
            Self::OutputSlope { y, value, bound } => {
                write!(f, "k'({y}) = {value} is outside (0, {bound}]")
            }
            Self::NonFinite { matrix } => write!(f, "{matrix} has non-finite entries"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid gains: {}", .violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct GainValidationError {
    pub violations: Vec<GainViolation>,
}

/// Relative eigenvalue gap below which `B` counts as having a repeated
/// eigenvalue.
pub const EIGEN_GAP_TOL: f64 = 1e-9;

/// Output values at which `k'` is sampled during validation.
fn slope_grid() -> impl Iterator<Item = f64> {
    std::iter::once(0.0).chain((-6..=3).flat_map(|e| {
        let v = 10f64.powi(e);
        [v, -v]
    }))
}

fn check_spd(name: &'static str, m: &[f64], n: usize, out: &mut Vec<GainViolation>) -> Option<Vec<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        out.push(GainViolation::NonFinite { matrix: name });
        return None;
    }
    let scale = linalg::max_abs(m).max(1.0);
    let symmetric = (0..n).all(|i| (0..n).all(|j| (m[i * n + j] - m[j * n + i]).abs() <= 1e-12 * scale));
    if !symmetric {
        out.push(GainViolation::NotSymmetric { matrix: name });
        return None;
    }
    let eig = linalg::symmetric_eigenvalues(m, n);
    if eig[0] <= 0.0 {
        out.push(GainViolation::NotPositiveDefinite { matrix: name, min_eigenvalue: eig[0] });
    }
    Some(eig)
}

/// Accepts iff `Γ` and `B` are symmetric positive definite, `k'` is
/// positive and within its declared bound on a sample grid, and (for the
/// matrix estimator) the eigenvalues of `B` are pairwise distinct. Every
/// violated condition is reported.
pub fn validate_gains(gains: &EstimatorGains, for_matrix_estimator: bool) -> Result<(), GainValidationError> {
    let mut violations = Vec::new();
    let gs = gains.gamma.shape();
    let bs = gains.b.shape();
    if gs.0 != gs.1 || bs != gs || gs.0 == 0 {
        violations.push(GainViolation::DimensionMismatch { gamma: gs, b: bs });
        return Err(GainValidationError { violations });
    }
    let n = gs.0;
    check_spd("Gamma", &linalg::to_row_major(&gains.gamma), n, &mut violations);
    let b_eig = check_spd("B", &linalg::to_row_major(&gains.b), n, &mut violations);

    if for_matrix_estimator || gains.require_distinct_b_eigs {
        if let Some(eig) = b_eig {
            for i in 0..n {
                for j in i + 1..n {
                    let scale = eig[i].abs().max(eig[j].abs());
                    if (eig[i] - eig[j]).abs() <= EIGEN_GAP_TOL * scale {
                        violations.push(GainViolation::RepeatedEigenvalues { lambda_i: eig[i], lambda_j: eig[j] });
                    }
                }
            }
        }
    }

    let bound = gains.k.dk_bound();
    for y in slope_grid() {
        let value = gains.k.dk(y);
        if !(value > 0.0 && value <= bound * (1.0 + 1e-12)) {
            violations.push(GainViolation::OutputSlope { y, value, bound });
            break;
        }
    }

    if violations.is_empty() {
        Ok(())
    } else {
        Err(GainValidationError { violations })
    }
}

/// Uniformly sampled vector signal, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledTrace {
    pub times: Vec<f64>,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl SampledTrace {
    pub fn from_rows(times: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self, DiagnosticsError> {
        let dim = rows.first().map(|r| r.len()).ok_or(DiagnosticsError::Empty)?;
        let mut values = Vec::with_capacity(rows.len() * dim);
        for (index, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(DiagnosticsError::RaggedSample { index, expected: dim, got: r.len() });
            }
            values.extend_from_slice(r);
        }
        Ok(Self { times, dim, values })
    }

    /// Samples `f` at `t_k = t0 + k·dt`, `k = 0..n`.
    pub fn sample(t0: f64, dt: f64, n: usize, dim: usize, mut f: impl FnMut(f64, &mut [f64])) -> Self {
        let mut values = vec![0.0; n * dim];
        let times: Vec<f64> = (0..n).map(|k| t0 + k as f64 * dt).collect();
        for (k, &t) in times.iter().enumerate() {
            f(t, &mut values[k * dim..(k + 1) * dim]);
        }
        Self { times, dim, values }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    fn uniform_dt(&self) -> Result<f64, DiagnosticsError> {
        if self.len() < 2 {
            return Err(DiagnosticsError::TraceTooShort { len: self.len(), needed: 2 });
        }
        let dt = (self.times[self.len() - 1] - self.times[0]) / (self.len() - 1) as f64;
        for w in self.times.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt {
                return Err(DiagnosticsError::NonUniformSampling(w[0]));
            }
        }
        Ok(dt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeMargin {
    pub window: f64,
    /// `min_s λ_min(Σ_{window at s} φφᵀ·dt) / window`.
    pub margin: f64,
    /// Window start attaining the minimum.
    pub argmin_start: f64,
}

/// PE margin over every window start in the trace.
pub fn pe_margin(trace: &SampledTrace, window: f64) -> Result<PeMargin, DiagnosticsError> {
    pe_margin_from(trace, window, f64::NEG_INFINITY)
}

/// PE margin restricted to windows starting at or after `start_from`.
pub fn pe_margin_from(trace: &SampledTrace, window: f64, start_from: f64) -> Result<PeMargin, DiagnosticsError> {
    let dt = trace.uniform_dt()?;
    let w = (window / dt).round() as usize;
    if w < 10 {
        return Err(DiagnosticsError::WindowTooSmall(w));
    }
    let first = trace.times.iter().position(|&t| t >= start_from - 1e-9 * dt.max(1.0)).unwrap_or(trace.len());
    if trace.len() < first + w {
        return Err(DiagnosticsError::TraceTooShort { len: trace.len().saturating_sub(first), needed: w });
    }
    let q = trace.dim;
    // prefix sums of the upper triangle of φφᵀ
    let tri: Vec<(usize, usize)> = (0..q).flat_map(|i| (i..q).map(move |j| (i, j))).collect();
    let mut prefix = vec![0.0; (trace.len() + 1) * tri.len()];
    for k in 0..trace.len() {
        let row = trace.row(k);
        for (c, &(i, j)) in tri.iter().enumerate() {
            prefix[(k + 1) * tri.len() + c] = prefix[k * tri.len() + c] + row[i] * row[j];
        }
    }
    let span = w as f64 * dt;
    let mut best = PeMargin { window: span, margin: f64::INFINITY, argmin_start: trace.times[first] };
    let mut gram = vec![0.0; q * q];
    for s in first..=trace.len() - w {
        for (c, &(i, j)) in tri.iter().enumerate() {
            let v = (prefix[(s + w) * tri.len() + c] - prefix[s * tri.len() + c]) * dt;
            gram[i * q + j] = v;
            gram[j * q + i] = v;
        }
        let m = linalg::symmetric_eigenvalues(&gram, q)[0].max(0.0) / span;
        if m < best.margin {
            best.margin = m;
            best.argmin_start = trace.times[s];
        }
    }
    Ok(best)
}

/// Least-squares fit `I(T) ≈ slope·ln(1+T) + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogGrowthFit {
    pub slope: f64,
    pub intercept: f64,
    /// `sqrt(SS_res / SS_tot)`; zero for a constant series.
    pub relative_residual: f64,
}

fn least_squares(points: &[(f64, f64)], basis: impl Fn(f64) -> f64) -> LogGrowthFit {
    let n = points.len() as f64;
    if points.len() < 2 {
        return LogGrowthFit { slope: 0.0, intercept: points.first().map_or(0.0, |p| p.1), relative_residual: 0.0 };
    }
    let xs: Vec<f64> = points.iter().map(|p| basis(p.0)).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, p) in xs.iter().zip(points) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (p.1 - my);
        syy += (p.1 - my) * (p.1 - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(points)
        .map(|(x, p)| {
            let r = p.1 - slope * x - intercept;
            r * r
        })
        .sum();
    let relative_residual = if syy > 0.0 { (ss_res / syy).sqrt() } else { 0.0 };
    LogGrowthFit { slope, intercept, relative_residual }
}

pub fn fit_log_growth(points: &[(f64, f64)]) -> LogGrowthFit {
    least_squares(points, |t| (1.0 + t).ln())
}

pub fn fit_linear_growth(points: &[(f64, f64)]) -> LogGrowthFit {
    least_squares(points, |t| t)
}

/// Qualitative growth of a running integral over the fit window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GrowthClass {
    /// Increase over the window is below `1e-6` of the integral.
    Converged,
    /// Logarithmic growth explains the data at least as well as linear.
    Logarithmic,
    /// A linear fit is markedly better than the logarithmic one.
    SuperLogarithmic,
}

pub fn classify_growth(points: &[(f64, f64)]) -> GrowthClass {
    let (Some(first), Some(last)) = (points.first(), points.last()) else {
        return GrowthClass::Converged;
    };
    let rise = last.1 - first.1;
    if rise <= 1e-6 * last.1.abs() || rise <= f64::MIN_POSITIVE {
        return GrowthClass::Converged;
    }
    let log_fit = fit_log_growth(points);
    let lin_fit = fit_linear_growth(points);
    if lin_fit.relative_residual < 0.5 * log_fit.relative_residual {
        GrowthClass::SuperLogarithmic
    } else {
        GrowthClass::Logarithmic
    }
}

/// Running trapezoidal integral of `values` over `times`.
pub fn running_integral(times: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for k in 0..values.len() {
        if k > 0 {
            acc += 0.5 * (times[k] - times[k - 1]) * (values[k] + values[k - 1]);
        }
        out.push(acc);
    }
    out
}

/// Smallest eigenvalue of `MMᵀ`, clamped at zero.
pub fn lambda_m_sq(m: &[f64], q: usize) -> f64 {
    linalg::symmetric_eigenvalues(&linalg::gram(m, q), q)[0].max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcitationReport {
    pub pe_margin: Option<PeMargin>,
    pub times: Vec<f64>,
    /// Running `∫₀ᵗ det(M)²`.
    pub det_l2_integral: Vec<f64>,
    /// Fitted `c` in `I(T) ≈ c·ln(1+T) + const`.
    pub divergence_slope: f64,
    pub divergence_fit: Option<LogGrowthFit>,
    pub growth: Option<GrowthClass>,
    pub lambda_m_sq_trace: Vec<f64>,
    pub sigma_trace: Vec<f64>,
}

impl ExcitationReport {
    pub fn empty() -> Self {
        Self {
            pe_margin: None,
            times: Vec::new(),
            det_l2_integral: Vec::new(),
            divergence_slope: 0.0,
            divergence_fit: None,
            growth: None,
            lambda_m_sq_trace: Vec::new(),
            sigma_trace: Vec::new(),
        }
    }
}

/// Determinant-based excitation report for a trace of square matrices
/// (row-major samples of dimension `q²`).
///
/// The growth fit uses samples with `T` in `fit_range`, or the second half
/// of the trace when `fit_range` is `None`.
pub fn det_l2_report(m_trace: &SampledTrace, fit_range: Option<(f64, f64)>) -> Result<ExcitationReport, DiagnosticsError> {
    if m_trace.is_empty() {
        return Err(DiagnosticsError::Empty);
    }
    let q = (m_trace.dim as f64).sqrt().round() as usize;
    if q * q != m_trace.dim {
        return Err(DiagnosticsError::RaggedSample { index: 0, expected: q * q, got: m_trace.dim });
    }
    let mut det_sq = Vec::with_capacity(m_trace.len());
    let mut lam = Vec::with_capacity(m_trace.len());
    for k in 0..m_trace.len() {
        let m = m_trace.row(k);
        let d = linalg::determinant(m, q);
        det_sq.push(d * d);
        lam.push(lambda_m_sq(m, q));
    }
    let integral = running_integral(&m_trace.times, &det_sq);
    let (lo, hi) = fit_range.unwrap_or_else(|| {
        let t_end = *m_trace.times.last().unwrap();
        (0.5 * t_end, t_end)
    });
    let points: Vec<(f64, f64)> = m_trace
        .times
        .iter()
        .zip(&integral)
        .filter(|(t, _)| **t >= lo - 1e-9 && **t <= hi + 1e-9)
        .map(|(t, i)| (*t, *i))
        .collect();
    let fit = (points.len() >= 2).then(|| fit_log_growth(&points));
    let growth = (points.len() >= 2).then(|| classify_growth(&points));
    Ok(ExcitationReport {
        pe_margin: None,
        times: m_trace.times.clone(),
        det_l2_integral: integral,
        divergence_slope: fit.map_or(0.0, |f| f.slope),
        divergence_fit: fit,
        growth,
        sigma_trace: lam.iter().map(|l| l.min(1.0)).collect(),
        lambda_m_sq_trace: lam,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OvershootMetric {
    /// Largest error norm over the samples after the initial one (the
    /// initial sample itself for a single-sample trace).
    pub peak: f64,
    pub peak_time: f64,
    /// Largest excursion of any error component past zero, opposite to
    /// its initial sign.
    pub component_overshoot: f64,
    /// First recorded time after which the error norm stays below the
    /// threshold; `None` if it never settles within the trace.
    pub settle_time: Option<f64>,
}

/// Overshoot metrics for a trace of error vectors. The norm trace is
/// derived from the components.
pub fn overshoot(trace: &SampledTrace, settle_threshold: f64) -> Result<OvershootMetric, DiagnosticsError> {
    if trace.is_empty() {
        return Err(DiagnosticsError::Empty);
    }
    let norms: Vec<f64> = (0..trace.len()).map(|k| linalg::norm(trace.row(k))).collect();
    let first = usize::from(trace.len() > 1);
    let (mut peak, mut peak_time) = (norms[first], trace.times[first]);
    for (n, t) in norms.iter().zip(&trace.times).skip(first + 1) {
        if *n > peak {
            peak = *n;
            peak_time = *t;
        }
    }
    let initial = trace.row(0).to_vec();
    let mut component_overshoot = 0.0_f64;
    for k in 0..trace.len() {
        for (v, v0) in trace.row(k).iter().zip(&initial) {
            if *v0 != 0.0 {
                component_overshoot = component_overshoot.max(-v0.signum() * v);
            }
        }
    }
    let settle_time = match norms.iter().rposition(|n| *n >= settle_threshold) {
        None => Some(trace.times[0]),
        Some(k) if k + 1 < norms.len() => Some(trace.times[k + 1]),
        Some(_) => None,
    };
    Ok(OvershootMetric { peak, peak_time, component_overshoot, settle_time })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovViolation {
    /// Index of the later sample of the offending pair.
    pub index: usize,
    pub increase: f64,
}

/// Every step where `V` grows by more than `per_step_tol`.
pub fn lyapunov_monitor(v_trace: &[f64], per_step_tol: f64) -> Vec<LyapunovViolation> {
    v_trace
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] - w[0] > per_step_tol)
        .map(|(k, w)| LyapunovViolation { index: k + 1, increase: w[1] - w[0] })
        .collect()
}

/// Streaming form of [`lyapunov_monitor`] for use inside an integration.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LyapunovTracker {
    pub tolerance: f64,
    pub violations: usize,
    pub max_increase: f64,
    pub first_violation: Option<usize>,
    #[serde(skip)]
    prev: Option<f64>,
}

impl LyapunovTracker {
    pub fn new(tolerance: f64) -> Self {
        Self { tolerance, max_increase: f64::NEG_INFINITY, ..Default::default() }
    }

    pub fn push(&mut self, step: usize, v: f64) {
        if let Some(prev) = self.prev {
            let inc = v - prev;
            self.max_increase = self.max_increase.max(inc);
            if inc > self.tolerance {
                self.violations += 1;
                self.first_violation.get_or_insert(step);
            }
        }
        self.prev = Some(v);
    }
}
