//! Estimator tuning: `Γ`, `B`, and the output map `k(y)`.

use std::sync::Arc;

use nalgebra::DMatrix;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Strictly increasing output map `k(y)` supplied together with its
/// derivative and a bound on that derivative.
#[derive(Clone)]
pub struct OutputMap {
    k: ScalarFn,
    dk: ScalarFn,
    dk_bound: f64,
}

impl std::fmt::Debug for OutputMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OutputMap").field("dk_bound", &self.dk_bound).finish_non_exhaustive()
    }
}

impl OutputMap {
    pub fn new(k: ScalarFn, dk: ScalarFn, dk_bound: f64) -> Self {
        Self { k, dk, dk_bound }
    }

    /// `k(y) = a·y`.
    pub fn linear(a: f64) -> Self {
        Self {
            k: Arc::new(move |y| a * y),
            dk: Arc::new(move |_| a),
            dk_bound: a,
        }
    }

    #[inline]
    pub fn k(&self, y: f64) -> f64 {
        (self.k)(y)
    }

    #[inline]
    pub fn dk(&self, y: f64) -> f64 {
        (self.dk)(y)
    }

    pub fn dk_bound(&self) -> f64 {
        self.dk_bound
    }
}

#[derive(Clone, Debug)]
pub struct EstimatorGains {
    pub gamma: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub k: OutputMap,
    /// Set for the matrix estimator, which needs pairwise-distinct
    /// eigenvalues of `B`.
    pub require_distinct_b_eigs: bool,
}

impl EstimatorGains {
    pub fn new(gamma: DMatrix<f64>, b: DMatrix<f64>, k: OutputMap) -> Self {
        Self { gamma, b, k, require_distinct_b_eigs: false }
    }

    /// `Γ = γ·I`, `B = diag(b)`, `k(y) = a·y`.
    pub fn diagonal(gamma: f64, b: &[f64], a: f64) -> Self {
        let q = b.len();
        Self::new(
            DMatrix::identity(q, q) * gamma,
            DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(b)),
            OutputMap::linear(a),
        )
    }

    pub fn q(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn for_matrix_estimator(mut self) -> Self {
        self.require_distinct_b_eigs = true;
        self
    }
}
