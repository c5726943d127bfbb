//! ODE system abstraction consumed by the quantized-state solvers.

use nalgebra::{DMatrix, DVector};

/// A system `dx/dt = f(q, u, t)` evaluated component-wise along quantized
/// trajectories. `q` holds the quantized states and `u` the input models,
/// both already evaluated at `t` by the caller.
///
/// Implementations must be pure with respect to solver state: the same
/// arguments always produce the same derivative.
pub trait OdeModel {
    fn dim(&self) -> usize;

    fn num_inputs(&self) -> usize {
        0
    }

    fn initial_state(&self) -> Vec<f64>;

    /// Derivative of component `j`.
    fn derivative(&self, j: usize, q: &[f64], u: &[f64], t: f64) -> f64;

    /// Components whose derivative reads state `j` (dense by default).
    fn dependents_of_state(&self, j: usize) -> Vec<usize> {
        let _ = j;
        (0..self.dim()).collect()
    }

    /// Components whose derivative reads input `k` (dense by default).
    fn dependents_of_input(&self, k: usize) -> Vec<usize> {
        let _ = k;
        (0..self.dim()).collect()
    }
}

/// Dense linear system `dx/dt = A x + B u`.
#[derive(Clone, Debug)]
pub struct LinearOde {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub x0: DVector<f64>,
}

impl LinearOde {
    pub fn autonomous(a: DMatrix<f64>, x0: DVector<f64>) -> Self {
        let n = a.nrows();
        assert_eq!(a.ncols(), n);
        assert_eq!(x0.len(), n);
        LinearOde { a, b: DMatrix::zeros(n, 0), x0 }
    }

    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, x0: DVector<f64>) -> Self {
        assert_eq!(a.nrows(), a.ncols());
        assert_eq!(b.nrows(), a.nrows());
        assert_eq!(x0.len(), a.nrows());
        LinearOde { a, b, x0 }
    }

    /// The scalar exponential-decay problem `dx/dt = -x`, `x(0) = 1`.
    pub fn exponential_decay() -> Self {
        LinearOde::autonomous(DMatrix::from_element(1, 1, -1.0), DVector::from_element(1, 1.0))
    }
}

impl OdeModel for LinearOde {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn num_inputs(&self) -> usize {
        self.b.ncols()
    }

    fn initial_state(&self) -> Vec<f64> {
        self.x0.iter().copied().collect()
    }

    fn derivative(&self, j: usize, q: &[f64], u: &[f64], _t: f64) -> f64 {
        let mut acc = 0.0;
        for (k, &qk) in q.iter().enumerate() {
            acc += self.a[(j, k)] * qk;
        }
        for (k, &uk) in u.iter().enumerate() {
            acc += self.b[(j, k)] * uk;
        }
        acc
    }

    fn dependents_of_state(&self, j: usize) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.a[(i, j)] != 0.0).collect()
    }

    fn dependents_of_input(&self, k: usize) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.b[(i, k)] != 0.0).collect()
    }
}
