//! Small dense linear algebra helpers around `nalgebra`.

use nalgebra::{DMatrix, DVector, Dyn};

use crate::error::{CoreError, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solver for a symmetric positive definite system.
///
/// Gram matrices of one-hot features are diagonal; those are solved
/// elementwise instead of through a Cholesky factorization.
#[derive(Debug, Clone)]
pub enum SpdSolver {
    Diagonal(Vec<f64>),
    Cholesky(nalgebra::Cholesky<f64, Dyn>),
}

impl SpdSolver {
    pub fn new(mat: &DMatrix<f64>) -> Result<Self> {
        let n = mat.nrows();
        if mat.ncols() != n {
            return Err(CoreError::Dimension(format!(
                "expected a square matrix, got {}x{}",
                n,
                mat.ncols()
            )));
        }
        let diagonal = (0..n).all(|j| (0..n).all(|i| i == j || mat[(i, j)] == 0.0));
        if diagonal {
            let mut inv = Vec::with_capacity(n);
            for i in 0..n {
                let d = mat[(i, i)];
                if !(d > 0.0) {
                    return Err(CoreError::Parameter(
                        "matrix is not positive definite".into(),
                    ));
                }
                inv.push(1.0 / d);
            }
            return Ok(SpdSolver::Diagonal(inv));
        }
        nalgebra::Cholesky::new(mat.clone())
            .map(SpdSolver::Cholesky)
            .ok_or_else(|| CoreError::Parameter("matrix is not positive definite".into()))
    }

    pub fn dim(&self) -> usize {
        match self {
            SpdSolver::Diagonal(inv) => inv.len(),
            SpdSolver::Cholesky(c) => c.l_dirty().nrows(),
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        match self {
            SpdSolver::Diagonal(inv) => rhs.iter().zip(inv).map(|(r, d)| r * d).collect(),
            SpdSolver::Cholesky(c) => {
                let b = DVector::from_column_slice(rhs);
                c.solve(&b).as_slice().to_vec()
            }
        }
    }

    /// `qᵀ A⁻¹ q`.
    pub fn inv_quad(&self, q: &[f64]) -> f64 {
        match self {
            SpdSolver::Diagonal(inv) => q.iter().zip(inv).map(|(x, d)| x * x * d).sum(),
            SpdSolver::Cholesky(_) => dot(q, &self.solve(q)).max(0.0),
        }
    }
}

/// Scale `w` onto the ball of radius `bound` if it lies outside.
pub fn project_to_ball(w: &mut [f64], bound: f64) {
    let n = norm(w);
    if n > bound && n > 0.0 {
        let s = bound / n;
        w.iter_mut().for_each(|x| *x *= s);
    }
}
