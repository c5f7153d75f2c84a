//! Dense complex linear algebra shared by the solvers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Largest condition number accepted before a matrix is treated as singular.
pub const CONDITION_CAP: f64 = 1e12;

/// Components below this magnitude are skipped when fixing eigenvector phases.
const PHASE_THRESHOLD: f64 = 1e-12;

#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.norm()))
}

pub fn max_abs_real(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Max-abs entry of `m - m^dagger`.
pub fn hermiticity_violation(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// Multiplies the vector by a phase so that its first non-negligible entry is
/// real and positive.
pub fn fix_phase(v: &mut CVector) {
    if let Some(first) = v.iter().copied().find(|c| c.norm() > PHASE_THRESHOLD) {
        let phase = first.conj() / first.norm();
        v.iter_mut().for_each(|x| *x *= phase);
    }
}

/// Eigen-decomposition of a Hermitian matrix.
///
/// Eigenvalues are sorted ascending (stable with respect to the solver order)
/// and every eigenvector is phase-fixed with [`fix_phase`].
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Eigenvectors stored as columns, in the order of `values`.
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn new(m: &CMatrix) -> Self {
        let n = m.nrows();
        if n == 0 {
            return HermitianEigen {
                values: Vec::new(),
                vectors: CMatrix::zeros(0, 0),
            };
        }
        let sym = (m + m.adjoint()).scale(0.5);
        let eig = SymmetricEigen::new(sym);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let mut vectors = CMatrix::zeros(n, n);
        for (col, &k) in order.iter().enumerate() {
            let mut v: CVector = eig.eigenvectors.column(k).into_owned();
            fix_phase(&mut v);
            vectors.set_column(col, &v);
        }
        HermitianEigen { values, vectors }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `V diag(f(lambda)) V^dagger`.
    pub fn apply_function<F: Fn(f64) -> Complex64>(&self, f: F) -> CMatrix {
        let n = self.dim();
        let mut scaled = self.vectors.clone();
        for (k, &lambda) in self.values.iter().enumerate() {
            let fk = f(lambda);
            scaled.column_mut(k).iter_mut().for_each(|x| *x *= fk);
        }
        if n == 0 {
            return scaled;
        }
        scaled * self.vectors.adjoint()
    }
}

/// `exp(factor * H)` for Hermitian `H`, computed through its eigen-decomposition.
pub fn exp_hermitian(h: &CMatrix, factor: Complex64) -> CMatrix {
    HermitianEigen::new(h).apply_function(|lambda| (factor * lambda).exp())
}

pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    m.clone().singular_values().iter().copied().collect()
}

/// 2-norm condition number estimate (ratio of extreme singular values).
pub fn condition_number(m: &CMatrix) -> f64 {
    let sv = singular_values(m);
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse of `m`, refusing matrices whose condition estimate exceeds the cap.
pub fn checked_inverse(m: &CMatrix) -> Result<CMatrix> {
    let condition = condition_number(m);
    if !(condition <= CONDITION_CAP) {
        return Err(Error::Singular { condition });
    }
    m.clone()
        .try_inverse()
        .ok_or(Error::Singular { condition })
}

/// Solves `m X = rhs` by LU factorization.
pub fn solve(m: &CMatrix, rhs: &CMatrix) -> Result<CMatrix> {
    if m.nrows() == 0 {
        return Ok(CMatrix::zeros(0, rhs.ncols()));
    }
    m.clone().lu().solve(rhs).ok_or(Error::Singular {
        condition: f64::INFINITY,
    })
}

pub fn real_to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| c64(x, 0.0))
}

/// Frobenius norm.
pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// `sum_{ab} x[a,b] * y[b,a]`, i.e. `Tr(x y)` without forming the product.
pub fn trace_of_product(x: &CMatrix, y: &CMatrix) -> Complex64 {
    debug_assert_eq!(x.ncols(), y.nrows());
    debug_assert_eq!(x.nrows(), y.ncols());
    let mut acc = Complex64::new(0.0, 0.0);
    for a in 0..x.nrows() {
        for b in 0..x.ncols() {
            acc += x[(a, b)] * y[(b, a)];
        }
    }
    acc
}
