//! Small dense eigen-solvers used across the crate.
//!
//! Matrices here are tiny (a handful of converters, twice that for the
//! state-space oracle), so everything is dense and allocation-happy.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

const SCHUR_EPS: f64 = 1e-15;
const SCHUR_MAX_ITER: usize = 10_000;

/// Eigenpairs of a general complex matrix.
///
/// `vectors` holds unit 2-norm right eigenvectors as columns, in the same
/// order as `values`.
#[derive(Debug, Clone)]
pub struct ComplexEigen {
    pub values: Vec<Complex64>,
    pub vectors: DMatrix<Complex64>,
}

impl ComplexEigen {
    pub fn vector(&self, k: usize) -> DVector<Complex64> {
        self.vectors.column(k).into_owned()
    }
}

/// Right eigenpairs via complex Schur form and triangular back-substitution.
pub fn complex_eig(m: &DMatrix<Complex64>) -> Result<ComplexEigen> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "complex_eig needs a square matrix");
    if n == 0 {
        return Ok(ComplexEigen {
            values: Vec::new(),
            vectors: DMatrix::zeros(0, 0),
        });
    }
    if n == 1 {
        return Ok(ComplexEigen {
            values: vec![m[(0, 0)]],
            vectors: DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)),
        });
    }

    let scale = m.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
    if scale == 0.0 {
        return Ok(ComplexEigen {
            values: vec![Complex64::new(0.0, 0.0); n],
            vectors: DMatrix::identity(n, n),
        });
    }

    let schur = Schur::try_new(m.clone(), SCHUR_EPS, SCHUR_MAX_ITER).ok_or(Error::EigenFailed)?;
    let (q, t) = schur.unpack();

    // The complex Schur factor is upper triangular; anything left below the
    // diagonal is round-off.
    for j in 0..n {
        for i in (j + 1)..n {
            if t[(i, j)].norm() > 1e-9 * scale {
                return Err(Error::EigenFailed);
            }
        }
    }

    let values: Vec<Complex64> = (0..n).map(|k| t[(k, k)]).collect();
    let small = f64::EPSILON * scale * n as f64;
    let mut vectors = DMatrix::<Complex64>::zeros(n, n);
    for k in 0..n {
        let lambda = values[k];
        let mut y = DVector::<Complex64>::zeros(n);
        y[k] = Complex64::new(1.0, 0.0);
        for j in (0..k).rev() {
            let mut acc = Complex64::new(0.0, 0.0);
            for l in (j + 1)..=k {
                acc += t[(j, l)] * y[l];
            }
            let mut denom = t[(j, j)] - lambda;
            if denom.norm() < small {
                denom = Complex64::new(small, 0.0);
            }
            y[j] = -acc / denom;
        }
        let mut x = &q * y;
        let norm = x.norm();
        x /= Complex64::new(norm, 0.0);
        vectors.set_column(k, &x);
    }
    Ok(ComplexEigen { values, vectors })
}

/// Eigenvalues of a real square matrix (complex, unordered).
pub fn real_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(a.clone(), SCHUR_EPS, SCHUR_MAX_ITER).ok_or(Error::EigenFailed)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Symmetric eigendecomposition sorted by ascending eigenvalue.
pub fn symmetric_eigen(b: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(b.clone());
    let n = b.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// `|a^H b|` for unit vectors, the branch-matching similarity.
pub fn overlap(a: &DVector<Complex64>, b: &DVector<Complex64>) -> f64 {
    a.dotc(b).norm()
}

/// Rotates `v` by a unit phase so that `ref^H v` is real and nonnegative.
pub fn align_phase(v: &mut DVector<Complex64>, reference: &DVector<Complex64>) {
    let d = reference.dotc(v);
    if d.norm() > 0.0 {
        let phase = d.conj() / d.norm();
        *v *= phase;
    }
}

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}

/// 2-norm condition number from singular values; infinite when singular.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0_f64, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
