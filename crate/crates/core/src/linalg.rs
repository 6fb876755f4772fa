//! Dense spectral routines shared across modules (LAPACK-backed).

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};

use crate::error::{Error, Result};

/// Eigendecomposition of a symmetric matrix. Eigenvalues ascending,
/// eigenvectors as columns.
pub fn eigh(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    a.eigh(UPLO::Lower)
        .map_err(|e| Error::Linalg(e.to_string()))
}

/// Spectral calculus on a symmetric matrix: Q·f(Λ)·Qᵀ.
pub fn sym_map(a: &Array2<f64>, f: impl Fn(f64) -> f64) -> Result<Array2<f64>> {
    let (vals, vecs) = eigh(a)?;
    Ok(spectral_transform(&vals, &vecs, f))
}

/// Q·f(Λ)·Qᵀ from an already-computed eigendecomposition.
pub fn spectral_transform(
    vals: &Array1<f64>,
    vecs: &Array2<f64>,
    f: impl Fn(f64) -> f64,
) -> Array2<f64> {
    let mut scaled = vecs.clone();
    for (mut col, &v) in scaled.columns_mut().into_iter().zip(vals.iter()) {
        col.mapv_inplace(|x| x * f(v));
    }
    scaled.dot(&vecs.t())
}

/// Largest singular value, computed as sqrt of the top eigenvalue of AᵀA.
/// Works for rectangular inputs.
pub fn spectral_norm(a: &Array2<f64>) -> f64 {
    let (rows, cols) = a.dim();
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    // Form the Gram matrix on the smaller side.
    let gram = if cols <= rows {
        a.t().dot(a)
    } else {
        a.dot(&a.t())
    };
    let (vals, _) = eigh(&gram).expect("symmetric eigensolve failed");
    vals[vals.len() - 1].max(0.0).sqrt()
}
