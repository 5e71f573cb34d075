//! Dense complex linear algebra shared by all modules.
//!
//! Thin layer over nalgebra: Hermitian eigendecomposition with a guaranteed
//! ascending eigenvalue order, the eigenbasis matrix exponential used by the
//! evolution oracle, and the state/operator distance measures.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{QomgError, Result};

/// Max elementwise |M - M^dagger|.
pub fn hermiticity_defect(m: &DMatrix<C64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues sorted ascending.
///
/// Returns (eigenvalues, eigenvectors); column k of the matrix is the
/// eigenvector of eigenvalue k. nalgebra does not promise an ordering, so the
/// columns are permuted explicitly.
pub fn hermitian_eigen(m: &DMatrix<C64>) -> Result<(DVector<f64>, DMatrix<C64>)> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(QomgError::DimensionMismatch(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let sym = nalgebra::SymmetricEigen::try_new(m.clone(), f64::EPSILON, 0)
        .ok_or(QomgError::EigenFailure { dim: n })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sym.eigenvalues[a].total_cmp(&sym.eigenvalues[b]));
    let vals = DVector::from_fn(n, |i, _| sym.eigenvalues[order[i]]);
    let mut vecs = DMatrix::zeros(n, n);
    for (k, &src) in order.iter().enumerate() {
        vecs.set_column(k, &sym.eigenvectors.column(src));
    }
    Ok((vals, vecs))
}

/// exp(scale * H) for Hermitian H via the eigenbasis; exact up to the
/// eigensolver, the reference path for evolution cross-checks.
pub fn expm_hermitian(h: &DMatrix<C64>, scale: C64) -> Result<DMatrix<C64>> {
    let (vals, vecs) = hermitian_eigen(h)?;
    let n = h.nrows();
    let mut scaled = vecs.clone();
    for k in 0..n {
        let phase = (scale * vals[k]).exp();
        for i in 0..n {
            scaled[(i, k)] *= phase;
        }
    }
    Ok(&scaled * vecs.adjoint())
}

/// Frobenius norm of A - B.
pub fn frobenius_distance(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    (a - b).norm()
}

/// Trace distance (1/2)tr|A - B| for Hermitian A, B.
pub fn trace_distance(a: &DMatrix<C64>, b: &DMatrix<C64>) -> Result<f64> {
    let (vals, _) = hermitian_eigen(&(a - b))?;
    Ok(0.5 * vals.iter().map(|v| v.abs()).sum::<f64>())
}

/// Uhlmann fidelity (tr sqrt(sqrt(a) b sqrt(a)))^2 for density matrices.
pub fn uhlmann_fidelity(a: &DMatrix<C64>, b: &DMatrix<C64>) -> Result<f64> {
    let ra = psd_sqrt(a)?;
    let inner = &ra * b * &ra;
    let (vals, _) = hermitian_eigen(&inner)?;
    let root_sum: f64 = vals.iter().map(|&v| v.max(0.0).sqrt()).sum();
    Ok(root_sum * root_sum)
}

/// Hermitian square root with negative roundoff eigenvalues clamped to zero.
fn psd_sqrt(m: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let (vals, vecs) = hermitian_eigen(m)?;
    let n = m.nrows();
    let mut scaled = vecs.clone();
    for k in 0..n {
        let r = vals[k].max(0.0).sqrt();
        for i in 0..n {
            scaled[(i, k)] *= C64::new(r, 0.0);
        }
    }
    Ok(&scaled * vecs.adjoint())
}

/// Kronecker product with the left factor index varying slowest.
pub fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    let mut out = DMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Kronecker product of column vectors, left factor slowest.
pub fn kron_vec(a: &DVector<C64>, b: &DVector<C64>) -> DVector<C64> {
    let mut out = DVector::zeros(a.len() * b.len());
    for i in 0..a.len() {
        for k in 0..b.len() {
            out[i * b.len() + k] = a[i] * b[k];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn eigen_sorts_ascending_and_reconstructs() {
        let m = DMatrix::from_row_slice(3, 3, &[
            c(2.0, 0.0), c(0.0, -1.0), c(0.5, 0.0),
            c(0.0, 1.0), c(-1.0, 0.0), c(0.0, 0.0),
            c(0.5, 0.0), c(0.0, 0.0), c(0.7, 0.0),
        ]);
        let (vals, vecs) = hermitian_eigen(&m).unwrap();
        for i in 1..3 {
            assert!(vals[i] >= vals[i - 1]);
        }
        let mut rebuilt = DMatrix::zeros(3, 3);
        for k in 0..3 {
            let v = vecs.column(k);
            rebuilt += DMatrix::from_fn(3, 3, |i, j| v[i] * v[j].conj() * vals[k]);
        }
        assert!(frobenius_distance(&rebuilt, &m) < 1e-12);
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let z = DMatrix::zeros(4, 4);
        let e = expm_hermitian(&z, c(0.0, -1.0)).unwrap();
        assert!(frobenius_distance(&e, &DMatrix::identity(4, 4)) < 1e-14);
    }

    #[test]
    fn expm_is_unitary_for_imaginary_scale() {
        let m = DMatrix::from_row_slice(2, 2, &[
            c(1.0, 0.0), c(0.3, 0.4),
            c(0.3, -0.4), c(-0.5, 0.0),
        ]);
        let u = expm_hermitian(&m, c(0.0, -2.7)).unwrap();
        let id = &u * u.adjoint();
        assert!(frobenius_distance(&id, &DMatrix::identity(2, 2)) < 1e-13);
    }

    #[test]
    fn trace_distance_of_orthogonal_projectors_is_one() {
        let p0 = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let p1 = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert_abs_diff_eq!(trace_distance(&p0, &p1).unwrap(), 1.0, epsilon = 1e-13);
    }

    #[test]
    fn uhlmann_matches_overlap_for_pure_states() {
        // |+><+| vs |0><0| -> fidelity 1/2
        let plus = DMatrix::from_row_slice(2, 2, &[
            c(0.5, 0.0), c(0.5, 0.0),
            c(0.5, 0.0), c(0.5, 0.0),
        ]);
        let zero = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert_abs_diff_eq!(uhlmann_fidelity(&plus, &zero).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn kron_trace_is_product_of_traces() {
        let a = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.5), c(0.0, 0.0), c(2.0, 0.0), c(3.0, -1.0)]);
        let b = DMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(1.0, 0.0), c(0.0, 2.0), c(-1.0, 0.0)]);
        let k = kron(&a, &b);
        let tk: C64 = (0..4).map(|i| k[(i, i)]).sum();
        let ta: C64 = a[(0, 0)] + a[(1, 1)];
        let tb: C64 = b[(0, 0)] + b[(1, 1)];
        assert!((tk - ta * tb).norm() < 1e-14);
    }
}
