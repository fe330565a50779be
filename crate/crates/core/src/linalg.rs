//! Small dense linear-algebra helpers shared by the filter, smoother and
//! samplers. Everything here works on `nalgebra` dynamic matrices.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative tolerance for positive semi-definiteness: the smallest
/// eigenvalue may dip to `-PSD_TOL * ||M||_F`.
pub const PSD_TOL: f64 = 1e-10;

/// Replaces `m` with `(m + mᵀ) / 2`. The result is exactly symmetric.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn symmetrized(mut m: DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&mut m);
    m
}

/// Cholesky factorisation with a single jitter retry of
/// `1e-12 * tr(P) / n` on the diagonal.
pub fn cholesky(p: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(c) = p.clone().cholesky() {
        return Some(c);
    }
    let n = p.nrows();
    if n == 0 {
        return None;
    }
    let jitter = 1e-12 * p.trace().abs().max(f64::MIN_POSITIVE) / n as f64;
    let mut q = p.clone();
    for i in 0..n {
        q[(i, i)] += jitter;
    }
    q.cholesky()
}

/// Like [`cholesky`] but turns failure into an error naming `what`.
pub fn cholesky_or_err(p: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    cholesky(p).ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
}

/// `log det(A)` from a Cholesky factor of `A`.
pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    chol.l_dirty()
        .diagonal()
        .iter()
        .map(|d| d.ln())
        .sum::<f64>()
        * 2.0
}

/// Inverse of a symmetric positive-definite matrix, symmetrised.
pub fn spd_inverse(p: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Ok(symmetrized(cholesky_or_err(p, what)?.inverse()))
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let eig = SymmetricEigen::new(symmetrized(m.clone()));
    eig.eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Symmetric positive semi-definite within [`PSD_TOL`].
pub fn is_psd(m: &DMatrix<f64>) -> bool {
    if !m.iter().all(|v| v.is_finite()) {
        return false;
    }
    min_eigenvalue(m) >= -PSD_TOL * m.norm()
}

/// Symmetric square root through the eigendecomposition, with negative
/// eigenvalues clamped to zero. Used for sampling with covariances that
/// are only semi-definite.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrized(m.clone()));
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    &eig.eigenvectors * d
}

/// A factor `F` with `F Fᵀ = P`: the lower Cholesky factor when it
/// exists, the eigen square root otherwise.
pub fn covariance_factor(p: &DMatrix<f64>) -> DMatrix<f64> {
    match cholesky(p) {
        Some(c) => c.l(),
        None => psd_sqrt(p),
    }
}

pub fn hstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    out
}

pub fn vstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.ncols(), b.ncols());
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), 0), b.shape()).copy_from(b);
    out
}

pub fn vcat(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.len() + b.len());
    out.rows_mut(0, a.len()).copy_from(a);
    out.rows_mut(a.len(), b.len()).copy_from(b);
    out
}

/// Numerically stable `log Σ exp(v)`. Returns `-inf` for an empty slice or
/// when every entry is `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(
            log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            f64::NEG_INFINITY
        );
        assert_relative_eq!(
            log_sum_exp(&[-1000.0, -1000.0]),
            -1000.0 + 2f64.ln(),
            epsilon = 1e-12
        );
        assert_relative_eq!(log_sum_exp(&[0.0, f64::NEG_INFINITY]), 0.0);
    }

    #[test]
    fn jitter_rescues_borderline_matrix() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(p.clone().cholesky().is_none());
        assert!(cholesky(&p).is_some());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(cholesky(&bad).is_none());
    }

    #[test]
    fn psd_checks() {
        assert!(is_psd(&DMatrix::identity(3, 3)));
        assert!(is_psd(&DMatrix::zeros(2, 2)));
        assert!(!is_psd(&DMatrix::from_row_slice(
            2,
            2,
            &[1.0, 2.0, 2.0, 1.0]
        )));
    }

    #[test]
    fn covariance_factor_reproduces_semidefinite_input() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let f = psd_sqrt(&p);
        assert_relative_eq!(&f * f.transpose(), p, epsilon = 1e-12);
    }
}
