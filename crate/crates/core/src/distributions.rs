//! Densities and exact samplers for the distributions the sampler touches:
//! multivariate Normal, Matrix-Normal, Inverse-Wishart, Dirichlet (through
//! Gamma draws) and Categorical.
//!
//! Every sampler consumes a caller-owned generator, so a fixed seed and a
//! fixed draw order reproduce the same output.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};
use rand_distr::{Distribution, Gamma, Open01, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{self, cholesky_or_err, symmetrize, symmetrized};

/// `log N(x | mean, cov)`, evaluated through a Cholesky factor of `cov`.
pub fn log_mvn_pdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    if x.len() != mean.len() || cov.shape() != (x.len(), x.len()) {
        return Err(Error::Dimension(format!(
            "log_mvn_pdf: x has {} entries, mean {}, covariance {:?}",
            x.len(),
            mean.len(),
            cov.shape()
        )));
    }
    let chol = cholesky_or_err(cov, "normal covariance")?;
    Ok(log_mvn_pdf_chol(&(x - mean), &chol))
}

/// `log N(r | 0, P)` for a residual `r` and a factorised `P`.
pub(crate) fn log_mvn_pdf_chol(
    residual: &DVector<f64>,
    chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
) -> f64 {
    let n = residual.len() as f64;
    let z = chol
        .l_dirty()
        .solve_lower_triangular(residual)
        .expect("cholesky factor has a nonzero diagonal");
    -0.5 * (n * (2.0 * PI).ln() + linalg::log_det(chol) + z.norm_squared())
}

pub fn standard_normal_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub fn standard_normal_matrix<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Draws from `N(mean, cov)`. Semi-definite covariances are accepted; they
/// fall back to an eigen square root when Cholesky fails.
pub fn sample_mvn<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    rng: &mut R,
) -> DVector<f64> {
    let factor = linalg::covariance_factor(cov);
    mean + factor * standard_normal_vector(mean.len(), rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixNormalParams {
    pub mean: DMatrix<f64>,
    /// Row covariance, `n x n`.
    pub row_cov: DMatrix<f64>,
    /// Column covariance, `p x p`.
    pub col_cov: DMatrix<f64>,
}

impl MatrixNormalParams {
    pub fn new(mean: DMatrix<f64>, row_cov: DMatrix<f64>, col_cov: DMatrix<f64>) -> Result<Self> {
        let (n, p) = mean.shape();
        if row_cov.shape() != (n, n) || col_cov.shape() != (p, p) {
            return Err(Error::Dimension(format!(
                "matrix normal: mean {:?}, row covariance {:?}, column covariance {:?}",
                mean.shape(),
                row_cov.shape(),
                col_cov.shape()
            )));
        }
        Ok(Self {
            mean,
            row_cov: symmetrized(row_cov),
            col_cov: symmetrized(col_cov),
        })
    }
}

/// `Γ = M + (Π^{1/2})ᵀ H V^{1/2}` with `A^{1/2}` the upper Cholesky factor,
/// so that `vec Γ ~ N(vec M, V ⊗ Π)`.
pub fn matrix_normal_from_noise(
    params: &MatrixNormalParams,
    noise: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if noise.shape() != params.mean.shape() {
        return Err(Error::Dimension(format!(
            "matrix normal noise {:?} vs mean {:?}",
            noise.shape(),
            params.mean.shape()
        )));
    }
    let row = cholesky_or_err(&params.row_cov, "matrix normal row covariance")?.l();
    let col = cholesky_or_err(&params.col_cov, "matrix normal column covariance")?.l();
    Ok(&params.mean + row * noise * col.transpose())
}

pub fn sample_matrix_normal<R: Rng + ?Sized>(
    params: &MatrixNormalParams,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let (n, p) = params.mean.shape();
    let h = standard_normal_matrix(n, p, rng);
    matrix_normal_from_noise(params, &h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InverseWishartParams {
    pub scale: DMatrix<f64>,
    pub dof: f64,
}

impl InverseWishartParams {
    pub fn new(scale: DMatrix<f64>, dof: f64) -> Result<Self> {
        let n = scale.nrows();
        if scale.ncols() != n {
            return Err(Error::Dimension(format!(
                "inverse Wishart scale {:?} is not square",
                scale.shape()
            )));
        }
        if !(dof > n as f64 - 1.0) || !dof.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "inverse Wishart degrees of freedom {dof} must exceed n - 1 = {}",
                n as f64 - 1.0
            )));
        }
        Ok(Self {
            scale: symmetrized(scale),
            dof,
        })
    }
}

/// Draws `X ~ IW(Λ, ν)`.
///
/// With `Λ = U Uᵀ` (lower Cholesky `U`), `Λ⁻¹ = U⁻ᵀ U⁻¹`, so a Bartlett draw
/// `W = U⁻ᵀ A Aᵀ U⁻¹ ~ W(Λ⁻¹, ν)` inverts to `X = (U A⁻ᵀ)(U A⁻ᵀ)ᵀ` without
/// ever forming `Λ⁻¹`.
pub fn sample_inverse_wishart<R: Rng + ?Sized>(
    params: &InverseWishartParams,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let n = params.scale.nrows();
    let u = cholesky_or_err(&params.scale, "inverse Wishart scale")?.l();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = sample_chi_squared(params.dof - i as f64, rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample(StandardNormal);
        }
    }
    // G = U A⁻ᵀ  <=>  A Gᵀ = Uᵀ, with A lower triangular.
    let gt = a
        .solve_lower_triangular(&u.transpose())
        .ok_or_else(|| Error::NotPositiveDefinite("Bartlett factor underflowed".into()))?;
    let mut x = gt.transpose() * gt;
    symmetrize(&mut x);
    Ok(x)
}

fn sample_chi_squared<R: Rng + ?Sized>(dof: f64, rng: &mut R) -> f64 {
    2.0 * sample_log_gamma(0.5 * dof, rng).exp()
}

/// `log G` for `G ~ Gamma(shape, 1)`.
///
/// Shapes of at least one use the Marsaglia–Tsang rejection sampler from
/// `rand_distr`; smaller shapes use `G(a) = G(a + 1) U^{1/a}`, evaluated in
/// the log domain so tiny shapes do not underflow to zero.
pub fn sample_log_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    debug_assert!(shape > 0.0);
    if shape >= 1.0 {
        let g = Gamma::new(shape, 1.0).expect("shape is positive and finite");
        g.sample(rng).ln()
    } else {
        let g = Gamma::new(shape + 1.0, 1.0).expect("shape is positive and finite");
        let u: f64 = rng.sample(Open01);
        g.sample(rng).ln() + u.ln() / shape
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirichletColumns {
    pub alpha: DMatrix<f64>,
}

impl DirichletColumns {
    pub fn new(alpha: DMatrix<f64>) -> Result<Self> {
        if let Some(v) = alpha.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "Dirichlet concentrations must be positive and finite, found {v}"
            )));
        }
        Ok(Self { alpha })
    }
}

/// Draws a column-stochastic matrix whose column `j` is
/// `Dirichlet(α[.., j])`, through per-entry `Gamma(α_ij, 1)` draws
/// normalised over each column.
pub fn sample_dirichlet_columns<R: Rng + ?Sized>(
    params: &DirichletColumns,
    rng: &mut R,
) -> DMatrix<f64> {
    let (rows, cols) = params.alpha.shape();
    let mut t = DMatrix::zeros(rows, cols);
    let mut logs = vec![0.0; rows];
    for j in 0..cols {
        for (i, l) in logs.iter_mut().enumerate() {
            *l = sample_log_gamma(params.alpha[(i, j)], rng);
        }
        let total = linalg::log_sum_exp(&logs);
        for (i, l) in logs.iter().enumerate() {
            t[(i, j)] = (l - total).exp();
        }
    }
    t
}

/// Inverse-CDF draw from a probability vector using one uniform.
pub fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<usize> {
    if weights.is_empty() {
        return Err(Error::InvalidArgument(
            "categorical with no categories".into(),
        ));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "categorical weight {w} is negative or not finite"
        )));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "categorical weights sum to {total}, expected 1"
        )));
    }
    let u: f64 = rng.random::<f64>() * total;
    Ok(categorical_index(weights, u))
}

/// Smallest index whose cumulative weight exceeds `u`. Zero-weight entries
/// are never returned.
pub(crate) fn categorical_index(weights: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    for (i, w) in weights.iter().enumerate() {
        cum += w;
        if cum > u && *w > 0.0 {
            return i;
        }
    }
    weights
        .iter()
        .rposition(|w| *w > 0.0)
        .unwrap_or(weights.len() - 1)
}

/// Normalises log weights to probabilities with the log-sum-exp shift.
pub fn probabilities_from_log(log_weights: &[f64]) -> Option<Vec<f64>> {
    let total = linalg::log_sum_exp(log_weights);
    if !total.is_finite() {
        return None;
    }
    Some(log_weights.iter().map(|l| (l - total).exp()).collect())
}
