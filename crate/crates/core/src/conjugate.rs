//! Conjugate Matrix-Normal / Inverse-Wishart / Dirichlet updates.
//!
//! Per mode `i`, with `ζ_k = [y_k; x_{k+1}]` and `ξ_k = [x_k; u_k]`, the
//! model `ζ_k = Γ_i ξ_k + w_k`, `w_k ~ N(0, Π_i)` has the conjugate prior
//! `Π_i ~ IW(Λ_i, ν_i)`, `Γ_i | Π_i ~ MN(M_i, Π_i, V_i)`. The columns of
//! `T` carry independent Dirichlet priors with concentrations `α`.

use nalgebra::DMatrix;
use rand::Rng;

use crate::distributions::{
    sample_dirichlet_columns, sample_inverse_wishart, sample_matrix_normal, DirichletColumns,
    InverseWishartParams, MatrixNormalParams,
};
use crate::error::{Error, Result};
use crate::linalg::{self, cholesky_or_err, symmetrize, symmetrized};
use crate::model::{validate_params, Dataset, JmlsParams, ModelMatrices};
use crate::smoother::Trajectory;

/// Matrix-Normal Inverse-Wishart hyperparameters of one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct MniwHyper {
    /// `M`, `(n_y + n_x) x (n_x + n_u)`.
    pub mean: DMatrix<f64>,
    /// `V`, `(n_x + n_u)²`.
    pub col_cov: DMatrix<f64>,
    /// `Λ`, `(n_y + n_x)²`.
    pub scale: DMatrix<f64>,
    /// `ν`.
    pub dof: f64,
}

impl MniwHyper {
    fn validate(&self, model: usize) -> Result<()> {
        let (rows, cols) = self.mean.shape();
        if self.col_cov.shape() != (cols, cols) || self.scale.shape() != (rows, rows) {
            return Err(Error::Dimension(format!(
                "model {model}: M is {rows}x{cols} but V is {:?} and Λ is {:?}",
                self.col_cov.shape(),
                self.scale.shape()
            )));
        }
        if !(self.dof > rows as f64 - 1.0) || !self.dof.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "model {model}: ν = {} must exceed {}",
                self.dof,
                rows as f64 - 1.0
            )));
        }
        if linalg::cholesky(&self.col_cov).is_none() {
            return Err(Error::NotPositiveDefinite(format!("model {model}: V")));
        }
        if linalg::cholesky(&self.scale).is_none() {
            return Err(Error::NotPositiveDefinite(format!("model {model}: Λ")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorHyper {
    pub models: Vec<MniwHyper>,
    /// Dirichlet concentrations, `α[i, j]` for the transition `j -> i`.
    pub alpha: DMatrix<f64>,
}

impl PriorHyper {
    /// The same `(M, V, Λ, ν)` for every mode.
    pub fn uniform(
        m: usize,
        mean: DMatrix<f64>,
        col_cov: DMatrix<f64>,
        scale: DMatrix<f64>,
        dof: f64,
        alpha: DMatrix<f64>,
    ) -> Self {
        let hyper = MniwHyper {
            mean,
            col_cov: symmetrized(col_cov),
            scale: symmetrized(scale),
            dof,
        };
        Self {
            models: vec![hyper; m],
            alpha,
        }
    }

    /// Checks shapes, definiteness and bounds against `(n_x, n_u, n_y)`.
    pub fn validate(&self, n_x: usize, n_u: usize, n_y: usize) -> Result<()> {
        let m = self.models.len();
        if m == 0 {
            return Err(Error::InvalidArgument("prior has no models".into()));
        }
        if self.alpha.shape() != (m, m) {
            return Err(Error::Dimension(format!(
                "α is {:?}, expected {m}x{m}",
                self.alpha.shape()
            )));
        }
        if let Some(v) = self.alpha.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "α entries must be positive, found {v}"
            )));
        }
        for (i, h) in self.models.iter().enumerate() {
            if h.mean.shape() != (n_y + n_x, n_x + n_u) {
                return Err(Error::Dimension(format!(
                    "model {}: M is {:?}, expected {}x{}",
                    i + 1,
                    h.mean.shape(),
                    n_y + n_x,
                    n_x + n_u
                )));
            }
            h.validate(i + 1)?;
        }
        Ok(())
    }
}

/// Outer-product sums of one mode over the steps assigned to it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelStats {
    /// `Φ = Σ ζ ζᵀ`
    pub phi: DMatrix<f64>,
    /// `Ψ = Σ ζ ξᵀ`
    pub psi: DMatrix<f64>,
    /// `Σ = Σ ξ ξᵀ`
    pub sigma: DMatrix<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub models: Vec<ModelStats>,
    /// `transitions[j, i]` counts steps with `z_k = i` and `z_{k+1} = j`.
    pub transitions: DMatrix<f64>,
}

/// Posterior hyperparameters; same layout as the prior.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorHyper {
    pub models: Vec<MniwHyper>,
    pub alpha: DMatrix<f64>,
}

impl PosteriorHyper {
    /// Treats a prior as a posterior with no data, so that
    /// [`sample_parameters`] draws from the prior.
    pub fn from_prior(prior: &PriorHyper) -> Self {
        Self {
            models: prior.models.clone(),
            alpha: prior.alpha.clone(),
        }
    }
}

/// Accumulates the statistics of a trajectory `ξ_{1:N+1}` against the
/// data in the original (correlated) model form, over `k = 1..N`.
pub fn sufficient_stats(traj: &Trajectory, data: &Dataset, m: usize) -> Result<SufficientStats> {
    let n = data.len();
    if traj.z.len() != n + 1 || traj.x.len() != n + 1 {
        return Err(Error::Dimension(format!(
            "trajectory has {} states for {n} data points, expected {}",
            traj.z.len(),
            n + 1
        )));
    }
    if let Some(z) = traj.z.iter().find(|z| **z >= m) {
        return Err(Error::InvalidArgument(format!(
            "mode index {} out of range 1..={m}",
            z + 1
        )));
    }
    let nx = traj.x[0].len();
    let (nu, ny) = (data.n_u(), data.n_y());
    let rows = ny + nx;
    let cols = nx + nu;
    let mut models = vec![
        ModelStats {
            phi: DMatrix::zeros(rows, rows),
            psi: DMatrix::zeros(rows, cols),
            sigma: DMatrix::zeros(cols, cols),
            count: 0,
        };
        m
    ];
    let mut transitions = DMatrix::zeros(m, m);
    for k in 0..n {
        let zeta = linalg::vcat(&data.y[k], &traj.x[k + 1]);
        let xi = linalg::vcat(&traj.x[k], &data.u[k]);
        let s = &mut models[traj.z[k]];
        s.phi.ger(1.0, &zeta, &zeta, 1.0);
        s.psi.ger(1.0, &zeta, &xi, 1.0);
        s.sigma.ger(1.0, &xi, &xi, 1.0);
        s.count += 1;
        transitions[(traj.z[k + 1], traj.z[k])] += 1.0;
    }
    Ok(SufficientStats {
        models,
        transitions,
    })
}

/// Conjugate update of every mode and of the transition concentrations.
///
/// ```text
/// Σ̄ = Σ + V⁻¹      Ψ̄ = Ψ + M V⁻¹      Φ̄ = Φ + M V⁻¹ Mᵀ
/// M̄ = Ψ̄ Σ̄⁻¹      V̄ = Σ̄⁻¹            Λ̄ = Λ + Φ̄ − Ψ̄ Σ̄⁻¹ Ψ̄ᵀ
/// ν̄ = ν + N_i     ᾱ = α + counts
/// ```
///
/// A mode with no assigned steps keeps its prior unchanged.
pub fn posterior_hyperparams(
    prior: &PriorHyper,
    stats: &SufficientStats,
) -> Result<PosteriorHyper> {
    if prior.models.len() != stats.models.len() || prior.alpha.shape() != stats.transitions.shape()
    {
        return Err(Error::Dimension(
            "prior and statistics cover different numbers of models".into(),
        ));
    }
    let models = prior
        .models
        .iter()
        .zip(&stats.models)
        .enumerate()
        .map(|(i, (p, s))| update_model(p, s).map_err(|e| e.at_component(0, i + 1, 1)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorHyper {
        models,
        alpha: &prior.alpha + &stats.transitions,
    })
}

fn update_model(prior: &MniwHyper, stats: &ModelStats) -> Result<MniwHyper> {
    if stats.count == 0 {
        return Ok(prior.clone());
    }
    if stats.psi.shape() != prior.mean.shape() {
        return Err(Error::Dimension(format!(
            "Ψ is {:?} but M is {:?}",
            stats.psi.shape(),
            prior.mean.shape()
        )));
    }
    let v_chol = cholesky_or_err(&prior.col_cov, "prior column covariance V")?;
    // M V⁻¹ = (V⁻¹ Mᵀ)ᵀ
    let m_vinv = v_chol.solve(&prior.mean.transpose()).transpose();
    let sigma_bar = symmetrized(&stats.sigma + v_chol.inverse());
    let psi_bar = &stats.psi + &m_vinv;
    let phi_bar = &stats.phi + &m_vinv * prior.mean.transpose();

    let s_chol = cholesky_or_err(&sigma_bar, "posterior Σ̄")?;
    // Ψ̄ Σ̄⁻¹ Ψ̄ᵀ = Wᵀ W with W = L⁻¹ Ψ̄ᵀ
    let w = s_chol
        .l_dirty()
        .solve_lower_triangular(&psi_bar.transpose())
        .ok_or_else(|| Error::NotPositiveDefinite("posterior Σ̄".into()))?;
    let mut scale = &prior.scale + &phi_bar - w.transpose() * &w;
    symmetrize(&mut scale);
    let mean = s_chol.solve(&psi_bar.transpose()).transpose();
    let col_cov = symmetrized(s_chol.inverse());
    Ok(MniwHyper {
        mean,
        col_cov,
        scale,
        dof: prior.dof + stats.count as f64,
    })
}

/// Draws `θ` from the posterior: every `Π_i ~ IW(Λ̄_i, ν̄_i)` first, then
/// every `Γ_i ~ MN(M̄_i, Π_i, V̄_i)`, then the columns of `T`.
pub fn sample_parameters<R: Rng + ?Sized>(
    post: &PosteriorHyper,
    n_x: usize,
    n_u: usize,
    n_y: usize,
    rng: &mut R,
) -> Result<JmlsParams> {
    let pis = post
        .models
        .iter()
        .map(|h| sample_inverse_wishart(&InverseWishartParams::new(h.scale.clone(), h.dof)?, rng))
        .collect::<Result<Vec<_>>>()?;
    let mut models = Vec::with_capacity(post.models.len());
    for (h, pi) in post.models.iter().zip(&pis) {
        let gamma = sample_matrix_normal(
            &MatrixNormalParams::new(h.mean.clone(), pi.clone(), h.col_cov.clone())?,
            rng,
        )?;
        models.push(ModelMatrices::from_blocks(&gamma, pi, n_x, n_u, n_y)?);
    }
    let transition = sample_dirichlet_columns(&DirichletColumns::new(post.alpha.clone())?, rng);
    let params = JmlsParams::new(models, transition)?;
    let violations = validate_params(&params);
    if !violations.is_empty() {
        let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(Error::InvalidParams(format!(
            "sampled parameters: {}",
            text.join("; ")
        )));
    }
    Ok(params)
}
