//! Backward sampling of a hybrid trajectory from a stored forward pass.
//!
//! The last hybrid state is drawn from the predicted mixture at `N + 1`.
//! Going backwards, each stored filtered mixture is conditioned on the
//! state just drawn, `p(ξ_k | ξ_{k+1}, y_{1:k}) ∝ p(ξ_{k+1} | ξ_k) p(ξ_k | y_{1:k})`,
//! and `(z_k, b_k, x_k)` is drawn from the result: first the mode from the
//! per-mode weight totals, then a component within it, then the state.

use nalgebra::DVector;
use rand::Rng;

use crate::distributions::{
    log_mvn_pdf_chol, probabilities_from_log, sample_categorical, sample_mvn,
};
use crate::error::{Error, Result};
use crate::filter::{FilterHistory, GaussianComponent, HybridMixture};
use crate::linalg::{self, symmetrize};
use crate::model::{Dataset, DecorrelatedParams, JmlsParams};

/// A sampled hybrid path. `b` holds the mixture component each state was
/// drawn from; it is kept for diagnostics only.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub x: Vec<DVector<f64>>,
    pub z: Vec<usize>,
    pub b: Vec<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

/// Conditions the filtered mixture at step `k` on `(x_{k+1}, z_{k+1})`.
///
/// Component indices are preserved; components that cannot reach `z_next`
/// keep a weight of zero. The result is normalised.
pub fn backward_smooth_step(
    filtered: &HybridMixture,
    x_next: &DVector<f64>,
    z_next: usize,
    params: &DecorrelatedParams,
    ubar: &DVector<f64>,
    step: usize,
) -> Result<HybridMixture> {
    let mut out = HybridMixture::empty(filtered.num_models());
    for (z, comps) in filtered.components.iter().enumerate() {
        let model = &params.models[z];
        let log_t = params.log_transition[(z_next, z)];
        for (i, comp) in comps.iter().enumerate() {
            if log_t == f64::NEG_INFINITY || comp.log_weight == f64::NEG_INFINITY {
                out.components[z].push(GaussianComponent {
                    log_weight: f64::NEG_INFINITY,
                    ..comp.clone()
                });
                continue;
            }
            let eta = &model.a * &comp.mean + &model.b * ubar;
            let ap = &model.a * &comp.cov;
            let mut xi = &ap * model.a.transpose() + &model.q;
            symmetrize(&mut xi);
            let chol =
                linalg::cholesky(&xi).ok_or_else(|| {
                    Error::NotPositiveDefinite("backward innovation covariance".into())
                        .at_component(step, z + 1, i + 1)
                })?;
            let residual = x_next - &eta;
            // K = P Āᵀ Ξ⁻¹ = (Ξ⁻¹ Ā P)ᵀ
            let gain = chol.solve(&ap).transpose();
            let mean = &comp.mean + &gain * &residual;
            let mut cov = &comp.cov - &gain * &ap;
            symmetrize(&mut cov);
            out.components[z].push(GaussianComponent {
                log_weight: log_t + comp.log_weight + log_mvn_pdf_chol(&residual, &chol),
                mean,
                cov,
            });
        }
    }
    if !out.normalize().is_finite() {
        return Err(Error::DeadMixture { step });
    }
    Ok(out)
}

/// Draws `(z, b, x)` from a normalised mixture.
fn sample_hybrid<R: Rng + ?Sized>(
    mixture: &HybridMixture,
    step: usize,
    rng: &mut R,
) -> Result<(usize, usize, DVector<f64>)> {
    let probs =
        probabilities_from_log(&mixture.log_weights()).ok_or(Error::DeadMixture { step })?;
    let mut per_model = Vec::with_capacity(mixture.num_models());
    let mut offset = 0;
    for comps in &mixture.components {
        per_model.push(probs[offset..offset + comps.len()].iter().sum::<f64>());
        offset += comps.len();
    }
    let total: f64 = per_model.iter().sum();
    let per_model: Vec<f64> = per_model.iter().map(|p| p / total).collect();
    let z = sample_categorical(&per_model, rng)?;

    let start = mixture.flat_index(z, 0);
    let within = &probs[start..start + mixture.components[z].len()];
    let mass: f64 = within.iter().sum();
    let within: Vec<f64> = within.iter().map(|p| p / mass).collect();
    let b = sample_categorical(&within, rng)?;

    let comp = &mixture.components[z][b];
    Ok((z, b, sample_mvn(&comp.mean, &comp.cov, rng)))
}

/// Samples a hybrid trajectory `ξ_{1:N+1}` given a forward pass run with
/// the same parameters and data.
pub fn sample_trajectory<R: Rng + ?Sized>(
    history: &FilterHistory,
    params: &JmlsParams,
    data: &Dataset,
    rng: &mut R,
) -> Result<Trajectory> {
    let dparams = DecorrelatedParams::new(params)?;
    sample_trajectory_decorrelated(history, &dparams, data, rng)
}

/// [`sample_trajectory`] on parameters that are already decorrelated.
pub fn sample_trajectory_decorrelated<R: Rng + ?Sized>(
    history: &FilterHistory,
    params: &DecorrelatedParams,
    data: &Dataset,
    rng: &mut R,
) -> Result<Trajectory> {
    let n = history.len();
    if data.len() != n {
        return Err(Error::Dimension(format!(
            "filter history covers {n} steps but the dataset has {}",
            data.len()
        )));
    }
    let mut x = vec![DVector::zeros(0); n + 1];
    let mut z = vec![0; n + 1];
    let mut b = vec![0; n + 1];

    let (zn, bn, xn) = sample_hybrid(&history.predicted, n + 1, rng)?;
    x[n] = xn;
    z[n] = zn;
    b[n] = bn;
    for k in (0..n).rev() {
        let smoothed = backward_smooth_step(
            &history.filtered[k],
            &x[k + 1],
            z[k + 1],
            params,
            &data.augmented_input(k),
            k + 1,
        )?;
        let (zk, bk, xk) = sample_hybrid(&smoothed, k + 1, rng)?;
        x[k] = xk;
        z[k] = zk;
        b[k] = bk;
    }
    Ok(Trajectory { x, z, b })
}
