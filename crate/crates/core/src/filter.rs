//! Conditional hybrid forward filter.
//!
//! The filtered distribution at each step is a Gaussian mixture indexed by
//! mode `z` and component `i`. Every component is corrected by a Kalman
//! update, weights are normalised across all `(z, i)`, the mixture is
//! reduced by [`crate::dpf::dpf_resample`] when it exceeds `M` components,
//! and each surviving component is pushed through every mode transition.
//!
//! The component that follows the conditioned mode sequence (the
//! "ancestor") is tracked from step to step and is never removed by the
//! reduction, which is what makes the trajectory step a valid
//! conditional-SMC move.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::distributions::log_mvn_pdf_chol;
use crate::dpf::dpf_resample;
use crate::error::{Error, Result};
use crate::linalg::{self, symmetrize};
use crate::model::{Dataset, DecorrelatedModel, DecorrelatedParams, HybridPrior, JmlsParams};

/// An ancestor whose log weight drops below this is numerically zero and
/// is no longer protected by the reduction.
pub const DEAD_LOG_WEIGHT: f64 = -658.3964185322641; // ln(f64::MIN_POSITIVE) + 50

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub log_weight: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Gaussian mixture over the hybrid state. `components[z][i]` is component
/// `i` of mode `z`; the flat order is mode-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridMixture {
    pub components: Vec<Vec<GaussianComponent>>,
    /// `(z, i)` of the component that follows the conditioned sequence.
    pub ancestor: Option<(usize, usize)>,
}

impl HybridMixture {
    pub fn empty(m: usize) -> Self {
        Self {
            components: vec![Vec::new(); m],
            ancestor: None,
        }
    }

    pub fn from_prior(prior: &HybridPrior) -> Self {
        let components = prior
            .per_model
            .iter()
            .map(|comps| {
                comps
                    .iter()
                    .filter(|c| c.weight > 0.0)
                    .map(|c| GaussianComponent {
                        log_weight: c.weight.ln(),
                        mean: c.mean.clone(),
                        cov: c.cov.clone(),
                    })
                    .collect()
            })
            .collect();
        Self {
            components,
            ancestor: None,
        }
    }

    pub fn num_models(&self) -> usize {
        self.components.len()
    }

    /// Total number of components over all modes.
    pub fn len(&self) -> usize {
        self.components.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-mode component counts.
    pub fn counts(&self) -> Vec<usize> {
        self.components.iter().map(Vec::len).collect()
    }

    pub fn iter_flat(&self) -> impl Iterator<Item = (usize, usize, &GaussianComponent)> {
        self.components
            .iter()
            .enumerate()
            .flat_map(|(z, comps)| comps.iter().enumerate().map(move |(i, c)| (z, i, c)))
    }

    pub fn log_weights(&self) -> Vec<f64> {
        self.iter_flat().map(|(_, _, c)| c.log_weight).collect()
    }

    pub fn flat_index(&self, z: usize, i: usize) -> usize {
        self.components[..z].iter().map(Vec::len).sum::<usize>() + i
    }

    pub fn log_total_weight(&self) -> f64 {
        linalg::log_sum_exp(&self.log_weights())
    }

    /// Shifts every log weight so the weights sum to one and returns the
    /// shift. Returns `-inf` (leaving the weights untouched) when every
    /// weight is zero.
    pub fn normalize(&mut self) -> f64 {
        let total = self.log_total_weight();
        if total.is_finite() {
            for c in self.components.iter_mut().flatten() {
                c.log_weight -= total;
            }
        }
        total
    }

    pub fn ancestor_component(&self) -> Option<&GaussianComponent> {
        self.ancestor.map(|(z, i)| &self.components[z][i])
    }
}

/// Stored output of one forward pass.
#[derive(Debug, Clone)]
pub struct FilterHistory {
    /// Normalised filtered mixtures for `k = 1..N`, before reduction.
    pub filtered: Vec<HybridMixture>,
    /// Predicted mixture for `k = N + 1`.
    pub predicted: HybridMixture,
    /// `log p(y_k | y_{1:k-1})` estimates, one per step.
    pub log_normalizers: Vec<f64>,
    /// Sum of the per-step normalisers.
    pub log_likelihood: f64,
}

impl FilterHistory {
    pub fn len(&self) -> usize {
        self.filtered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filtered.is_empty()
    }

    /// Ancestor index `a_k` for every step, into the stored filtered mixtures.
    pub fn ancestors(&self) -> Vec<Option<(usize, usize)>> {
        self.filtered.iter().map(|m| m.ancestor).collect()
    }
}

/// Measurement update of one component; the weight is multiplied by the
/// predictive likelihood `N(y | η, Ξ)`.
pub fn kalman_correct(
    comp: &GaussianComponent,
    model: &DecorrelatedModel,
    ubar: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<GaussianComponent> {
    let eta = &model.c * &comp.mean + &model.d * ubar;
    let cp = &model.c * &comp.cov;
    let mut xi = &cp * model.c.transpose() + &model.r;
    symmetrize(&mut xi);
    let chol = linalg::cholesky_or_err(&xi, "innovation covariance")?;
    let innovation = y - &eta;
    // K = P C̄ᵀ Ξ⁻¹ = (Ξ⁻¹ C̄ P)ᵀ
    let gain = chol.solve(&cp).transpose();
    let mean = &comp.mean + &gain * &innovation;
    let mut cov = &comp.cov - &gain * &cp;
    symmetrize(&mut cov);
    Ok(GaussianComponent {
        log_weight: comp.log_weight + log_mvn_pdf_chol(&innovation, &chol),
        mean,
        cov,
    })
}

/// Time update of one component into a given next mode; `transition_prob`
/// is `T[z_{k+1}, z_k]` and may be zero.
pub fn kalman_predict(
    comp: &GaussianComponent,
    model: &DecorrelatedModel,
    ubar: &DVector<f64>,
    transition_prob: f64,
) -> GaussianComponent {
    let (mean, cov) = propagate(comp, model, ubar);
    GaussianComponent {
        log_weight: comp.log_weight + transition_prob.ln(),
        mean,
        cov,
    }
}

fn propagate(
    comp: &GaussianComponent,
    model: &DecorrelatedModel,
    ubar: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let mean = &model.a * &comp.mean + &model.b * ubar;
    let mut cov = &model.a * &comp.cov * model.a.transpose() + &model.q;
    symmetrize(&mut cov);
    (mean, cov)
}

/// Runs the conditional forward filter.
///
/// `conditioned_z` is the previously sampled mode sequence `z_{1:N+1}`
/// (zero-based). When `None`, nothing is protected from reduction.
pub fn forward_filter<R: Rng + ?Sized>(
    params: &JmlsParams,
    data: &Dataset,
    prior: &HybridPrior,
    max_components: usize,
    conditioned_z: Option<&[usize]>,
    rng: &mut R,
) -> Result<FilterHistory> {
    let dparams = DecorrelatedParams::new(params)?;
    forward_filter_decorrelated(&dparams, data, prior, max_components, conditioned_z, rng)
}

/// [`forward_filter`] on parameters that are already decorrelated.
pub fn forward_filter_decorrelated<R: Rng + ?Sized>(
    params: &DecorrelatedParams,
    data: &Dataset,
    prior: &HybridPrior,
    max_components: usize,
    conditioned_z: Option<&[usize]>,
    rng: &mut R,
) -> Result<FilterHistory> {
    let m = params.num_models();
    let n = data.len();
    let nx = params.models[0].a.nrows();
    if max_components < 2 {
        return Err(Error::InvalidArgument(format!(
            "at least two mixture components are required, got {max_components}"
        )));
    }
    if let Some(z) = conditioned_z {
        if z.len() != n + 1 || z.iter().any(|&v| v >= m) {
            return Err(Error::InvalidArgument(format!(
                "conditioned sequence must have {} entries in 1..={m}",
                n + 1
            )));
        }
    }
    prior.validate(m, nx)?;
    if data.n_y() != params.models[0].c.nrows()
        || data.n_u() + data.n_y() != params.models[0].b.ncols()
    {
        return Err(Error::Dimension(
            "dataset dimensions do not match the parameters".into(),
        ));
    }

    let mut mixture = HybridMixture::from_prior(prior);
    if let Some(z) = conditioned_z {
        if !mixture.components[z[0]].is_empty() {
            mixture.ancestor = Some((z[0], 0));
        }
    }

    let mut filtered = Vec::with_capacity(n);
    let mut log_normalizers = Vec::with_capacity(n);
    for k in 0..n {
        let ubar = data.augmented_input(k);
        let y = &data.y[k];
        for (z, comps) in mixture.components.iter_mut().enumerate() {
            for (i, comp) in comps.iter_mut().enumerate() {
                *comp = kalman_correct(comp, &params.models[z], &ubar, y)
                    .map_err(|e| e.at_component(k + 1, z + 1, i + 1))?;
            }
        }
        let log_norm = mixture.normalize();
        if !log_norm.is_finite() {
            return Err(Error::FilterDegeneracy { step: k + 1 });
        }
        log_normalizers.push(log_norm);

        if let Some(anc) = mixture.ancestor_component() {
            if anc.log_weight < DEAD_LOG_WEIGHT {
                mixture.ancestor = None;
            }
        }
        filtered.push(mixture.clone());

        if mixture.len() > max_components {
            mixture = dpf_resample(&mixture, max_components, rng)?;
            mixture.normalize();
        }

        let next_z = conditioned_z.map(|z| z[k + 1]);
        mixture = predict_mixture(&mixture, params, &ubar, next_z);
    }
    mixture.normalize();

    Ok(FilterHistory {
        log_likelihood: log_normalizers.iter().sum(),
        filtered,
        predicted: mixture,
        log_normalizers,
    })
}

/// Pushes every component through every mode transition. Components with
/// zero transition probability are dropped. The ancestor moves to mode
/// `next_ancestor_mode` when it survives.
fn predict_mixture(
    mixture: &HybridMixture,
    params: &DecorrelatedParams,
    ubar: &DVector<f64>,
    next_ancestor_mode: Option<usize>,
) -> HybridMixture {
    let m = params.num_models();
    let propagated: Vec<(usize, usize, f64, DVector<f64>, DMatrix<f64>)> = mixture
        .iter_flat()
        .map(|(z, i, c)| {
            let (mean, cov) = propagate(c, &params.models[z], ubar);
            (z, i, c.log_weight, mean, cov)
        })
        .collect();
    let mut next = HybridMixture::empty(m);
    for z_next in 0..m {
        for (z, i, log_weight, mean, cov) in &propagated {
            let lw = log_weight + params.log_transition[(z_next, *z)];
            if lw == f64::NEG_INFINITY {
                continue;
            }
            if mixture.ancestor == Some((*z, *i)) && next_ancestor_mode == Some(z_next) {
                next.ancestor = Some((z_next, next.components[z_next].len()));
            }
            next.components[z_next].push(GaussianComponent {
                log_weight: lw,
                mean: mean.clone(),
                cov: cov.clone(),
            });
        }
    }
    next
}
