//! Particle-Gibbs driver and chain diagnostics.
//!
//! Sweep `ℓ` runs the conditional forward filter under `θ^ℓ` and the mode
//! sequence sampled at sweep `ℓ - 1`, draws a new trajectory `ξ^ℓ`, and
//! draws `θ^{ℓ+1}` from the conjugate posterior given `ξ^ℓ`. All draws of
//! sweep `ℓ` come from RNG stream `ℓ` of the run seed; stream 0 covers the
//! initial parameters and the initial conditioning sequence.

use std::fmt;

use crate::conjugate::{
    posterior_hyperparams, sample_parameters, sufficient_stats, PosteriorHyper, PriorHyper,
};
use crate::distributions::sample_categorical;
use crate::error::{Error, Result};
use crate::filter::forward_filter_decorrelated;
use crate::model::{validate_params, Dataset, DecorrelatedParams, HybridPrior, JmlsParams};
use crate::rng::{stream, JmlsRng};
use crate::smoother::{sample_trajectory_decorrelated, Trajectory};

#[derive(Debug, Clone)]
pub struct GibbsConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub max_components: usize,
    pub seed: u64,
    /// `θ¹`; drawn from `prior` when absent.
    pub init_theta: Option<JmlsParams>,
    pub prior: PriorHyper,
    pub state_prior: HybridPrior,
    /// Keep the trajectory of every stored sample, not only the last one.
    pub store_trajectories: bool,
}

impl GibbsConfig {
    /// Config with a 10% burn-in, no thinning and the diffuse state prior.
    pub fn new(
        iterations: usize,
        max_components: usize,
        seed: u64,
        prior: PriorHyper,
        n_x: usize,
    ) -> Self {
        let m = prior.models.len();
        Self {
            iterations,
            burn_in: iterations / 10,
            thin: 1,
            max_components,
            seed,
            init_theta: None,
            prior,
            state_prior: HybridPrior::diffuse(m, n_x),
            store_trajectories: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.burn_in >= self.iterations {
            return Err(Error::InvalidArgument(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidArgument(
                "thinning stride must be at least 1".into(),
            ));
        }
        if self.max_components < 2 {
            return Err(Error::InvalidArgument(format!(
                "at least two mixture components are required, got {}",
                self.max_components
            )));
        }
        Ok(())
    }

    /// Number of samples the chain will hold, `⌈(iterations − burn_in) / thin⌉`.
    pub fn stored_len(&self) -> usize {
        (self.iterations - self.burn_in).div_ceil(self.thin)
    }

    fn keeps(&self, iteration: usize) -> bool {
        iteration > self.burn_in && (iteration - self.burn_in - 1) % self.thin == 0
    }
}

/// `θ^{ℓ+1}`, the parameters drawn at the end of sweep `ℓ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSample {
    pub iteration: usize,
    pub theta: JmlsParams,
}

#[derive(Debug, Clone)]
pub struct Chain {
    pub seed: u64,
    pub samples: Vec<ChainSample>,
    /// Forward-filter log-likelihood estimate of every sweep.
    pub log_likelihood: Vec<f64>,
    /// Completed sweeps. Every trajectory is accepted, so this is also the
    /// acceptance count.
    pub accepted: usize,
    /// Trajectories of the stored samples, when requested.
    pub trajectories: Vec<Trajectory>,
    pub last_trajectory: Option<Trajectory>,
}

impl Chain {
    fn new(seed: u64) -> Self {
        Self {
            seed,
            samples: Vec::new(),
            log_likelihood: Vec::new(),
            accepted: 0,
            trajectories: Vec::new(),
            last_trajectory: None,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Named scalar traces of every parameter entry, in a fixed order.
    pub fn scalar_traces(&self) -> Vec<(String, Vec<f64>)> {
        let thetas: Vec<&JmlsParams> = self.samples.iter().map(|s| &s.theta).collect();
        scalar_traces(&thetas)
    }
}

/// Per-entry traces `T_i_j`, then `A_i_r_c`, `B_…`, `C_…`, `D_…`, `Q_…`,
/// `R_…`, `S_…` for each mode (indices one-based).
pub fn scalar_traces(thetas: &[&JmlsParams]) -> Vec<(String, Vec<f64>)> {
    let Some(first) = thetas.first() else {
        return Vec::new();
    };
    let m = first.num_models();
    let mut out = Vec::new();
    for i in 0..m {
        for j in 0..m {
            out.push((
                format!("T_{}_{}", i + 1, j + 1),
                thetas.iter().map(|t| t.transition[(i, j)]).collect(),
            ));
        }
    }
    for z in 0..m {
        let blocks: [(
            &str,
            fn(&crate::model::ModelMatrices) -> &nalgebra::DMatrix<f64>,
        ); 7] = [
            ("A", |mm| &mm.a),
            ("B", |mm| &mm.b),
            ("C", |mm| &mm.c),
            ("D", |mm| &mm.d),
            ("Q", |mm| &mm.q),
            ("R", |mm| &mm.r),
            ("S", |mm| &mm.s),
        ];
        for (name, get) in blocks {
            let (rows, cols) = get(&first.models[z]).shape();
            for r in 0..rows {
                for c in 0..cols {
                    out.push((
                        format!("{name}_{}_{}_{}", z + 1, r + 1, c + 1),
                        thetas.iter().map(|t| get(&t.models[z])[(r, c)]).collect(),
                    ));
                }
            }
        }
    }
    out
}

/// A run that stopped early. `partial` holds everything completed before
/// the failing sweep.
#[derive(Debug)]
pub struct GibbsError {
    pub iteration: usize,
    pub source: Error,
    pub partial: Box<Chain>,
}

impl fmt::Display for GibbsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.iteration == 0 {
            write!(f, "initialisation failed: {}", self.source)
        } else {
            write!(f, "iteration {}: {}", self.iteration, self.source)
        }
    }
}

impl std::error::Error for GibbsError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

/// Draws `z_{1:N+1}` from the mode chain of `theta`, starting from the
/// mode marginal of the state prior, so that it has positive probability.
fn initial_sequence(
    theta: &JmlsParams,
    prior: &HybridPrior,
    n: usize,
    rng: &mut JmlsRng,
) -> Result<Vec<usize>> {
    let start: Vec<f64> = prior
        .per_model
        .iter()
        .map(|c| c.iter().map(|p| p.weight).sum())
        .collect();
    let m = theta.num_models();
    let columns: Vec<Vec<f64>> = (0..m)
        .map(|j| theta.transition.column(j).iter().copied().collect())
        .collect();
    let mut z = Vec::with_capacity(n + 1);
    z.push(sample_categorical(&start, rng)?);
    for k in 0..n {
        z.push(sample_categorical(&columns[z[k]], rng)?);
    }
    Ok(z)
}

/// Runs the particle-Gibbs sampler.
pub fn run_particle_gibbs(
    config: &GibbsConfig,
    data: &Dataset,
) -> std::result::Result<Chain, GibbsError> {
    let mut chain = Chain::new(config.seed);
    let fail = |chain: Chain, iteration: usize, source: Error| GibbsError {
        iteration,
        source,
        partial: Box::new(chain),
    };
    let n_x = config
        .state_prior
        .per_model
        .iter()
        .flatten()
        .next()
        .map(|c| c.mean.len())
        .unwrap_or(0);
    let (n_u, n_y) = (data.n_u(), data.n_y());
    let setup = config
        .validate()
        .and_then(|_| config.prior.validate(n_x, n_u, n_y))
        .and_then(|_| config.state_prior.validate(config.prior.models.len(), n_x));
    if let Err(e) = setup {
        return Err(fail(chain, 0, e));
    }

    let mut rng = stream(config.seed, 0);
    let theta = match &config.init_theta {
        Some(t) => {
            let violations = validate_params(t);
            if !violations.is_empty() {
                let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
                return Err(fail(chain, 0, Error::InvalidParams(text.join("; "))));
            }
            if t.num_models() != config.prior.models.len()
                || t.n_x() != n_x
                || t.n_u() != n_u
                || t.n_y() != n_y
            {
                return Err(fail(
                    chain,
                    0,
                    Error::Dimension("initial parameters do not match the prior and data".into()),
                ));
            }
            Ok(t.clone())
        }
        None => sample_parameters(
            &PosteriorHyper::from_prior(&config.prior),
            n_x,
            n_u,
            n_y,
            &mut rng,
        ),
    };
    let mut theta = match theta {
        Ok(t) => t,
        Err(e) => return Err(fail(chain, 0, e)),
    };
    let mut conditioned = match initial_sequence(&theta, &config.state_prior, data.len(), &mut rng)
    {
        Ok(z) => z,
        Err(e) => return Err(fail(chain, 0, e)),
    };

    let report_every = (config.iterations / 10).max(1);
    for iteration in 1..=config.iterations {
        let mut rng = stream(config.seed, iteration as u64);
        let sweep = (|| -> Result<(f64, Trajectory, JmlsParams)> {
            let dparams = DecorrelatedParams::new(&theta)?;
            let history = forward_filter_decorrelated(
                &dparams,
                data,
                &config.state_prior,
                config.max_components,
                Some(&conditioned),
                &mut rng,
            )?;
            let traj = sample_trajectory_decorrelated(&history, &dparams, data, &mut rng)?;
            let stats = sufficient_stats(&traj, data, theta.num_models())?;
            let post = posterior_hyperparams(&config.prior, &stats)?;
            let next = sample_parameters(&post, n_x, n_u, n_y, &mut rng)?;
            Ok((history.log_likelihood, traj, next))
        })();
        let (loglik, traj, next) = match sweep {
            Ok(v) => v,
            Err(e) => return Err(fail(chain, iteration, e)),
        };
        chain.log_likelihood.push(loglik);
        chain.accepted += 1;
        conditioned.clone_from(&traj.z);
        if config.keeps(iteration) {
            chain.samples.push(ChainSample {
                iteration,
                theta: next.clone(),
            });
            if config.store_trajectories {
                chain.trajectories.push(traj.clone());
            }
        }
        chain.last_trajectory = Some(traj);
        theta = next;
        if iteration % report_every == 0 {
            log::info!(
                "iteration {iteration}/{}: log-likelihood {loglik:.3}",
                config.iterations
            );
        }
    }
    Ok(chain)
}

/// Summary of one scalar trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceDiagnostics {
    pub mean: f64,
    pub variance: f64,
    /// `(lag, autocorrelation)` for lags 1, 10 and 100 that fit in the trace.
    pub autocorrelation: Vec<(usize, f64)>,
    /// Effective sample size, Geyer's initial monotone sequence estimator.
    pub ess: f64,
    pub zero_variance: bool,
}

fn autocovariance(centered: &[f64], lag: usize) -> f64 {
    let n = centered.len();
    centered[..n - lag]
        .iter()
        .zip(&centered[lag..])
        .map(|(a, b)| a * b)
        .sum::<f64>()
        / n as f64
}

pub fn trace_diagnostics(values: &[f64]) -> TraceDiagnostics {
    let n = values.len();
    if n == 0 {
        return TraceDiagnostics {
            mean: f64::NAN,
            variance: f64::NAN,
            autocorrelation: Vec::new(),
            ess: 0.0,
            zero_variance: true,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let gamma0 = autocovariance(&centered, 0);
    let variance = if n > 1 {
        gamma0 * n as f64 / (n - 1) as f64
    } else {
        0.0
    };
    let scale = mean.abs().max(1.0);
    if gamma0 <= (f64::EPSILON * scale).powi(2) {
        return TraceDiagnostics {
            mean,
            variance,
            autocorrelation: [1, 10, 100]
                .iter()
                .filter(|l| **l < n)
                .map(|l| (*l, 0.0))
                .collect(),
            ess: n as f64,
            zero_variance: true,
        };
    }
    let autocorrelation = [1, 10, 100]
        .iter()
        .filter(|l| **l < n)
        .map(|&l| (l, autocovariance(&centered, l) / gamma0))
        .collect();

    // Sum of consecutive pairs Γ_t = γ_{2t} + γ_{2t+1}, truncated at the
    // first non-positive pair and forced to be non-increasing.
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut t = 0;
    while 2 * t + 1 < n {
        let mut pair = autocovariance(&centered, 2 * t) + autocovariance(&centered, 2 * t + 1);
        if pair <= 0.0 {
            break;
        }
        pair = pair.min(prev);
        sum += pair;
        prev = pair;
        t += 1;
    }
    let tau = (-gamma0 + 2.0 * sum) / gamma0;
    TraceDiagnostics {
        mean,
        variance,
        autocorrelation,
        ess: n as f64 / tau,
        zero_variance: false,
    }
}

/// Diagnostics for every scalar trace of the chain plus the
/// log-likelihood trace (named `loglik`).
pub fn chain_diagnostics(chain: &Chain) -> Vec<(String, TraceDiagnostics)> {
    let mut out: Vec<(String, TraceDiagnostics)> = chain
        .scalar_traces()
        .into_iter()
        .map(|(name, values)| {
            let d = trace_diagnostics(&values);
            (name, d)
        })
        .collect();
    out.push(("loglik".into(), trace_diagnostics(&chain.log_likelihood)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::{uninformative_prior, univariate_two_mode};
    use crate::distributions::standard_normal_vector;
    use crate::model::simulate;
    use nalgebra::DVector;

    fn small_problem(n: usize) -> (JmlsParams, Dataset) {
        let truth = univariate_two_mode();
        let mut rng = stream(99, 0);
        let u: Vec<DVector<f64>> = (0..n)
            .map(|_| standard_normal_vector(1, &mut rng))
            .collect();
        let sim = simulate(&truth, &u, &DVector::zeros(1), 0, &mut rng).unwrap();
        (truth, Dataset::new(u, sim.y).unwrap())
    }

    #[test]
    fn single_sweep_stores_one_sample() {
        let (truth, data) = small_problem(30);
        let mut config = GibbsConfig::new(1, 5, 1, uninformative_prior(2, 1, 1, 1), 1);
        config.burn_in = 0;
        config.init_theta = Some(truth);
        let chain = run_particle_gibbs(&config, &data).unwrap();
        assert_eq!(chain.len(), 1);
        assert_eq!(chain.samples[0].iteration, 1);
        assert_eq!(chain.log_likelihood.len(), 1);
        assert_eq!(chain.last_trajectory.as_ref().unwrap().len(), 31);
    }

    #[test]
    fn stored_length_follows_schedule() {
        let (truth, data) = small_problem(20);
        let mut config = GibbsConfig::new(11, 5, 2, uninformative_prior(2, 1, 1, 1), 1);
        config.burn_in = 2;
        config.thin = 4;
        config.init_theta = Some(truth);
        config.store_trajectories = true;
        let chain = run_particle_gibbs(&config, &data).unwrap();
        assert_eq!(chain.len(), config.stored_len());
        assert_eq!(
            chain
                .samples
                .iter()
                .map(|s| s.iteration)
                .collect::<Vec<_>>(),
            vec![3, 7, 11]
        );
        assert_eq!(chain.trajectories.len(), 3);
    }

    #[test]
    fn runs_are_reproducible() {
        let (_, data) = small_problem(25);
        let config = GibbsConfig::new(6, 4, 5, uninformative_prior(2, 1, 1, 1), 1);
        let a = run_particle_gibbs(&config, &data).unwrap();
        let b = run_particle_gibbs(&config, &data).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.log_likelihood, b.log_likelihood);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let (_, data) = small_problem(5);
        let mut config = GibbsConfig::new(3, 5, 1, uninformative_prior(2, 1, 1, 1), 1);
        config.burn_in = 3;
        let err = run_particle_gibbs(&config, &data).unwrap_err();
        assert_eq!(err.iteration, 0);
        config.burn_in = 0;
        config.thin = 0;
        assert!(run_particle_gibbs(&config, &data).is_err());
    }

    #[test]
    fn constant_trace() {
        let d = trace_diagnostics(&[2.5; 50]);
        assert!(d.zero_variance);
        assert_eq!(d.ess, 50.0);
        assert_eq!(d.variance, 0.0);
    }

    #[test]
    fn white_noise_trace() {
        let mut rng = stream(12, 0);
        let values: Vec<f64> = standard_normal_vector(10_000, &mut rng)
            .iter()
            .copied()
            .collect();
        let d = trace_diagnostics(&values);
        assert!(d.autocorrelation[0].1.abs() < 3.0 / 100.0);
    }

    #[test]
    fn ar1_effective_sample_size() {
        let mut rng = stream(13, 0);
        let n = 200_000;
        let rho = 0.9;
        let noise = standard_normal_vector(n, &mut rng);
        let mut values = Vec::with_capacity(n);
        let mut v = 0.0;
        for e in noise.iter() {
            v = rho * v + e;
            values.push(v);
        }
        let d = trace_diagnostics(&values);
        let expected = (1.0 - rho) / (1.0 + rho);
        assert!((d.ess / n as f64 - expected).abs() < 0.3 * expected);
        assert!((d.autocorrelation[0].1 - rho).abs() < 0.01);
    }
}
