//! Bayesian parameter identification for jump Markov linear systems.
//!
//! A jump Markov linear system (JMLS) switches between `m` linear-Gaussian
//! state-space modes according to a Markov chain:
//!
//! ```text
//! [y_k; x_{k+1}] = Γ_{z_k} [x_k; u_k] + w_k,    w_k ~ N(0, Π_{z_k})
//! P(z_{k+1} = i | z_k = j) = T[i, j]
//! ```
//!
//! The crate draws samples from `p(θ | y_{1:N})` with a particle-Gibbs
//! sampler. Each sweep runs a conditional hybrid forward filter whose
//! mixture is kept bounded by a discrete-particle-filter reduction that
//! never drops the previously sampled mode sequence, samples a hybrid
//! trajectory backwards through the stored filter output, and then draws
//! fresh parameters from the conjugate Matrix-Normal / Inverse-Wishart /
//! Dirichlet posterior.
//!
//! Module map:
//! - [`model`]: parameter object, validation, simulation, cross-covariance removal
//! - [`distributions`]: densities and exact samplers
//! - [`filter`]: per-component Kalman steps and the conditional forward filter
//! - [`dpf`]: threshold, systematic sampling and ancestor-preserving reduction
//! - [`smoother`]: backward trajectory sampling
//! - [`conjugate`]: sufficient statistics and posterior hyperparameters
//! - [`gibbs`]: the particle-Gibbs driver and chain diagnostics
//! - [`analysis`]: frequency responses, relabelling and posterior summaries
//! - [`io`]: file formats and the command implementations behind the CLI

pub mod analysis;
pub mod benchmarks;
pub mod conjugate;
pub mod distributions;
pub mod dpf;
pub mod error;
pub mod filter;
pub mod gibbs;
pub mod io;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod smoother;

pub use error::{Error, Result};
pub use model::{Dataset, DecorrelatedModel, HybridPrior, JmlsParams, ModelMatrices};
