//! The JMLS parameter object and the operations defined directly on it:
//! validation, simulation and the cross-covariance (decorrelation)
//! transform used by the filter and smoother.
//!
//! Mode indices are zero-based in code; files and user-facing messages
//! use one-based indices.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::distributions::{sample_categorical, sample_mvn};
use crate::error::{Error, Result};
use crate::linalg::{self, hstack, symmetrized, vcat, vstack};

/// Column-sum tolerance used by [`validate_params`].
pub const COLUMN_SUM_TOL: f64 = 1e-9;

/// One mode of the switched system in split form.
///
/// The stacked `Γ = [[C, D], [A, B]]` and `Π = [[R, Sᵀ], [S, Q]]` are built on
/// demand by [`ModelMatrices::gamma`] and [`ModelMatrices::pi`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMatrices {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    /// Cross covariance between the process and measurement noise, `n_x x n_y`.
    pub s: DMatrix<f64>,
}

impl ModelMatrices {
    /// Checks the shapes against each other and symmetrises `Q` and `R`.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        s: DMatrix<f64>,
    ) -> Result<Self> {
        let m = Self {
            a,
            b,
            c,
            d,
            q: symmetrized(q),
            r: symmetrized(r),
            s,
        };
        if let Some(problem) = m.dimension_problem() {
            return Err(Error::Dimension(problem));
        }
        Ok(m)
    }

    /// Single-state, single-input, single-output mode.
    pub fn scalar(a: f64, b: f64, c: f64, d: f64, q: f64, r: f64, s: f64) -> Self {
        let one = |v| DMatrix::from_element(1, 1, v);
        Self {
            a: one(a),
            b: one(b),
            c: one(c),
            d: one(d),
            q: one(q),
            r: one(r),
            s: one(s),
        }
    }

    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.c.nrows()
    }

    fn dimension_problem(&self) -> Option<String> {
        let (nx, nu, ny) = (self.n_x(), self.n_u(), self.n_y());
        let checks = [
            ("A", self.a.shape(), (nx, nx)),
            ("B", self.b.shape(), (nx, nu)),
            ("C", self.c.shape(), (ny, nx)),
            ("D", self.d.shape(), (ny, nu)),
            ("Q", self.q.shape(), (nx, nx)),
            ("R", self.r.shape(), (ny, ny)),
            ("S", self.s.shape(), (nx, ny)),
        ];
        checks
            .iter()
            .find(|(_, got, want)| got != want)
            .map(|(name, got, want)| {
                format!(
                    "{name} is {}x{}, expected {}x{}",
                    got.0, got.1, want.0, want.1
                )
            })
    }

    /// `Γ = [[C, D], [A, B]]`, of shape `(n_y + n_x) x (n_x + n_u)`.
    pub fn gamma(&self) -> DMatrix<f64> {
        vstack(&hstack(&self.c, &self.d), &hstack(&self.a, &self.b))
    }

    /// `Π = [[R, Sᵀ], [S, Q]]`, of shape `(n_y + n_x)²`.
    pub fn pi(&self) -> DMatrix<f64> {
        vstack(
            &hstack(&self.r, &self.s.transpose()),
            &hstack(&self.s, &self.q),
        )
    }

    /// Splits stacked `Γ` and `Π` back into their blocks.
    pub fn from_blocks(
        gamma: &DMatrix<f64>,
        pi: &DMatrix<f64>,
        n_x: usize,
        n_u: usize,
        n_y: usize,
    ) -> Result<Self> {
        if gamma.shape() != (n_y + n_x, n_x + n_u) || pi.shape() != (n_y + n_x, n_y + n_x) {
            return Err(Error::Dimension(format!(
                "Γ {:?} and Π {:?} do not match n_x={n_x}, n_u={n_u}, n_y={n_y}",
                gamma.shape(),
                pi.shape()
            )));
        }
        Self::new(
            gamma.view((n_y, 0), (n_x, n_x)).into_owned(),
            gamma.view((n_y, n_x), (n_x, n_u)).into_owned(),
            gamma.view((0, 0), (n_y, n_x)).into_owned(),
            gamma.view((0, n_x), (n_y, n_u)).into_owned(),
            pi.view((n_y, n_y), (n_x, n_x)).into_owned(),
            pi.view((0, 0), (n_y, n_y)).into_owned(),
            pi.view((n_y, 0), (n_x, n_y)).into_owned(),
        )
    }
}

/// `θ = {T, {Γ_i, Π_i}}`: the modes and the column-stochastic transition
/// matrix, `T[i, j] = P(z_{k+1} = i | z_k = j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JmlsParams {
    pub models: Vec<ModelMatrices>,
    pub transition: DMatrix<f64>,
}

impl JmlsParams {
    /// Builds the parameter object after checking the structural shape
    /// (`m >= 1`, `T` is `m x m`, shared dimensions). Numerical validity is
    /// reported separately by [`validate_params`].
    pub fn new(models: Vec<ModelMatrices>, transition: DMatrix<f64>) -> Result<Self> {
        let m = models.len();
        if m == 0 {
            return Err(Error::InvalidParams(
                "at least one model is required".into(),
            ));
        }
        if transition.shape() != (m, m) {
            return Err(Error::Dimension(format!(
                "transition matrix is {:?} but there are {m} models",
                transition.shape()
            )));
        }
        let first = &models[0];
        for (i, model) in models.iter().enumerate() {
            if let Some(problem) = model.dimension_problem() {
                return Err(Error::Dimension(format!("model {}: {problem}", i + 1)));
            }
            if (model.n_x(), model.n_u(), model.n_y()) != (first.n_x(), first.n_u(), first.n_y()) {
                return Err(Error::Dimension(format!(
                    "model {} dimensions differ from model 1",
                    i + 1
                )));
            }
        }
        Ok(Self { models, transition })
    }

    pub fn num_models(&self) -> usize {
        self.models.len()
    }

    pub fn n_x(&self) -> usize {
        self.models[0].n_x()
    }

    pub fn n_u(&self) -> usize {
        self.models[0].n_u()
    }

    pub fn n_y(&self) -> usize {
        self.models[0].n_y()
    }

    /// Reorders the modes: new mode `r` is old mode `perm[r]`, and
    /// `T` is permuted consistently (`Pᵀ T P`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let m = self.num_models();
        assert_eq!(perm.len(), m);
        let models = perm.iter().map(|&p| self.models[p].clone()).collect();
        let transition = DMatrix::from_fn(m, m, |r, s| self.transition[(perm[r], perm[s])]);
        Self { models, transition }
    }

    /// Stationary distribution of the mode chain, by power iteration.
    pub fn stationary_distribution(&self) -> DVector<f64> {
        let m = self.num_models();
        let mut p = DVector::from_element(m, 1.0 / m as f64);
        for _ in 0..10_000 {
            let next = &self.transition * &p;
            let done = (&next - &p).amax() < 1e-15;
            p = next;
            if done {
                break;
            }
        }
        let total = p.sum();
        p / total
    }
}

/// A problem found by [`validate_params`]. Indices are zero-based; the
/// `Display` output is one-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    ColumnSum {
        column: usize,
        sum: f64,
    },
    NegativeTransition {
        row: usize,
        column: usize,
        value: f64,
    },
    NonFinite {
        model: Option<usize>,
    },
    NoiseNotPsd {
        model: usize,
        min_eigenvalue: f64,
    },
    MeasurementNotPd {
        model: usize,
    },
    Dimension {
        model: usize,
        detail: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ColumnSum { column, sum } => write!(f, "column {} sums to {}", column + 1, (sum * 1e12).round() / 1e12),
            Violation::NegativeTransition { row, column, value } => {
                write!(f, "transition entry ({}, {}) is negative: {value}", row + 1, column + 1)
            }
            Violation::NonFinite { model: Some(i) } => write!(f, "model {} has non-finite entries", i + 1),
            Violation::NonFinite { model: None } => write!(f, "transition matrix has non-finite entries"),
            Violation::NoiseNotPsd { model, min_eigenvalue } => write!(
                f,
                "noise covariance of model {} is not positive semi-definite (min eigenvalue {min_eigenvalue})",
                model + 1
            ),
            Violation::MeasurementNotPd { model } => {
                write!(f, "measurement covariance R of model {} is not positive definite", model + 1)
            }
            Violation::Dimension { model, detail } => write!(f, "model {}: {detail}", model + 1),
        }
    }
}

/// Reports every violated constraint; an empty list means the parameters
/// are usable.
pub fn validate_params(params: &JmlsParams) -> Vec<Violation> {
    let mut out = Vec::new();
    let t = &params.transition;
    if t.iter().any(|v| !v.is_finite()) {
        out.push(Violation::NonFinite { model: None });
    } else {
        for j in 0..t.ncols() {
            for i in 0..t.nrows() {
                if t[(i, j)] < 0.0 {
                    out.push(Violation::NegativeTransition {
                        row: i,
                        column: j,
                        value: t[(i, j)],
                    });
                }
            }
            let sum = t.column(j).sum();
            if (sum - 1.0).abs() > COLUMN_SUM_TOL {
                out.push(Violation::ColumnSum { column: j, sum });
            }
        }
    }
    let (nx, nu, ny) = (params.n_x(), params.n_u(), params.n_y());
    for (i, model) in params.models.iter().enumerate() {
        if let Some(detail) = model.dimension_problem() {
            out.push(Violation::Dimension { model: i, detail });
            continue;
        }
        if (model.n_x(), model.n_u(), model.n_y()) != (nx, nu, ny) {
            out.push(Violation::Dimension {
                model: i,
                detail: "dimensions differ from model 1".into(),
            });
            continue;
        }
        let finite = [
            &model.a, &model.b, &model.c, &model.d, &model.q, &model.r, &model.s,
        ]
        .iter()
        .all(|m| m.iter().all(|v| v.is_finite()));
        if !finite {
            out.push(Violation::NonFinite { model: Some(i) });
            continue;
        }
        let pi = model.pi();
        let min_eig = linalg::min_eigenvalue(&pi);
        if min_eig < -linalg::PSD_TOL * pi.norm() {
            out.push(Violation::NoiseNotPsd {
                model: i,
                min_eigenvalue: min_eig,
            });
        }
        if model.r.clone().cholesky().is_none() {
            out.push(Violation::MeasurementNotPd { model: i });
        }
    }
    out
}

fn ensure_valid(params: &JmlsParams) -> Result<()> {
    let violations = validate_params(params);
    if violations.is_empty() {
        Ok(())
    } else {
        let text: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        Err(Error::InvalidParams(text.join("; ")))
    }
}

/// Input/output record `u_{1:N}`, `y_{1:N}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub u: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
}

impl Dataset {
    pub fn new(u: Vec<DVector<f64>>, y: Vec<DVector<f64>>) -> Result<Self> {
        if u.len() != y.len() {
            return Err(Error::Dimension(format!(
                "{} inputs but {} outputs",
                u.len(),
                y.len()
            )));
        }
        if y.is_empty() {
            return Err(Error::InvalidArgument(
                "dataset must contain at least one time step".into(),
            ));
        }
        let (nu, ny) = (u[0].len(), y[0].len());
        if u.iter().any(|v| v.len() != nu) || y.iter().any(|v| v.len() != ny) {
            return Err(Error::Dimension(
                "input or output dimension changes over time".into(),
            ));
        }
        Ok(Self { u, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_u(&self) -> usize {
        self.u[0].len()
    }

    pub fn n_y(&self) -> usize {
        self.y[0].len()
    }

    /// `ū_k = [u_k; y_k]`, the input of the decorrelated system.
    pub fn augmented_input(&self, k: usize) -> DVector<f64> {
        vcat(&self.u[k], &self.y[k])
    }
}

/// One Gaussian term of the initial hybrid state distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorComponent {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// `p(x_1, z_1)` as a Gaussian mixture per mode; the weights across all
/// modes sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridPrior {
    pub per_model: Vec<Vec<PriorComponent>>,
}

impl HybridPrior {
    /// One component per mode with weight `1/m`, zero mean and `10 I`
    /// covariance.
    pub fn diffuse(m: usize, n_x: usize) -> Self {
        let comp = PriorComponent {
            weight: 1.0 / m as f64,
            mean: DVector::zeros(n_x),
            cov: DMatrix::identity(n_x, n_x) * 10.0,
        };
        Self {
            per_model: vec![vec![comp]; m],
        }
    }

    pub fn validate(&self, m: usize, n_x: usize) -> Result<()> {
        if self.per_model.len() != m {
            return Err(Error::Dimension(format!(
                "state prior covers {} models, expected {m}",
                self.per_model.len()
            )));
        }
        let mut total = 0.0;
        for comp in self.per_model.iter().flatten() {
            if !(comp.weight >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "state prior weight {} is negative",
                    comp.weight
                )));
            }
            if comp.mean.len() != n_x || comp.cov.shape() != (n_x, n_x) {
                return Err(Error::Dimension(
                    "state prior component does not match n_x".into(),
                ));
            }
            if comp.cov.clone().cholesky().is_none() {
                return Err(Error::NotPositiveDefinite("state prior covariance".into()));
            }
            total += comp.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "state prior weights sum to {total}, expected 1"
            )));
        }
        Ok(())
    }

    /// Draws an initial hybrid state `(x_1, z_1)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(DVector<f64>, usize)> {
        let flat: Vec<(usize, &PriorComponent)> = self
            .per_model
            .iter()
            .enumerate()
            .flat_map(|(z, comps)| comps.iter().map(move |c| (z, c)))
            .collect();
        let weights: Vec<f64> = flat.iter().map(|(_, c)| c.weight).collect();
        let idx = sample_categorical(&weights, rng)?;
        let (z, comp) = flat[idx];
        Ok((sample_mvn(&comp.mean, &comp.cov, rng), z))
    }
}

/// Output of [`simulate`]: `y` has `N` entries, `x` and `z` have `N + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub y: Vec<DVector<f64>>,
    pub x: Vec<DVector<f64>>,
    pub z: Vec<usize>,
}

/// Simulates the switched system from `(x_1, z_1)` over the given inputs.
///
/// Per step the noise `w_k ~ N(0, Π_{z_k})` is drawn first, then
/// `z_{k+1}` from column `z_k` of `T`.
pub fn simulate<R: Rng + ?Sized>(
    params: &JmlsParams,
    inputs: &[DVector<f64>],
    x1: &DVector<f64>,
    z1: usize,
    rng: &mut R,
) -> Result<Simulation> {
    ensure_valid(params)?;
    let (nx, nu, ny) = (params.n_x(), params.n_u(), params.n_y());
    if x1.len() != nx || z1 >= params.num_models() {
        return Err(Error::InvalidArgument(
            "initial hybrid state does not match the parameters".into(),
        ));
    }
    if let Some(u) = inputs.iter().find(|u| u.len() != nu) {
        return Err(Error::Dimension(format!(
            "input of length {} but n_u = {nu}",
            u.len()
        )));
    }
    let gammas: Vec<DMatrix<f64>> = params.models.iter().map(|m| m.gamma()).collect();
    let noise_factors: Vec<DMatrix<f64>> = params
        .models
        .iter()
        .map(|m| linalg::covariance_factor(&m.pi()))
        .collect();
    let columns: Vec<Vec<f64>> = (0..params.num_models())
        .map(|j| {
            let col = params.transition.column(j);
            let total = col.sum();
            col.iter().map(|v| v / total).collect()
        })
        .collect();

    let n = inputs.len();
    let mut x = Vec::with_capacity(n + 1);
    let mut z = Vec::with_capacity(n + 1);
    let mut y = Vec::with_capacity(n);
    x.push(x1.clone());
    z.push(z1);
    for (k, u) in inputs.iter().enumerate() {
        let zk = z[k];
        let w = &noise_factors[zk] * crate::distributions::standard_normal_vector(ny + nx, rng);
        let out = &gammas[zk] * vcat(&x[k], u) + w;
        y.push(out.rows(0, ny).into_owned());
        x.push(out.rows(ny, nx).into_owned());
        z.push(sample_categorical(&columns[zk], rng)?);
    }
    Ok(Simulation { y, x, z })
}

/// A mode rewritten so that its process and measurement noise are
/// uncorrelated. It is driven by `ū_k = [u_k; y_k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecorrelatedModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

/// Removes the cross covariance `S` from every mode:
///
/// ```text
/// Ā = A − S R⁻¹ C        B̄ = [B − S R⁻¹ D,  S R⁻¹]
/// C̄ = C                  D̄ = [D, 0]
/// Q̄ = Q − S R⁻¹ Sᵀ       R̄ = R
/// ```
pub fn decorrelate(params: &JmlsParams) -> Result<Vec<DecorrelatedModel>> {
    params
        .models
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let chol =
                m.r.clone()
                    .cholesky()
                    .ok_or(Error::SingularMeasurementCovariance { model: i + 1 })?;
            // S R⁻¹ = (R⁻¹ Sᵀ)ᵀ since R is symmetric.
            let sr = chol.solve(&m.s.transpose()).transpose();
            let ny = m.n_y();
            Ok(DecorrelatedModel {
                a: &m.a - &sr * &m.c,
                b: hstack(&(&m.b - &sr * &m.d), &sr),
                c: m.c.clone(),
                d: hstack(&m.d, &DMatrix::zeros(ny, ny)),
                q: symmetrized(&m.q - &sr * m.s.transpose()),
                r: m.r.clone(),
            })
        })
        .collect()
}

/// Decorrelated modes together with `log T`, as consumed by the filter and
/// the backward sampler.
#[derive(Debug, Clone)]
pub struct DecorrelatedParams {
    pub models: Vec<DecorrelatedModel>,
    pub log_transition: DMatrix<f64>,
}

impl DecorrelatedParams {
    pub fn new(params: &JmlsParams) -> Result<Self> {
        Ok(Self {
            models: decorrelate(params)?,
            log_transition: params.transition.map(f64::ln),
        })
    }

    pub fn num_models(&self) -> usize {
        self.models.len()
    }
}
