//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls the filter, smoother or reduction code of the crate;
//! only plain parameter and data types are shared.

#![allow(dead_code)]

use jmls::distributions::standard_normal_vector;
use jmls::model::{JmlsParams, ModelMatrices};
use jmls::rng::JmlsRng;
use jmls::Dataset;
use nalgebra::{DMatrix, DVector};
use rand::RngExt;

/// Log density of `N(x; mean, cov)` through an explicit inverse and
/// determinant.
pub fn log_normal_dense(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let n = x.len() as f64;
    let inv = cov.clone().try_inverse().expect("covariance is invertible");
    let r = x - mean;
    -0.5 * (n * (2.0 * std::f64::consts::PI).ln()
        + cov.determinant().ln()
        + (r.transpose() * inv * &r)[(0, 0)])
}

/// Output of the reference Kalman filter for one mode sequence.
pub struct KalmanTrace {
    pub filtered_means: Vec<DVector<f64>>,
    pub filtered_covs: Vec<DMatrix<f64>>,
    pub log_likelihood: f64,
}

/// Kalman filter on the correlated-noise model, conditioning the joint
/// Gaussian of `(x_k, y_k, x_{k+1})` directly: no decorrelation step.
/// `modes[k]` selects the mode used at step `k`.
pub fn kalman_reference(
    params: &JmlsParams,
    data: &Dataset,
    modes: &[usize],
    mean0: &DVector<f64>,
    cov0: &DMatrix<f64>,
) -> KalmanTrace {
    let nx = params.n_x();
    let ny = params.n_y();
    let mut mean = mean0.clone();
    let mut cov = cov0.clone();
    let mut out = KalmanTrace {
        filtered_means: Vec::new(),
        filtered_covs: Vec::new(),
        log_likelihood: 0.0,
    };
    for k in 0..data.len() {
        let m = &params.models[modes[k]];
        let gamma = m.gamma();
        let pi = m.pi();
        let g = gamma.columns(0, nx).into_owned();
        let h = gamma.columns(nx, m.n_u()).into_owned();
        // [y_k; x_{k+1}] given y_{1:k-1}
        let joint_mean = &g * &mean + &h * &data.u[k];
        let joint_cov = &g * &cov * g.transpose() + &pi;
        let my = joint_mean.rows(0, ny).into_owned();
        let syy = joint_cov.view((0, 0), (ny, ny)).into_owned();
        let sxy = joint_cov.view((ny, 0), (nx, ny)).into_owned();
        let mx = joint_mean.rows(ny, nx).into_owned();
        let sxx = joint_cov.view((ny, ny), (nx, nx)).into_owned();
        let syy_inv = syy
            .clone()
            .try_inverse()
            .expect("innovation covariance is invertible");
        out.log_likelihood += log_normal_dense(&data.y[k], &my, &syy);

        // x_k given y_{1:k}: Cov(x_k, y_k) = P Cᵀ
        let cxy = &cov * m.c.transpose();
        let f_mean = &mean + &cxy * &syy_inv * (&data.y[k] - &my);
        let f_cov = &cov - &cxy * &syy_inv * cxy.transpose();
        out.filtered_means.push(f_mean);
        out.filtered_covs.push(f_cov);

        mean = &mx + &sxy * &syy_inv * (&data.y[k] - &my);
        cov = &sxx - &sxy * &syy_inv * sxy.transpose();
        cov = (&cov + cov.transpose()) * 0.5;
    }
    out
}

/// Conditional moments of a state given a prefix of the outputs, and the
/// log evidence of that prefix, for one mode sequence.
pub struct DenseMoments {
    pub log_evidence: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Moments of `x_k` given `y_{1:k}` (one-based `k`) from the stacked joint
/// Gaussian; see [`dense_moments`].
pub fn dense_sequence_moments(
    params: &JmlsParams,
    data: &Dataset,
    modes: &[usize],
    mean0: &DVector<f64>,
    cov0: &DMatrix<f64>,
    k: usize,
) -> DenseMoments {
    dense_moments(params, data, modes, mean0, cov0, k, k)
}

/// Writes every `y_j` (`j <= observed`) and `x_state` (both one-based) as an
/// affine map of the latent vector `e = [x_1; w_1; w_2; …]` and conditions
/// by dense linear algebra. `modes[j]` is the mode of step `j + 1`.
pub fn dense_moments(
    params: &JmlsParams,
    data: &Dataset,
    modes: &[usize],
    mean0: &DVector<f64>,
    cov0: &DMatrix<f64>,
    state: usize,
    observed: usize,
) -> DenseMoments {
    let nx = params.n_x();
    let ny = params.n_y();
    let nw = nx + ny;
    let steps = observed.max(state - 1);
    let dim = nx + steps * nw;
    let mut e_mean = DVector::zeros(dim);
    let mut e_cov = DMatrix::zeros(dim, dim);
    e_mean.rows_mut(0, nx).copy_from(mean0);
    e_cov.view_mut((0, 0), (nx, nx)).copy_from(cov0);
    for j in 0..steps {
        let pi = params.models[modes[j]].pi();
        e_cov
            .view_mut((nx + j * nw, nx + j * nw), (nw, nw))
            .copy_from(&pi);
    }
    // x_{j+1} = xmap e + xc
    let mut xmap = DMatrix::zeros(nx, dim);
    xmap.view_mut((0, 0), (nx, nx))
        .copy_from(&DMatrix::identity(nx, nx));
    let mut xc = DVector::zeros(nx);
    let mut ymap = DMatrix::zeros(observed * ny, dim);
    let mut yc = DVector::zeros(observed * ny);
    let mut state_map = xmap.clone();
    let mut state_c = xc.clone();
    for j in 0..steps {
        let m: &ModelMatrices = &params.models[modes[j]];
        if j + 1 == state {
            state_map.clone_from(&xmap);
            state_c.clone_from(&xc);
        }
        if j < observed {
            let mut yrow = &m.c * &xmap;
            let mut wsel_y = DMatrix::zeros(ny, dim);
            wsel_y
                .view_mut((0, nx + j * nw), (ny, ny))
                .copy_from(&DMatrix::identity(ny, ny));
            yrow += wsel_y;
            ymap.view_mut((j * ny, 0), (ny, dim)).copy_from(&yrow);
            yc.rows_mut(j * ny, ny)
                .copy_from(&(&m.c * &xc + &m.d * &data.u[j]));
        }
        let mut wsel_x = DMatrix::zeros(nx, dim);
        wsel_x
            .view_mut((0, nx + j * nw + ny), (nx, nx))
            .copy_from(&DMatrix::identity(nx, nx));
        let next_map = &m.a * &xmap + wsel_x;
        let next_c = &m.a * &xc + &m.b * &data.u[j];
        xmap = next_map;
        xc = next_c;
    }
    if state == steps + 1 {
        state_map = xmap;
        state_c = xc;
    }
    let y_obs = DVector::from_iterator(
        observed * ny,
        (0..observed).flat_map(|j| data.y[j].iter().copied()),
    );
    let y_mean = &ymap * &e_mean + &yc;
    let y_cov = &ymap * &e_cov * ymap.transpose();
    let x_mean = &state_map * &e_mean + &state_c;
    let x_cov = &state_map * &e_cov * state_map.transpose();
    let xy_cov = &state_map * &e_cov * ymap.transpose();
    let y_inv = y_cov
        .clone()
        .try_inverse()
        .expect("stacked output covariance is invertible");
    DenseMoments {
        log_evidence: log_normal_dense(&y_obs, &y_mean, &y_cov),
        mean: &x_mean + &xy_cov * &y_inv * (&y_obs - &y_mean),
        cov: &x_cov - &xy_cov * &y_inv * xy_cov.transpose(),
    }
}

/// Every sequence in `{0..m}^len`, in lexicographic order.
pub fn all_sequences(m: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|s| {
                (0..m).map(move |z| {
                    let mut t = s.clone();
                    t.push(z);
                    t
                })
            })
            .collect();
    }
    out
}

/// `log p(z_{1:len})` under the mode chain with initial probabilities `p0`.
pub fn log_sequence_prior(params: &JmlsParams, p0: &[f64], z: &[usize]) -> f64 {
    let mut lp = p0[z[0]].ln();
    for w in z.windows(2) {
        lp += params.transition[(w[1], w[0])].ln();
    }
    lp
}

/// Random stable scalar-input, scalar-output system with `m` modes and
/// `n_x` states; `S` is nonzero when `correlated`.
pub fn random_system(rng: &mut JmlsRng, m: usize, nx: usize, correlated: bool) -> JmlsParams {
    let models = (0..m)
        .map(|_| {
            let raw = DMatrix::from_fn(nx, nx, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let radius = raw
                .complex_eigenvalues()
                .iter()
                .map(|c| c.norm())
                .fold(0.0, f64::max);
            let a = raw * (0.9 / radius.max(1e-3)) * rng.random::<f64>();
            let b = DMatrix::from_fn(nx, 1, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let c = DMatrix::from_fn(1, nx, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let d = DMatrix::from_element(1, 1, rng.random::<f64>() - 0.5);
            let l = DMatrix::from_fn(nx + 1, nx + 1, |r, col| {
                if r == col {
                    0.3 + rng.random::<f64>()
                } else if r > col && correlated {
                    0.3 * (rng.random::<f64>() - 0.5)
                } else {
                    0.0
                }
            });
            let pi = &l * l.transpose();
            ModelMatrices::new(
                a,
                b,
                c,
                d,
                pi.view((1, 1), (nx, nx)).into_owned(),
                pi.view((0, 0), (1, 1)).into_owned(),
                pi.view((1, 0), (nx, 1)).into_owned(),
            )
            .unwrap()
        })
        .collect();
    let mut t = DMatrix::from_fn(m, m, |_, _| 0.2 + rng.random::<f64>());
    for j in 0..m {
        let s = t.column(j).sum();
        t.column_mut(j).scale_mut(1.0 / s);
    }
    JmlsParams::new(models, t).unwrap()
}

/// Simulates `n` steps of `params` from `x_1 = 0`, `z_1 = 0` with
/// `u_k ~ N(0, 1)`.
pub fn random_data(params: &JmlsParams, n: usize, rng: &mut JmlsRng) -> Dataset {
    let u: Vec<DVector<f64>> = (0..n)
        .map(|_| standard_normal_vector(params.n_u(), rng))
        .collect();
    let sim = jmls::model::simulate(params, &u, &DVector::zeros(params.n_x()), 0, rng).unwrap();
    Dataset::new(u, sim.y).unwrap()
}

/// Solves `K = Σ min(c W_i, 1)` for `c` by bisection and counts the
/// weights with `W_i ≥ 1/c`.
pub fn threshold_by_bisection(weights: &[f64], k: usize) -> usize {
    let f = |c: f64| weights.iter().map(|w| (c * w).min(1.0)).sum::<f64>();
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while f(hi) < k as f64 {
        hi *= 2.0;
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < k as f64 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = hi;
    weights.iter().filter(|w| **w * c >= 1.0).count()
}

/// Pearson chi-square statistic after pooling cells whose expected count
/// is below 5 into one cell. Returns `(statistic, degrees of freedom)`.
pub fn pooled_chi_square(observed: &[f64], expected: &[f64]) -> (f64, usize) {
    let mut stat = 0.0;
    let mut cells: usize = 0;
    let (mut pool_o, mut pool_e) = (0.0, 0.0);
    for (o, e) in observed.iter().zip(expected) {
        if *e < 5.0 {
            pool_o += o;
            pool_e += e;
        } else {
            stat += (o - e).powi(2) / e;
            cells += 1;
        }
    }
    if pool_e > 0.0 {
        stat += (pool_o - pool_e).powi(2) / pool_e;
        cells += 1;
    }
    (stat, cells.saturating_sub(1))
}
