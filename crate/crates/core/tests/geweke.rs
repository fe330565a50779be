//! Successive-conditional simulation of the whole sampler: alternating a
//! sweep with a fresh draw of `y` from `p(y | x, z, θ)` leaves the prior on
//! `θ` invariant, so long-run moments must match the prior's.

use jmls::conjugate::{
    posterior_hyperparams, sample_parameters, sufficient_stats, PosteriorHyper, PriorHyper,
};
use jmls::filter::forward_filter;
use jmls::model::{simulate, Dataset, HybridPrior, JmlsParams};
use jmls::rng::stream;
use jmls::smoother::{sample_trajectory, Trajectory};
use nalgebra::{DMatrix, DVector};
use rand::RngExt;
use rand_distr::StandardNormal;

fn prior() -> PriorHyper {
    PriorHyper::uniform(
        2,
        DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.6, 0.5]),
        DMatrix::identity(2, 2) * 0.3,
        DMatrix::identity(2, 2) * 1.5,
        8.0,
        DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]),
    )
}

fn redraw_outputs<R: rand::Rng>(
    theta: &JmlsParams,
    traj: &Trajectory,
    u: &[DVector<f64>],
    rng: &mut R,
) -> Vec<DVector<f64>> {
    (0..u.len())
        .map(|k| {
            let m = &theta.models[traj.z[k]];
            let (x, next, uk) = (traj.x[k][0], traj.x[k + 1][0], u[k][0]);
            let (q, r, s) = (m.q[(0, 0)], m.r[(0, 0)], m.s[(0, 0)]);
            let w = next - m.a[(0, 0)] * x - m.b[(0, 0)] * uk;
            let mean = m.c[(0, 0)] * x + m.d[(0, 0)] * uk + s / q * w;
            let sd = (r - s * s / q).max(0.0).sqrt();
            let e: f64 = rng.sample(StandardNormal);
            DVector::from_element(1, mean + sd * e)
        })
        .collect()
}

fn statistics(theta: &JmlsParams) -> [f64; 9] {
    let (m1, m2) = (&theta.models[0], &theta.models[1]);
    [
        m1.a[(0, 0)],
        m1.c[(0, 0)],
        m2.d[(0, 0)],
        m2.b[(0, 0)],
        m1.a[(0, 0)].powi(2),
        m1.q[(0, 0)],
        m2.r[(0, 0)],
        m1.s[(0, 0)],
        theta.transition[(0, 0)],
    ]
}

#[test]
fn sweep_leaves_the_joint_distribution_invariant() {
    let names = [
        "A_1", "C_1", "D_2", "B_2", "A_1^2", "Q_1", "R_2", "S_1", "T_1_1",
    ];
    // Γ entries have variance E[Π_ii] V_jj = 0.09; E[Π] = Λ / (ν - 3).
    let expected = [0.6, 1.0, 0.5, 0.5, 0.45, 0.3, 0.3, 0.0, 2.0 / 3.0];

    let hyper = prior();
    let state_prior = HybridPrior::diffuse(2, 1);
    let (n, budget, sweeps, batches) = (6, 3, 100_000, 100);
    let mut rng = stream(31, 0);
    let u: Vec<DVector<f64>> = (0..n)
        .map(|_| DVector::from_element(1, rng.sample::<f64, _>(StandardNormal)))
        .collect();

    let mut theta =
        sample_parameters(&PosteriorHyper::from_prior(&hyper), 1, 1, 1, &mut rng).unwrap();
    let (x1, z1) = state_prior.sample(&mut rng).unwrap();
    let sim = simulate(&theta, &u, &x1, z1, &mut rng).unwrap();
    let mut data = Dataset::new(u.clone(), sim.y).unwrap();
    let mut conditioned = sim.z;

    let mut sums = vec![vec![0.0; names.len()]; batches];
    for sweep in 0..sweeps {
        let hist = forward_filter(
            &theta,
            &data,
            &state_prior,
            budget,
            Some(&conditioned),
            &mut rng,
        )
        .unwrap();
        let traj = sample_trajectory(&hist, &theta, &data, &mut rng).unwrap();
        let stats = sufficient_stats(&traj, &data, 2).unwrap();
        let post = posterior_hyperparams(&hyper, &stats).unwrap();
        theta = sample_parameters(&post, 1, 1, 1, &mut rng).unwrap();
        data = Dataset::new(u.clone(), redraw_outputs(&theta, &traj, &u, &mut rng)).unwrap();
        conditioned = traj.z;
        for (acc, v) in sums[sweep * batches / sweeps]
            .iter_mut()
            .zip(statistics(&theta))
        {
            *acc += v;
        }
    }

    let per_batch = (sweeps / batches) as f64;
    for (j, name) in names.iter().enumerate() {
        let means: Vec<f64> = sums.iter().map(|b| b[j] / per_batch).collect();
        let grand = means.iter().sum::<f64>() / batches as f64;
        let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
        let z = (grand - expected[j]) / (var / batches as f64).sqrt();
        assert!(
            z.abs() < 4.0,
            "{name}: chain mean {grand}, prior mean {}, z = {z}",
            expected[j]
        );
    }
}
