//! Reference systems and priors used by the tests, the CLI `preset`
//! command and the Python bindings.

use nalgebra::DMatrix;

use crate::analysis::controllable_canonical;
use crate::conjugate::PriorHyper;
use crate::model::{JmlsParams, ModelMatrices};

/// Two-mode SISO system with a scalar state.
pub fn univariate_two_mode() -> JmlsParams {
    JmlsParams::new(
        vec![
            ModelMatrices::scalar(0.4766, -1.207, 0.233, -0.8935, 1e-3, 0.0202, 0.0),
            ModelMatrices::scalar(-0.1721, 1.5330, -0.1922, 1.7449, 0.0340, 0.0439, 0.0),
        ],
        DMatrix::from_row_slice(2, 2, &[0.7, 0.5, 0.3, 0.5]),
    )
    .expect("reference system is well formed")
}

/// Transfer-function coefficients `(numerator, denominator)`, highest power
/// first, of the three modes of [`three_state_three_mode`].
pub const THREE_MODE_TRANSFER_FUNCTIONS: [([f64; 4], [f64; 4]); 3] = [
    (
        [217.4, 212.9, -0.003827, 4.603e-20],
        [1.0, -1.712, 0.9512, -1.481e-6],
    ),
    (
        [0.4184, 0.008764, 0.1669, -0.01542],
        [1.0, -2.374, 1.929, -0.5321],
    ),
    (
        [0.2728, -0.9506, 1.066, -0.3881],
        [1.0, -2.374, 1.929, -0.5321],
    ),
];

/// Process noise covariance used for every mode of [`three_state_three_mode`].
pub const THREE_MODE_PROCESS_NOISE: f64 = 1e-2;
/// Measurement noise variance used for every mode of [`three_state_three_mode`].
pub const THREE_MODE_MEASUREMENT_NOISE: f64 = 1e-1;

/// Three-mode SISO system with a three-dimensional state; each mode is the
/// controllable canonical realisation of its transfer function.
pub fn three_state_three_mode() -> JmlsParams {
    let models = THREE_MODE_TRANSFER_FUNCTIONS
        .iter()
        .map(|(num, den)| {
            let (a, b, c, d) = controllable_canonical(num, den);
            ModelMatrices::new(
                a,
                b,
                c,
                d,
                DMatrix::identity(3, 3) * THREE_MODE_PROCESS_NOISE,
                DMatrix::from_element(1, 1, THREE_MODE_MEASUREMENT_NOISE),
                DMatrix::zeros(3, 1),
            )
            .expect("canonical realisation is well formed")
        })
        .collect();
    JmlsParams::new(
        models,
        DMatrix::from_row_slice(3, 3, &[0.5, 0.25, 0.25, 0.25, 0.5, 0.25, 0.25, 0.25, 0.5]),
    )
    .expect("reference system is well formed")
}

/// Broad conjugate prior: `M = 0`, `V = 13 I`, `Λ = 1e-10 I`,
/// `ν = n_y + n_x` and `α = 1`.
pub fn uninformative_prior(m: usize, n_x: usize, n_u: usize, n_y: usize) -> PriorHyper {
    PriorHyper::uniform(
        m,
        DMatrix::zeros(n_y + n_x, n_x + n_u),
        DMatrix::identity(n_x + n_u, n_x + n_u) * 13.0,
        DMatrix::identity(n_y + n_x, n_y + n_x) * 1e-10,
        (n_y + n_x) as f64,
        DMatrix::from_element(m, m, 1.0),
    )
}
