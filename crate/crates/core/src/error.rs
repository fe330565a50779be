use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("measurement covariance R of model {model} is singular")]
    SingularMeasurementCovariance { model: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("filter degeneracy at step {step}")]
    FilterDegeneracy { step: usize },

    #[error("dead mixture at step {step}: every component weight is zero")]
    DeadMixture { step: usize },

    #[error("step {step}, model {model}, component {component}: {source}")]
    Component {
        step: usize,
        model: usize,
        component: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn at_component(self, step: usize, model: usize, component: usize) -> Self {
        Error::Component {
            step,
            model,
            component,
            source: Box::new(self),
        }
    }
}
