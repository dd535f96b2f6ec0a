use thiserror::Error;

/// Errors raised anywhere in the analysis pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty group")]
    EmptyGroup,

    #[error("invalid weight {0}: must lie in (0, 1]")]
    InvalidWeight(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate group variance")]
    DegenerateVariance,

    #[error("degenerate draws")]
    DegenerateDraws,

    #[error("degenerate test: both arms have zero variance")]
    DegenerateTest,

    #[error("MCMC initialization failed")]
    McmcInit,

    #[error(
        "quadrature budget exhausted after {evals} evaluations: \
         log estimate {log_estimate}, relative error bound {rel_error}"
    )]
    QuadratureBudget {
        log_estimate: f64,
        rel_error: f64,
        evals: usize,
    },

    #[error("both prior model masses are zero")]
    ZeroPriorMass,

    #[error("step {step}: {source}")]
    Step {
        step: u8,
        #[source]
        source: Box<Error>,
    },

    #[error("{failed} of {total} replications failed; aborting study")]
    TooManyFailures { failed: usize, total: usize },
}

impl Error {
    pub(crate) fn at_step(self, step: u8) -> Error {
        match self {
            e @ Error::Step { .. } => e,
            other => Error::Step {
                step,
                source: Box::new(other),
            },
        }
    }

    /// True for errors produced by the numerical engines rather than by bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Step { source, .. } => source.is_numerical(),
            Error::McmcInit
            | Error::QuadratureBudget { .. }
            | Error::DegenerateDraws
            | Error::TooManyFailures { .. } => true,
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
