use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("user index {index} out of range for {n_users} users")]
    UserIndex { index: usize, n_users: usize },

    #[error("infeasible power profile: {0}")]
    Infeasible(String),

    #[error("user {user} is not budget-tight: allocates {allocated} of {budget}")]
    SlackBudget {
        user: usize,
        allocated: f64,
        budget: f64,
    },

    #[error("power mask admits only {capacity} but the budget is {budget}")]
    InfeasibleMask { capacity: f64, budget: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid step schedule: {0}")]
    InvalidSchedule(String),

    #[error("{what} did not converge (best achieved {best:e})")]
    NotConverged { what: &'static str, best: f64 },

    #[error("profile is not an equilibrium: residual {residual:e} exceeds {tol:e}")]
    NotEquilibrium { residual: f64, tol: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("replicate with seed {seed} failed: {source}")]
    Replicate {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
