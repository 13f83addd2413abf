use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("service `{id}`: ramp duration must be strictly positive, got {value}")]
    NonPositiveRamp { id: String, value: f64 },

    #[error("service `{id}`: activation delay must be non-negative, got {value}")]
    NegativeDelay { id: String, value: f64 },

    #[error("service `{id}`: allocation {allocation} MW outside [0, {capacity}]")]
    AllocationOutOfBounds { id: String, allocation: f64, capacity: f64 },

    #[error("invalid {field}: {reason}")]
    InvalidInput { field: String, reason: String },

    #[error("portfolio has no frequency-response services")]
    EmptyPortfolio,

    #[error("total inertia H + H_D is zero")]
    ZeroInertia,

    #[error("steady-state infeasible: total FR {total_fr} MW below the {p_loss} MW loss")]
    SteadyStateInfeasible { total_fr: f64, p_loss: f64 },

    #[error("probability {0} outside the open interval (0, 1)")]
    ProbabilityOutOfRange(f64),

    #[error("variable `{variable}` needs finite bounds to derive a big-M constant")]
    UnboundedBigM { variable: String },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("interior-point failure: {reason}\n{trace}")]
    NumericalFailure { reason: String, trace: String },

    #[error("branch-and-bound node limit {limit} reached")]
    NodeLimit { limit: usize },

    #[error("time step {dt} s exceeds one tenth of the smallest lag constant {min_tau} s")]
    StepTooLarge { dt: f64, min_tau: f64 },

    #[error("simulated nadir {simulated} Hz deeper than closed-form {analytic} Hz (provider `{provider}`)")]
    NotConservative { provider: String, simulated: f64, analytic: f64 },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidInput { field: field.into(), reason: reason.into() }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
