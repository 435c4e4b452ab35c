use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("horizon exhausted: need step {needed}, fiber has {available} steps")]
    HorizonExhausted { needed: usize, available: usize },

    #[error("budget exceeded: about {estimate:.3e} words requested, budget is {budget}")]
    BudgetExceeded { estimate: f64, budget: usize },

    #[error("inconsistent fiber: {0}")]
    InconsistentFiber(String),

    #[error("potential evaluated outside its domain at step {step}, symbol {symbol}, x = {x}")]
    DomainError { step: usize, symbol: u32, x: f64 },

    #[error("branch is not monotone: {0}")]
    NonMonotoneBranch(String),

    #[error("potential requires coarsening: {0}")]
    RequiresCoarsening(String),

    #[error("no sign change of the pressure for q = {q} within [{lo}, {hi}]")]
    BracketFailure { q: f64, lo: f64, hi: f64 },

    #[error("curve is not concave: second difference {excess:.3e} at node {index}")]
    NotConcave { index: usize, excess: f64 },

    #[error("weights too shallow: largest cell {max_len:.3e} is too coarse for radius {min_radius:.3e}")]
    TooShallowWeights { max_len: f64, min_radius: f64 },

    #[error("degenerate support: {0}")]
    DegenerateSupport(String),

    #[error("unsupported measure: {0}")]
    UnsupportedMeasure(String),

    #[error("contraction in the mean fails: c_psi = {c_psi}")]
    ContractionViolated { c_psi: f64 },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("scenario schema violation at `{path}`: {msg}")]
    Schema { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn schema(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Schema { path: path.into(), msg: msg.into() }
    }

    /// Short kebab-case tag, stable across releases; used in machine-readable reports.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "invalid-config",
            Error::HorizonExhausted { .. } => "horizon-exhausted",
            Error::BudgetExceeded { .. } => "budget-exceeded",
            Error::InconsistentFiber(_) => "inconsistent-fiber",
            Error::DomainError { .. } => "domain-error",
            Error::NonMonotoneBranch(_) => "non-monotone-branch",
            Error::RequiresCoarsening(_) => "requires-coarsening",
            Error::BracketFailure { .. } => "bracket-failure",
            Error::NotConcave { .. } => "not-concave",
            Error::TooShallowWeights { .. } => "too-shallow-weights",
            Error::DegenerateSupport(_) => "degenerate-support",
            Error::UnsupportedMeasure(_) => "unsupported-measure",
            Error::ContractionViolated { .. } => "contraction-violated",
            Error::UnknownScenario(_) => "unknown-scenario",
            Error::Schema { .. } => "schema",
            Error::Io(_) => "io",
        }
    }
}
