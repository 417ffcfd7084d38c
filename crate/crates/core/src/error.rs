use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Every variant except [`Error::Io`], [`Error::Csv`] and [`Error::Json`] is a
/// validation failure: the caller supplied inputs that violate a precondition.
#[derive(Debug, Error)]
pub enum Error {
    // design
    #[error("randomization point set is empty")]
    EmptyPoints,
    #[error("first randomization point must be period 1, got {0}")]
    FirstPointNotOne(usize),
    #[error("randomization point {point} is outside [1, {horizon}]")]
    OutOfRange { point: usize, horizon: usize },
    #[error("randomization points must be strictly increasing ({prev} then {next})")]
    NotStrictlyIncreasing { prev: usize, next: usize },
    #[error("horizon must be positive")]
    ZeroHorizon,
    #[error("path has length {got}, design horizon is {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("{coins} coins exceed the enumeration cap of {cap}")]
    TooManyCoins { coins: usize, cap: usize },
    #[error("period {t} is outside [1, {horizon}]")]
    PeriodOutOfRange { t: usize, horizon: usize },
    #[error("window of order {p} ending at period {t} starts before period 1")]
    WindowUnderflow { t: usize, p: usize },
    #[error("invalid assignment path character {0:?}")]
    BadPathChar(char),

    // outcomes
    #[error("no potential outcome stored for period {t} under window {window}")]
    MissingEntry { t: usize, window: String },
    #[error("outcome bound must be positive, got {0}")]
    NonpositiveBound(f64),
    #[error("outcome {value} at period {t} exceeds the declared bound {bound}")]
    BoundViolated { t: usize, value: f64, bound: f64 },
    #[error("assumed order {p} is below the true carryover order {m}")]
    OrderTooSmall { p: usize, m: usize },
    #[error("assumed order {p} exceeds the true carryover order {m}; use the lag-p estimand")]
    OrderNotUnderestimated { p: usize, m: usize },
    #[error("assumed order {p} leaves no estimable periods in horizon {horizon}")]
    OrderTooLarge { p: usize, horizon: usize },
    #[error("oracle horizon {oracle} does not match design horizon {design}")]
    HorizonMismatch { design: usize, oracle: usize },
    #[error("invalid model configuration: {0}")]
    ModelConfig(String),

    // optimal design
    #[error("risk enumeration needs assumed order >= true order (p = {p}, m = {m})")]
    OrderMismatch { p: usize, m: usize },
    #[error("design is not persistent for order {m}")]
    NotPersistent { m: usize },
    #[error("horizon {horizon} is shorter than 2m + 2 = {min} for order {m}")]
    HorizonTooShort { horizon: usize, m: usize, min: usize },
    #[error("horizon {horizon} exceeds the brute-force limit of {max}")]
    HorizonTooLarge { horizon: usize, max: usize },
    #[error("replication count must be at least 1")]
    ZeroReplications,

    // estimation
    #[error("assignment path has zero probability under the design")]
    InvalidPath,
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    // inference
    #[error("variance must be positive, got {0}")]
    ZeroVariance(f64),
    #[error("confidence level must lie in (0, 1), got {0}")]
    BadLevel(f64),
    #[error("confidence grid is empty")]
    EmptyGrid,
    #[error("confidence grid must be sorted")]
    UnsortedGrid,
    #[error("no grid point was accepted by the inverted test")]
    NoPointAccepted,
    #[error("orders must increase: p1 = {p1}, p2 = {p2}")]
    OrderNotIncreasing { p1: usize, p2: usize },
    #[error("order search needs at least two candidate orders")]
    TooFewCandidates,
    #[error("experiment runner failed for order {p}: {message}")]
    RunnerFailure { p: usize, message: String },

    // harness
    #[error("invalid study configuration: {0}")]
    ConfigInvalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True when the error stems from bad input rather than the environment.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::Csv(_) | Error::Json(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
