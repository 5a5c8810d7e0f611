use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("tensor of order {p} needs {entries} entries, exceeding the budget of {budget}")]
    BudgetExceeded { p: u32, entries: u64, budget: u64 },

    #[error("disorder fingerprint {disorder:#018x} does not match spec fingerprint {spec:#018x}")]
    FingerprintMismatch { spec: u64, disorder: u64 },

    #[error("state is off the sphere: |x|^2 = {norm_sq}, expected {n}")]
    OffSphere { norm_sq: f64, n: usize },

    #[error("non-finite gradient at t = {time}")]
    NonFiniteGradient { time: f64 },

    #[error("gradient descent with 1 < k < 2 is ill-posed from m = {m} <= 0")]
    IllPosedStart { m: f64 },

    #[error("value {value} is outside the domain of {what}")]
    Domain { what: &'static str, value: f64 },

    #[error("gamma = 1 is the Gronwall regime; the power-law comparison does not apply")]
    GronwallRegime,

    #[error("exact Condition 1 is only available for levels 1 and 2 (requested {0}); use the weak level-infinity check")]
    UnsupportedLevel(u32),

    #[error("bisection bracket [{lo}, {hi}] does not straddle success probability 1/2 ({p_lo}, {p_hi})")]
    Bracket { lo: f64, hi: f64, p_lo: f64, p_hi: f64 },

    #[error("replica seed collision for seed {0:#018x}")]
    SeedCollision(u64),

    #[error("malformed disorder cache {path}: {reason}")]
    CacheFormat { path: PathBuf, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
