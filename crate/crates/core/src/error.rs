use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("address depth {depth} is too shallow: at least {needed} digits required")]
    DepthTooShallow { depth: u32, needed: u32 },

    #[error("invalid depth {0}: must lie in 1..={max}", max = crate::dyadic::MAX_DEPTH)]
    InvalidDepth(u32),

    #[error("point ({x1}, {x2}) is not interior to the unit square")]
    DomainError { x1: f64, x2: f64 },

    #[error("contour trace failed at level {level}: {reason}")]
    TraceFailure { level: f64, reason: String },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("time {t} is outside the field domain [0, {horizon})")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("integration step {step:e} fell below the floor {floor:e}")]
    StepUnderflow { step: f64, floor: f64 },

    #[error("malformed {what}: {reason}")]
    Parse { what: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
