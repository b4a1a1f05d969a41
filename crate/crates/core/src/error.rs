use thiserror::Error;

/// Failures surfaced by the engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("quote {quote} for maker {maker} on the {side} side violates the inventory-cap rule at q = ({q0}, {q1})")]
    InadmissibleQuote {
        side: &'static str,
        maker: usize,
        quote: f64,
        q0: i32,
        q1: i32,
    },

    #[error("explicit step unstable: dt * max intensity = {ratio:.3} >= 0.5 (dt = {dt:e})")]
    Unstable { dt: f64, ratio: f64 },

    #[error("non-finite value at t = {t}, q = ({q0}, {q1}) in grid `{grid}`")]
    BlowUp {
        grid: &'static str,
        t: f64,
        q0: i32,
        q1: i32,
    },

    #[error("sign invariant broken: `{grid}` = {value} at t = {t}, q = ({q0}, {q1}) must be < 0")]
    SignBreach {
        grid: &'static str,
        value: f64,
        t: f64,
        q0: i32,
        q1: i32,
    },

    #[error("inventory left [-{q_bar}, {q_bar}]: maker {maker} at {q}")]
    InventoryBreach { maker: usize, q: i32, q_bar: i32 },

    #[error("{0}")]
    Estimate(String),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
