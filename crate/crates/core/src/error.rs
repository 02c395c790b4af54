use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    /// `x = j / 2r^n` for some `n` within the requested depth.
    #[error("x = {x} is a corner point j/2r^{depth}")]
    PointInCorner { x: String, depth: u32 },

    #[error("interval ({n},{j}) has slope {slope}, not 0")]
    NotFlat { n: u32, j: String, slope: i64 },

    #[error("found {found} zero times of the slope walk within depth {search_depth}, needed {needed}")]
    NotEnoughZeros { found: usize, needed: usize, search_depth: u32 },

    #[error("{0}")]
    BudgetInconclusive(String),

    #[error("depth {depth} exceeds the enumeration cap ({detail})")]
    DepthCap { depth: u32, detail: String },

    #[error("{0}")]
    OutOfRange(String),

    #[error("{0}")]
    InvalidParameter(String),

    #[error("cannot parse rational {0:?}")]
    ParseRational(String),
}

impl Error {
    /// Variant name, printed verbatim by the CLI.
    pub fn name(&self) -> &'static str {
        match self {
            Error::PointInCorner { .. } => "PointInCorner",
            Error::NotFlat { .. } => "NotFlat",
            Error::NotEnoughZeros { .. } => "NotEnoughZeros",
            Error::BudgetInconclusive(_) => "BudgetInconclusive",
            Error::DepthCap { .. } => "DepthCap",
            Error::OutOfRange(_) => "OutOfRange",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::ParseRational(_) => "ParseRational",
        }
    }
}
