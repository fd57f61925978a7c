use alloc::string::String;
use core::fmt;

/// Errors reported by the simulation and analysis operations.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument or configuration value is outside its domain.
    InvalidInput(String),
    /// A post-selection branch or selection window carries zero probability.
    Degenerate(String),
    /// The slot truncation leaves more tail probability than allowed.
    Truncation { tail_mass: f64, tolerance: f64 },
    /// A combinatorial computation was refused because it exceeds the cap.
    CapExceeded { requested: usize, cap: usize },
    /// Curve fitting failed; the message carries diagnostics.
    Fit(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::Degenerate(msg) => write!(f, "degenerate input: {msg}"),
            Error::Truncation { tail_mass, tolerance } => write!(
                f,
                "slot truncation leaves {tail_mass:.3e} probability in the loop tail (tolerance {tolerance:.1e})"
            ),
            Error::CapExceeded { requested, cap } => {
                write!(f, "refusing {requested} photons, the configured cap is {cap}")
            }
            Error::Fit(msg) => write!(f, "fit failed: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidInput(alloc::format!($($arg)*))
    };
}
pub(crate) use invalid;
