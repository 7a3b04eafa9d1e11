use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A tensor or block saw a shape it cannot accept.
    Shape {
        context: &'static str,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    /// A flat width disagreed with what the consumer needs.
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    /// Activations were produced by a different network or parameter state.
    StaleActivations,
    /// A gradient entry was NaN or infinite; `param` indexes the parameter list.
    NonFiniteGradient { param: usize },
    /// A loss diverged during a training loop.
    NonFiniteLoss { stage: &'static str, step: usize },
    NonFiniteValue(&'static str),
    InvalidArgument(String),
    Empty(&'static str),
    ArchitectureMismatch(&'static str),
    IndexOutOfRange { index: usize, len: usize },
    /// A simulated allocation would exceed a memory counter's limit.
    BudgetExceeded {
        counter: &'static str,
        requested: usize,
        available: usize,
    },
    /// The stage-training boundary cache was used out of order.
    CacheInvalidated(&'static str),
    NotSimplex,
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { context, expected, found } => {
                write!(f, "{context}: expected shape {expected:?}, found {found:?}")
            }
            Error::Dimension { context, expected, found } => {
                write!(f, "{context}: expected width {expected}, found {found}")
            }
            Error::StaleActivations => f.write_str("activations do not belong to this network state"),
            Error::NonFiniteGradient { param } => {
                write!(f, "non-finite gradient in parameter {param}; update refused")
            }
            Error::NonFiniteLoss { stage, step } => write!(f, "{stage}: loss diverged at step {step}"),
            Error::NonFiniteValue(what) => write!(f, "non-finite value in {what}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Empty(what) => write!(f, "{what} is empty"),
            Error::ArchitectureMismatch(what) => write!(f, "architecture mismatch: {what}"),
            Error::IndexOutOfRange { index, len } => write!(f, "index {index} out of range for length {len}"),
            Error::BudgetExceeded { counter, requested, available } => write!(
                f,
                "{counter} budget exceeded: requested {requested} bytes, {available} available"
            ),
            Error::CacheInvalidated(why) => write!(f, "stage cache invalidated: {why}"),
            Error::NotSimplex => f.write_str("input is not a probability simplex"),
        }
    }
}

impl core::error::Error for Error {}
