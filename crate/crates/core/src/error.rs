use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Everything that can go wrong inside the fusion kernels.
///
/// All variants describe invalid input or configuration; the core crate does
/// no IO.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    Empty(&'static str),
    NonFinite {
        what: &'static str,
        index: usize,
    },
    ProbabilityOutOfRange {
        row: usize,
        col: usize,
        value: f64,
    },
    RowSum {
        row: usize,
        sum: f64,
    },
    ZeroNorm {
        what: &'static str,
        row: usize,
    },
    LabelOutOfRange {
        index: usize,
        label: usize,
        num_classes: usize,
    },
    TooFewModels {
        needed: usize,
        found: usize,
    },
    AnchorOutOfRange {
        anchor: usize,
        models: usize,
    },
    BudgetExceeded {
        points: u128,
        budget: u64,
    },
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
    },
    Config(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch {
                what,
                expected,
                found,
            } => write!(f, "shape mismatch in {what}: expected {expected}, found {found}"),
            Error::Empty(what) => write!(f, "{what} must not be empty"),
            Error::NonFinite { what, index } => {
                write!(f, "non-finite value in {what} at flat index {index}")
            }
            Error::ProbabilityOutOfRange { row, col, value } => {
                write!(f, "probability {value} at ({row}, {col}) is outside [0, 1]")
            }
            Error::RowSum { row, sum } => {
                write!(f, "probability row {row} sums to {sum}, expected 1")
            }
            Error::ZeroNorm { what, row } => write!(f, "{what} row {row} has zero norm"),
            Error::LabelOutOfRange {
                index,
                label,
                num_classes,
            } => write!(
                f,
                "label {label} at sample {index} is out of range for {num_classes} classes"
            ),
            Error::TooFewModels { needed, found } => {
                write!(f, "need at least {needed} models, got {found}")
            }
            Error::AnchorOutOfRange { anchor, models } => {
                write!(f, "anchor index {anchor} out of range for {models} models")
            }
            Error::BudgetExceeded { points, budget } => write!(
                f,
                "grid has {points} points which exceeds the budget of {budget}; \
                 use coordinate-greedy search instead"
            ),
            Error::NonFiniteLoss { epoch, batch } => {
                write!(f, "non-finite training loss at epoch {epoch}, batch {batch}")
            }
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
