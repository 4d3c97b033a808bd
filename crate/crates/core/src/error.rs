//! Error type shared by every operation in the crate.

use alloc::string::String;
use core::fmt;

/// Why an operation could not produce a result.
///
/// Every fallible entry point returns this via [`crate::Result`]. Variants
/// are diagnostic, not recoverable states: callers are expected to fix the
/// inputs rather than branch on them.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter is outside its documented domain.
    InvalidParam {
        /// Name of the offending parameter.
        name: &'static str,
        /// Human-readable description of the violation.
        detail: String,
    },
    /// Two inputs that must agree in length or shape do not.
    DimensionMismatch {
        /// What was being matched (e.g. `"response length"`).
        what: &'static str,
        /// Length implied by the other inputs.
        expected: usize,
        /// Length actually supplied.
        got: usize,
    },
    /// An exhaustive or iterative computation would exceed its hard budget.
    BudgetExceeded {
        /// What ran out (e.g. `"enumeration sequences"`).
        what: &'static str,
        /// The hard limit.
        budget: u64,
        /// The size the inputs would have required.
        required: u64,
    },
    /// Greedy selection ran out of usable columns before reaching `k`.
    ///
    /// Raised when every remaining candidate is numerically collinear with
    /// the columns already selected (residual column norm below `1e-10`).
    RankExhausted {
        /// Zero-based step at which no eligible column remained.
        step: usize,
    },
    /// A design failed orthonormality certification.
    CertificationFailed {
        /// Largest observed deviation of the Gram matrix from the identity.
        max_deviation: f64,
        /// Tolerance the certification was requested at.
        tol: f64,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParam { name, detail } => {
                write!(f, "invalid parameter `{name}`: {detail}")
            }
            Error::DimensionMismatch {
                what,
                expected,
                got,
            } => {
                write!(f, "dimension mismatch for {what}: expected {expected}, got {got}")
            }
            Error::BudgetExceeded {
                what,
                budget,
                required,
            } => {
                write!(f, "budget exceeded for {what}: limit {budget}, required {required}")
            }
            Error::RankExhausted { step } => {
                write!(
                    f,
                    "no eligible column at selection step {step}: remaining candidates are \
                     numerically collinear with the selected set"
                )
            }
            Error::CertificationFailed { max_deviation, tol } => {
                write!(
                    f,
                    "orthonormality certification failed: max Gram deviation {max_deviation:e} \
                     exceeds tolerance {tol:e}"
                )
            }
        }
    }
}

impl core::error::Error for Error {}

impl Error {
    /// Shorthand for [`Error::InvalidParam`] with a formatted detail string.
    pub(crate) fn invalid(name: &'static str, detail: fmt::Arguments<'_>) -> Self {
        Error::InvalidParam {
            name,
            detail: alloc::format!("{detail}"),
        }
    }
}
