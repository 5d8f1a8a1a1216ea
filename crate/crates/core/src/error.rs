use alloc::string::String;
use core::fmt;

/// Errors raised by scheme construction, stage solving and energy analysis.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A stage count or index outside the supported range.
    Range { what: &'static str, value: usize, min: usize, max: usize },
    /// Vector or matrix dimensions do not agree.
    Dimension { expected: usize, found: usize, context: &'static str },
    /// A constructed scheme failed one of its algebraic invariants.
    Invariant { check: &'static str, defect: f64 },
    /// A zero weight where a division by the weight is required.
    ZeroWeight { index: usize },
    /// LU factorization hit a (numerically) zero pivot.
    Singular { context: &'static str },
    /// Matrix expected symmetric positive definite is not.
    NotPositiveDefinite { context: &'static str },
    /// Newton iteration did not reach the residual tolerance.
    Divergence { iterations: usize, residual: f64 },
    /// Invalid configuration (step size, horizon, tolerances, ...).
    Config(String),
    /// The model has no port but a port was required.
    MissingPort,
    /// An operation that only makes sense in a specific feedback mode.
    Mode(&'static str),
    /// A relative metric with a zero reference.
    UndefinedMetric,
    /// Fewer usable points than a fit requires.
    InsufficientPoints { usable: usize, required: usize },
    /// Solver failure annotated with the step at which it happened.
    AtStep { step: usize, source: alloc::boxed::Box<Error> },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Range { what, value, min, max } => {
                write!(f, "{what} = {value} outside supported range [{min}, {max}]")
            }
            Error::Dimension { expected, found, context } => {
                write!(f, "dimension mismatch in {context}: expected {expected}, found {found}")
            }
            Error::Invariant { check, defect } => {
                write!(f, "scheme invariant `{check}` violated (defect {defect:e})")
            }
            Error::ZeroWeight { index } => write!(f, "quadrature weight b[{index}] is zero"),
            Error::Singular { context } => write!(f, "singular matrix in {context}"),
            Error::NotPositiveDefinite { context } => {
                write!(f, "{context} is not symmetric positive definite")
            }
            Error::Divergence { iterations, residual } => write!(
                f,
                "Newton iteration did not converge after {iterations} iterations (residual {residual:e})"
            ),
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::MissingPort => f.write_str("model has no input port"),
            Error::Mode(msg) => write!(f, "wrong feedback mode: {msg}"),
            Error::UndefinedMetric => {
                f.write_str("relative error undefined for a zero reference increment")
            }
            Error::InsufficientPoints { usable, required } => {
                write!(f, "order fit needs {required} usable points, got {usable}")
            }
            Error::AtStep { step, source } => write!(f, "step {step}: {source}"),
        }
    }
}

impl core::error::Error for Error {}

impl Error {
    /// Strips step annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for failures of the nonlinear or linear stage solve.
    pub fn is_solver_failure(&self) -> bool {
        matches!(self.root(), Error::Divergence { .. } | Error::Singular { .. })
    }
}

pub type Result<T> = core::result::Result<T, Error>;
