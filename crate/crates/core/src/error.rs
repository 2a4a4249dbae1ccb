use alloc::boxed::Box;
use alloc::string::String;
use core::fmt;

use crate::assembly::GateVerdict;
use crate::criteria::Verdict;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Caller-supplied data violates a precondition.
    InvalidInput(String),
    /// Fields defined on different grids were combined.
    GridMismatch,
    /// `H1h` measure requested with a coefficient that makes the form negative.
    IndefiniteNorm,
    /// Conjugate gradient met a direction of nonpositive curvature.
    NotPositiveDefinite,
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },
    IterationStalled {
        iterations: usize,
        residual: f64,
    },
    /// `Delta + h` is not coercive (principal eigenvalue or mean of `h` is nonpositive).
    NonCoercive { value: f64 },
    PotentialVanishes,
    NegativePotential { value: f64 },
    NoPositiveSubsolution,
    SubsolutionScalingFailed,
    /// No supersolution could be found; carries the non-existence diagnostic.
    NoSupersolution(Box<Verdict>),
    MonotonicityViolated { step: usize, min_increment: f64 },
    KernelComponent { size: f64, limit: f64 },
    NotCmc { grad_tau: f64 },
    OuterNotConverged { iterations: usize, increment: f64 },
    /// An inner solve failed during outer iteration `iteration`.
    Inner { iteration: usize, source: Box<Error> },
    GatesFailed(Box<GateVerdict>),
    InvariantViolated(String),
    NonpositiveManufactured { min: f64 },
    NoPositiveRoot,
    NewtonFailed { iterations: usize, residual: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::GridMismatch => f.write_str("fields live on different grids"),
            Error::IndefiniteNorm => f.write_str("indefinite norm input"),
            Error::NotPositiveDefinite => f.write_str("not positive definite"),
            Error::NoConvergence {
                what,
                iterations,
                residual,
            } => write!(
                f,
                "no convergence in {what} after {iterations} iterations (residual {residual:e})"
            ),
            Error::IterationStalled {
                iterations,
                residual,
            } => write!(
                f,
                "iteration stalled after {iterations} iterations (residual {residual:e})"
            ),
            Error::NonCoercive { value } => {
                write!(f, "non-coercive background (value {value:e})")
            }
            Error::PotentialVanishes => f.write_str("potential vanishes identically"),
            Error::NegativePotential { value } => {
                write!(f, "potential is negative on the range of psi ({value:e})")
            }
            Error::NoPositiveSubsolution => f.write_str("no positive u_delta found"),
            Error::SubsolutionScalingFailed => f.write_str("subsolution scaling failed"),
            Error::NoSupersolution(v) => write!(f, "no supersolution found ({})", v.detail),
            Error::MonotonicityViolated {
                step,
                min_increment,
            } => write!(
                f,
                "monotonicity violated at step {step} (min increment {min_increment:e})"
            ),
            Error::KernelComponent { size, limit } => write!(
                f,
                "kernel component exceeds threshold ({size:e} > {limit:e})"
            ),
            Error::NotCmc { grad_tau } => write!(f, "not CMC (sup |grad tau| = {grad_tau:e})"),
            Error::OuterNotConverged {
                iterations,
                increment,
            } => write!(
                f,
                "outer iteration did not converge after {iterations} iterations (last increment {increment:e})"
            ),
            Error::Inner { iteration, source } => {
                write!(f, "outer iteration {iteration}: {source}")
            }
            Error::GatesFailed(g) => write!(f, "existence gates failed: {}", g.summary()),
            Error::InvariantViolated(msg) => write!(f, "invariant violated: {msg}"),
            Error::NonpositiveManufactured { min } => {
                write!(f, "nonpositive a* (min {min:e})")
            }
            Error::NoPositiveRoot => f.write_str("no positive root"),
            Error::NewtonFailed {
                iterations,
                residual,
            } => write!(
                f,
                "Newton failed after {iterations} iterations (residual {residual:e})"
            ),
        }
    }
}

impl core::error::Error for Error {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            Error::Inner { source, .. } => Some(source.as_ref()),
            _ => None,
        }
    }
}

impl Error {
    /// True when the failure is a solver that did not converge (as opposed
    /// to bad input or a failed verdict).
    pub fn is_nonconvergence(&self) -> bool {
        match self {
            Error::NoConvergence { .. }
            | Error::IterationStalled { .. }
            | Error::OuterNotConverged { .. }
            | Error::NewtonFailed { .. }
            | Error::MonotonicityViolated { .. }
            | Error::NoSupersolution(_)
            | Error::NotPositiveDefinite
            | Error::NoPositiveSubsolution
            | Error::SubsolutionScalingFailed => true,
            Error::Inner { source, .. } => source.is_nonconvergence(),
            _ => false,
        }
    }
}
