use thiserror::Error;

use crate::config::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the analysis pipeline can report.
///
/// Variants carry the machine-readable code used in CLI diagnostics
/// (see [`Error::code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("config syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid system description: {}", format_violations(.0))]
    Invalid(Vec<Violation>),

    #[error("unknown operating-point case {0}")]
    UnknownCase(u32),

    #[error("unknown converter '{0}'")]
    UnknownConverter(String),

    #[error("interior network block is singular (condition number {condition:.3e})")]
    SingularInterior { condition: f64 },

    #[error("reduced susceptance matrix is not positive definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("power flow did not converge in {iterations} iterations (mismatch {mismatch:.3e} p.u.)")]
    PfDiverged { iterations: usize, mismatch: f64 },

    #[error("converter '{name}' terminal voltage {u_pu:.4} p.u. is outside (0.5, 1.5)")]
    PfVoltageOutOfBand { name: String, u_pu: f64 },

    #[error("frequency must be strictly positive, got {0} rad/s")]
    DegenerateFreq(f64),

    #[error("converters declare different PLL gains ({0}); pass --force-first-pll to use the first converter's gains")]
    MixedPllGains(String),

    #[error("no eigenvalue within {tolerance:e} of the tracked critical value (closest distance {distance:.3e})")]
    EigpairMismatch { distance: f64, tolerance: f64 },

    #[error("PLL/network algebraic loop is singular (condition number {condition:.3e})")]
    AlgebraicLoopSingular { condition: f64 },

    #[error("eigenvalue iteration failed to converge")]
    EigenFailed,

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::Syntax { .. } => "SYNTAX",
            Error::Invalid(_) => "INVALID_SPEC",
            Error::UnknownCase(_) => "UNKNOWN_CASE",
            Error::UnknownConverter(_) => "UNKNOWN_CONVERTER",
            Error::SingularInterior { .. } => "SINGULAR_INTERIOR",
            Error::NotPositiveDefinite { .. } => "NOT_POSITIVE_DEFINITE",
            Error::PfDiverged { .. } => "PF_DIVERGED",
            Error::PfVoltageOutOfBand { .. } => "PF_VOLTAGE_OUT_OF_BAND",
            Error::DegenerateFreq(_) => "DEGENERATE_FREQ",
            Error::MixedPllGains(_) => "MIXED_PLL_GAINS",
            Error::EigpairMismatch { .. } => "EIGPAIR_MISMATCH",
            Error::AlgebraicLoopSingular { .. } => "ALGEBRAIC_LOOP_SINGULAR",
            Error::EigenFailed => "EIGEN_FAILED",
            Error::Argument(_) => "ARGUMENT",
            Error::Io(_) => "IO",
        }
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| format!("[{}] {}", v.code, v.message))
        .collect::<Vec<_>>()
        .join("; ")
}
