use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Variants are grouped by the exit status the command-line frontend maps
/// them to: configuration problems, numerical failures and violated
/// structural hypotheses on the orbit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("evaluation error at {point:?}: {reason}")]
    Evaluation { point: Vec<f64>, reason: String },

    #[error("integration failed at t = {t}: {reason} (last good state {state:?})")]
    Integration {
        t: f64,
        state: Vec<f64>,
        reason: String,
    },

    #[error("no section crossing within time horizon {horizon}")]
    NoCrossing { horizon: f64 },

    #[error("Newton iteration did not converge (final residual {residual:e}): {reason}")]
    NonConvergence { residual: f64, reason: String },

    #[error("section is not transversal to the flow (|<c, X_H>| / (|c| |X_H|) = {ratio:e})")]
    DegenerateSection { ratio: f64 },

    #[error("eigenvalue 1 of the monodromy has multiplicity {multiplicity}, expected 2")]
    TrivialMultiplicity { multiplicity: usize },

    #[error("Floquet multiplier {re} + {im}i lies within pairing tolerance of +/-1")]
    WilliamsonDegeneracy { re: f64, im: f64 },

    #[error("Floquet multiplier {re} + {im}i lies on the closed negative real axis; no real logarithm")]
    Branch { re: f64, im: f64 },

    #[error("Floquet exponent {re} + {im}i vanishes within tolerance")]
    ZeroExponent { re: f64, im: f64 },

    #[error("multipliers are not closed under inversion/conjugation (mismatch {mismatch:e})")]
    Pairing { mismatch: f64 },

    #[error("logarithm is not semi-simple (eigenvector condition number {condition:e})")]
    NonSemisimple { condition: f64 },

    #[error("matrix logarithm failed: {reason} (residual {residual:e})")]
    Logarithm { residual: f64, reason: String },

    #[error("adapted symplectic basis construction failed (residual {residual:e})")]
    BasisConstruction { residual: f64 },

    #[error("no Bohr-Sommerfeld anchor for k = {k}; admissible k for this h is [{k_min}, {k_max}]")]
    NoAnchor { k: i64, k_min: i64, k_max: i64 },

    #[error("energy {energy} outside family range [{min}, {max}]")]
    OutOfRange { energy: f64, min: f64, max: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Coarse classification used for exit statuses and machine-readable errors.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Dimension(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_) => {
                ErrorKind::Configuration
            }
            Error::TrivialMultiplicity { .. }
            | Error::WilliamsonDegeneracy { .. }
            | Error::Branch { .. }
            | Error::ZeroExponent { .. } => ErrorKind::Hypothesis,
            _ => ErrorKind::Numerical,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Evaluation { .. } => "evaluation",
            Error::Integration { .. } => "integration",
            Error::NoCrossing { .. } => "no_crossing",
            Error::NonConvergence { .. } => "non_convergence",
            Error::DegenerateSection { .. } => "degenerate_section",
            Error::TrivialMultiplicity { .. } => "trivial_multiplicity",
            Error::WilliamsonDegeneracy { .. } => "williamson_degeneracy",
            Error::Branch { .. } => "branch",
            Error::ZeroExponent { .. } => "zero_exponent",
            Error::Pairing { .. } => "pairing",
            Error::NonSemisimple { .. } => "non_semisimple",
            Error::Logarithm { .. } => "logarithm",
            Error::BasisConstruction { .. } => "basis_construction",
            Error::NoAnchor { .. } => "no_anchor",
            Error::OutOfRange { .. } => "out_of_range",
            Error::Dimension(_) => "dimension",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Configuration,
    Numerical,
    Hypothesis,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
