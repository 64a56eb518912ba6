//! Floquet analysis of a periodic orbit: reduced monodromy, Williamson
//! classification, real logarithm, exponents, stable/unstable splitting and
//! the quadratic form `b` with its action coordinates.

mod classify;
mod hypotheses;
mod logm;
mod reduce;
mod splitting;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use classify::{classify_multipliers, eigenvalues, pairing_mismatch, tag_of, Classification, Tag, TaggedMultiplier};
pub use hypotheses::{
    check_exponents, check_hypotheses, distance_to_lattice, scan_lattice, HypothesisOptions, HypothesisReport,
    LatticeScan,
};
pub use logm::{symplectic_log, Logarithm, LOG_TOL};
pub use reduce::{reduce_monodromy, symplectic_gram_schmidt, ReducedMonodromy};
pub use splitting::{
    b_matrix, floquet_exponents, invariant_splitting, modes, quadratic_form_b, ActionCoordinate, ActionKind, Exponent,
    QuadraticForm, Splitting, DECOMPOSITION_TOL,
};

use crate::error::Result;
use crate::hamiltonian::HamiltonianSystem;
use crate::linalg::C64;

/// Relative tolerance for grouping eigenvalues and detecting degeneracies.
pub const PAIRING_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FloquetData {
    pub reduction: ReducedMonodromy,
    pub classification: Classification,
    pub log_matrix: DMatrix<f64>,
    pub log_exp_residual: f64,
    pub log_hamiltonian_residual: f64,
    pub exponents: Vec<Exponent>,
    pub hyperbolic_dimension: usize,
    pub splitting: Splitting,
    pub quadratic_form: QuadraticForm,
}

impl FloquetData {
    /// Exponents repeated by multiplicity (`n - 1` entries).
    pub fn modes(&self) -> Vec<C64> {
        modes(&self.exponents)
    }

    pub fn multipliers(&self) -> &[TaggedMultiplier] {
        &self.classification.multipliers
    }
}

/// Runs the analysis on an already reduced monodromy.
pub fn analyze_reduced(reduction: ReducedMonodromy) -> Result<FloquetData> {
    let classification = classify_multipliers(&reduction.reduced)?;
    let log = symplectic_log(&reduction.reduced)?;
    let exponents = floquet_exponents(&log.b)?;
    let hyperbolic_dimension = exponents.iter().filter(|e| e.is_hyperbolic()).map(|e| e.multiplicity).sum();
    let splitting = invariant_splitting(&log.b, &exponents)?;
    let quadratic_form = quadratic_form_b(&log.b, &exponents)?;
    Ok(FloquetData {
        reduction,
        classification,
        log_matrix: log.b,
        log_exp_residual: log.exp_residual,
        log_hamiltonian_residual: log.hamiltonian_residual,
        exponents,
        hyperbolic_dimension,
        splitting,
        quadratic_form,
    })
}

/// Floquet data from a monodromy `full` at phase point `z`.
pub fn analyze_monodromy(sys: &HamiltonianSystem, z: &DVector<f64>, full: &DMatrix<f64>) -> Result<FloquetData> {
    let x = sys.vector_field(z)?;
    let g = sys.gradient(z)?;
    analyze_reduced(reduce_monodromy(full, &x, &g)?)
}
