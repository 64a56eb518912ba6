//! Classical and leading-order semiclassical analysis of hyperbolic periodic
//! orbits of smooth Hamiltonians: flow and monodromy, orbit families,
//! Floquet data with a structure-preserving logarithm, hypothesis
//! certificates, and resonance strings in the lower half-plane.

pub mod error;
pub mod family;
pub mod floquet;
pub mod flow;
pub mod hamiltonian;
pub mod interp;
pub mod linalg;
pub mod models;
pub mod orbit;
pub mod report;
pub mod semiclassics;

pub use error::{Error, ErrorKind, Result};
pub use hamiltonian::{hamilton_vector_field, CustomHamiltonian, Hamiltonian, HamiltonianSystem, PhasePoint, SymplecticForm};
pub use models::{build_model, ModelKind, ModelSystemSpec};
