//! Exact-diagonalization laboratory for impurity models: Fock-space
//! construction, Green's functions, self-energies and sparsity checks in
//! equilibrium, anomalous, contour and classical Gibbs settings.

pub mod anomalous;
pub mod cli;
pub mod contour;
pub mod equilibrium;
pub mod error;
pub mod fock;
pub mod gibbs;
pub mod linalg;
pub mod model;
pub mod report;

pub use error::{Error, Result};
pub use fock::{FockSector, LadderKind, SectorOperator, Statistics};
pub use model::{AnomalousModel, ImpurityModel, Monomial};
