//! Numerical quantum statistical mechanics at desk scale.
//!
//! Every module works on dense complex matrices (see [`linalg`]) and turns
//! one family of structural identities into executable checks: Gibbs and
//! KMS states ([`qstate`], [`qdyn`]), modular theory ([`modular`]),
//! entropy production in open systems ([`openqs`], [`lattice`],
//! [`epstats`]), completely positive semigroups ([`lindblad`]),
//! quasi-free fermions ([`fermi`]) and repeated measurements
//! ([`instruments`]).

pub mod epstats;
pub mod error;
pub mod fermi;
pub mod instruments;
pub mod lattice;
pub mod lindblad;
pub mod linalg;
pub mod modular;
pub mod openqs;
pub mod par;
pub mod qdyn;
pub mod qstate;
pub mod quad;
pub mod random;

pub use error::{QthermError, Result};
pub use linalg::{CMat, C64};
