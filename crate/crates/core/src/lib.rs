//! Lattice Yang–Mills on compact surfaces with U(1) and SU(2) structure group:
//! action families, character expansions, Morse lattices, gauge sampling,
//! discrete random 1-forms and anisotropic norm estimators.

pub mod action;
pub mod character;
pub mod error;
pub mod field;
pub mod group;
pub mod lattice;
pub mod norms;
pub mod quad;
pub mod sampler;
pub mod stats;
pub mod stream;

pub use action::{ActionFamily, ActionKind, FaceSampler};
pub use error::{Error, Result};
pub use group::{AlgebraElement, Group, GroupElement, Irrep};
