//! Desk-scale simulation of deniable and unexplainable quantum encryption
//! built on trapdoor claw-free functions.

pub mod compressed_oracle;
pub mod deniable;
pub mod distances;
pub mod error;
pub mod lattice;
pub mod qsim;
pub mod rigidity;
pub mod rng;
pub mod suite;
pub mod tcf;
pub mod unexplainable;

pub use error::{Error, Result};
