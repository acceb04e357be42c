//! Darboux–Crum intertwining operators for Schrödinger operators with
//! potentials of class K, and factorization of higher-order intertwiners.

pub mod analysis;
pub mod chain;
pub mod darboux;
pub mod error;
pub mod factorize;
pub mod fixtures;
pub mod grid;
pub mod jet;
pub mod potential;
pub mod quad;
pub mod schrodinger;
pub mod testfns;

pub use error::{Error, Result};
pub use jet::{Jet, C64};
