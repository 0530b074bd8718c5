//! Verification and synthesis tools for the controllability and observability of
//! model parabolic and hyperbolic PDEs.

pub mod control;
pub mod error;
pub mod identities;
pub mod linalg;
pub mod observability;
pub mod pde;
pub mod polyjet;
pub mod seeds;
pub mod stabilization;

pub use error::{Error, Result};
