//! Exact multivariate polynomial calculus and truncated Taylor jets.

mod jet;
mod poly;

pub use jet::{CJet, Jet, JetSpace};
pub use poly::{
    monomials_up_to, random_poly, random_poly_with, seeded_rng, ComplexPoly, Exponent, MultiPoly,
    SamplePoint, DEGREE_CAP, DIMS_CAP,
};
