//! Control synthesis by duality: Kalman tests for linear ODEs, penalized HUM for the heat
//! equation, HUM for the wave equation, a fixed-point loop for the semilinear heat equation,
//! and the multiplier geometry.

mod geometry;
mod hum;
mod kalman;
mod semilinear;

pub use geometry::{
    check_assumption_d, make_control_geometry, AssumptionReport, ControlGeometry, Domain, Face,
};
pub use hum::{
    hum_exact_control_wave, hum_null_control_heat, ControlResult, HeatGramian, WaveGramian,
};
pub use kalman::{
    controllability_gramian, kalman_rank, lambda_min, numerical_rank, random_system, LinearODE,
};
pub use semilinear::{
    gauss_legendre_16, linearized_potential, semilinear_null_control, SemilinearOptions,
};
