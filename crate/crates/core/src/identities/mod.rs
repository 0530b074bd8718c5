//! Pointwise weighted identities evaluated on concrete polynomial instances.

mod convergence;
mod det;
mod multiplier;
mod ode;
mod stoch;
mod suite;

pub use convergence::{
    fit_slope, reference_stoch_instance, stoch_convergence_study, ConvergenceStudy,
};
pub use det::{eval_det_identity, DetEvaluation, DetIdentityInstance, DetIntermediates, DetSlice};
pub use multiplier::eval_multiplier_identity;
pub use ode::eval_ode_identity;
pub use stoch::{
    brownian_increments, coarsen_increments, eval_stoch_hyperbolic_residual,
    eval_stoch_parabolic_residual, eval_stoch_pointwise, StochIdentityInstance, StochKind,
    StochResidualKernel,
};
pub use suite::{
    random_det_instance, random_stoch_drift_instance, verify_det_slice, verify_identity_suite,
    verify_identity_suite_named, IdentityKind, IdentityReport, SliceReport, POINTS_PER_INSTANCE,
};
