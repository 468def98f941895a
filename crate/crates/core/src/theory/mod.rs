//! Bound evaluators, divergence estimates and the validation experiments
//! built on them.

mod bounds;
mod probe;
mod proxy;
mod surface;

pub use bounds::{
    bound_radical, check_source_bound, check_thm2, divergence_slack, divergence_term, empirical_weighted_error,
    eval_source_domain_bound, eval_source_error_bound, eval_test_error_bound, eval_thm1_domain_bound, gap_term_approx,
    gap_term_exact, grid_argmin_w0, optimal_w0, optimal_w0_for_gap, BoundCheck, BoundInputs, CheckReport, CheckStatus,
    OptimalW0,
};
pub use probe::{entropy_probe, ProbeArm, ProbeConfig, ProbeLabels, ProbeReport};
pub use proxy::{estimate_gamma, proxy_h_delta_h, proxy_h_delta_h_with, DiscriminatorConfig, MIN_PROXY_SAMPLES};
pub use surface::{error_surface_sweep, unit_grid, SurfaceRow, SurfaceTable, SweepConfig, SURFACE_HEADER};
