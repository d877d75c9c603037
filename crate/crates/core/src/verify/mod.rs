//! Estimators and bound reports for the quantitative statements: level-set
//! tails, entropy and energy identities, the deviation bounds for `Z`,
//! total variation, the shell inequality, and the sharpness construction.
//!
//! Monte Carlo comparisons use `3·SE` half-widths from batch means.
//! Deterministic comparisons carry a fixed numerical tolerance.

mod matrix;
mod paths;
mod synthetic;
mod tails;

pub use matrix::{
    cell_model, cell_rows, default_matrix, delta_paper_rule, lemma2_check, run_experiment, simulate_cell, run_matrix, Check, DeltaRule, Experiment,
    MatrixOutcome,
};
pub use paths::{
    bizarre_check, convexity_check, drift_energy_bound_check, entropy_identity_check, exp_z_check, girsanov_checks,
    ks_law_check, martingale_check, mu_cdf, prop1_tv_check, prop2_check, relative_entropy, stopped_value_check,
    thm2_composite_check, tv_lower_bound, z_deviation_check, PathCell, ENTROPY_QUAD_TOL, PATHWISE_TOL,
};
pub use synthetic::{
    critical_gaussian, critical_two_point, lemma3_report, shifted_exponential, synthetic_battery, SyntheticLaw,
};
pub use tails::{
    log_tilt_tail, sharpness_constant, sharpness_report, smoothed_model, tail_curve, tail_curve_reports,
    tail_probability, TailCurve, TailMethod, DESK_CONSTANT, MIN_TAIL_HITS, SHARPNESS_FLOOR,
};
