//! Design-based inference for adaptively collected multi-arm bandit data.
//!
//! The library conditions on the full table of potential outcomes and treats
//! only the logged action randomization as stochastic. On top of streaming
//! inverse-propensity estimators it provides:
//!
//! * fixed-time confidence intervals for arm means and pairwise contrasts,
//! * exact (closed-form and gamma-mixture) and asymptotic confidence
//!   sequences, valid under data-dependent stopping,
//! * contextual variance reduction via residualized outcomes,
//! * adaptive allocation policies and a seeded Monte Carlo harness for
//!   coverage / width / stopping-time / power studies.

pub mod confidence;
pub mod contextual;
pub mod error;
pub mod estimators;
pub mod log;
pub mod policies;
pub mod simulation;

pub use confidence::{
    asymptotic_cs_half_width, bound_series, ci_half_width, exact_cs_half_width, gamma_mixture_cs,
    interval_at, inv_normal_cdf, kummer_1f1_a1, lambert_w_minus1, trunc_gamma_norm, tune_eta,
    BoundRow, BoundSeries, CsConfig, Estimand, Interval, Method,
};
pub use contextual::{
    contextual_interval, residual_bound_series, ConstantMeanPredictor, LeastSquaresPredictor,
    ResidualContrastState, RewardPredictor,
};
pub use error::{Error, Result};
pub use estimators::{ArmEstimatorState, ContrastEstimatorState};
pub use log::{
    parse_log, serialize_log, ArmId, DeclaredBounds, Observation, ObservationLog,
    PropensityVector,
};
pub use policies::{action_probs, sample_action, PolicyConfig, PolicyKind, PolicyState};
pub use simulation::{
    generate_round, rho_sweep, run_monte_carlo, run_trajectory, true_estimands, DgpSpec,
    DgpVariant, McConfig, MethodSpec, MonteCarloReport, ReportRow, RhoSweepRow, TruthTrack,
};
