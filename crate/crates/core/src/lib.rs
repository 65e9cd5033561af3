//! Random dynamics of finitely many expanding interval maps.
//!
//! The crate evaluates the limit-state function `T_p` (the CDF of the
//! self-similar measure), its parameter derivatives `C_n` (generalised Takagi
//! functions) through a matrix cocycle, the pressure curve `t(β)` with its
//! Legendre spectrum, pointwise Hölder exponents, spectral-gap probes for the
//! transition operator `M_p`, and the conjugacy to the piecewise-linear model.

pub mod conjugacy;
pub mod error;
pub mod export;
pub mod holder;
pub mod ifs;
pub mod operator;
pub mod rational;
pub mod stats;
pub mod takagi;
pub mod thermo;

pub use error::{Error, Result};
pub use ifs::{
    attractor_hull, compactify, cylinder, distortion_constant, encode, ergodic_sums, hull_cylinder, metric_d,
    pi_approx, validate, Branch, BranchKind, Coding, CustomMap, ErgodicSums, Flags, IfSystem, PiApprox, Potentials,
    ProbVector, ValidationReport, Word,
};

pub use conjugacy::{conjugacy_residual, linear_model, phi, rigidity_report, RigidityReport, RigidityVerdict};
pub use holder::{dyn_exponent, emp_exponent, sample_typical, spectrum_experiment, ExponentTrace};
pub use operator::{
    apply_m, eval_t, eval_t_exact, gap_probe, holder_seminorm, iterate_m, GridFunction, NumericMode, SeminormMode,
    TValue, Verdict,
};
pub use takagi::{cocycle, cylinder_increment, eval_c, eval_c_series, fd_oracle, step_matrix, MultiIndex};
pub use thermo::{alpha_endpoints, gibbs, pressure, solve_t, spectrum, PressureCurve};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
