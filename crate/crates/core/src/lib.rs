//! Numerical tools for nonlocal logistic equations `Ψ(−Δ)u = au − f(x,u) − c h(x,u)`
//! on a bounded interval, where `Ψ` is a Bernstein function.

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod bernstein;
pub mod boundary;
pub mod error;
pub mod grid;
pub mod operator;
pub mod parabolic;
pub mod quadrature;
pub mod spectral;
pub mod steady;
pub mod stochastic;

pub use bernstein::{
    check_scaling, psi_eval, v_profile, BernsteinSymbol, KernelMode, LevyKernel, ScalingReport,
};
pub use boundary::{hopf_ratio, parabolic_boundary_bounds, v_modulus, BoundaryBounds, RatioField};
pub use error::{Error, ErrorClass, Result};
pub use grid::{build_grid, DomainSpec, Grid1D};
pub use operator::{assemble, multiplier_oracle, oracle_at_nodes, OperatorMatrix, WeightScheme};
pub use parabolic::{
    evolve, evolve_linear, longtime_classify, longtime_classify_with, LongtimeResult, ParabolicRun,
    Verdict,
};
pub use spectral::{antimaximum_profile, principal_eigenpair, EigenOptions, EigenPair};
pub use steady::{
    attach_small_branch, check_c11, harvest_subsolution, maximal_harvest, maximal_harvest_from,
    monotone_iterate, multistart, scan_cstar, small_branch, small_branch_path, solve_logistic,
    solve_logistic_with, stability_index, Branch, Crowding, Direction, Harvest, ReactionSpec,
    SteadyOptions, SteadyState,
};
pub use stochastic::{
    feynman_kac, laplace_transform, mc_green, simulate_killed_path, survival_lambda1, KilledPath,
    LaplacePoint, McConfig, McEstimate, SubordinatorSampler,
};
