//! Regret-optimal control for finite-state disturbance-driven systems.
//!
//! A causal controller is compared against a benchmark that sees the next `k`
//! disturbances. The solvers compute the controller minimizing the worst-case
//! return gap, for discounted infinite horizons ([`solve_regret`]) and for
//! finite horizons ([`solve_finite`]), together with baseline policies,
//! disturbance generators, a simulator and brute-force oracles.
//!
//! Every solver is generic over [`Scalar`]; the aliases below fix the common
//! instantiations.

pub mod artifact;
pub mod augmented;
pub mod baseline;
pub mod controller;
pub mod discounted;
pub mod disturbance;
pub mod error;
pub mod experiment;
pub mod finite;
pub mod fixtures;
mod kernel;
pub mod oracle;
pub mod prefix;
pub mod scalar;
pub mod simulate;
pub mod system;
pub mod verify;

pub use augmented::{aligned_regret_cost, augmented_transition, AugmentedSpace, AugmentedState};
pub use baseline::{
    clairvoyant_path_value, load_distribution, mdp_value_iteration, robust_value_iteration, BaselineConfig,
    DisturbanceDistribution, StatePolicy,
};
pub use controller::{
    extract_finite_policy, Controller, FiniteRegretController, OpenLoopController, RegretController,
    StateFeedbackController,
};
pub use discounted::{
    apply_regret_bellman, extract_stationary_policy, prefix_dp, solve_fixed_point, solve_regret, FixedPoint,
    RegretSolution, SolverConfig, StationaryPolicy, StoppingRule, SweepMode, ValueTable,
};
pub use disturbance::{sample_hmm, sample_iid, DisturbanceModel, HmmModel, PoissonModel, Regime};
pub use error::{Error, Result};
pub use finite::{
    backward_regret_dp, finite_prefix_dp, finite_regret_value, solve_finite, tail_value, FiniteSolution,
    FiniteSolverConfig, FiniteValueStack, TailTable,
};
pub use prefix::PrefixTables;
pub use scalar::{Rational, Scalar};
pub use simulate::{rollout, Trajectory};
pub use system::{build_inventory_system, load_system, save_system, validate_system, InventoryParams, System, SystemSpec};

pub type System64 = System<f64>;
pub type System32 = System<f32>;
pub type ExactSystem = System<Rational>;
pub type ValueTable64 = ValueTable<f64>;
pub type ValueTable32 = ValueTable<f32>;
pub type RegretSolution64 = RegretSolution<f64>;
pub type FiniteSolution64 = FiniteSolution<f64>;
pub type ExactFiniteSolution = FiniteSolution<Rational>;
pub type StatePolicy64 = StatePolicy<f64>;
