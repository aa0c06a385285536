//! Resilient distributed gradient descent on quadratic cost families.
//!
//! A server iterates projected gradient descent while up to `f` agents send
//! Byzantine messages and up to `r` agents straggle. The library provides:
//!
//! - quadratic agent costs with exact and stochastic gradients ([`costs`]),
//! - exact computation of the `(f, r; epsilon)`-redundancy parameter by
//!   subset enumeration ([`redundancy`]),
//! - gradient aggregation rules: plain sum, comparative gradient elimination
//!   (CGE), and coordinate-wise trimmed mean ([`filters`]),
//! - Byzantine corruption strategies ([`faults`]),
//! - a deterministic message-passing layer with straggler delays and
//!   stale-gradient bookkeeping ([`simnet`]),
//! - the server loop in synchronous, asynchronous, stale, and stochastic
//!   variants ([`engine`]),
//! - closed-form convergence-bound constants for all supported problem
//!   variants ([`bounds`]).
//!
//! Every run is deterministic given its configuration and master seed:
//! each agent owns independent seeded RNG streams, so parallel and serial
//! agent evaluation produce identical traces.

pub mod bounds;
pub mod config;
pub mod costs;
pub mod engine;
pub mod faults;
pub mod filters;
pub mod redundancy;
pub mod rng;
pub mod simnet;
pub mod trace;

pub use bounds::{
    bounds_thm1, bounds_thm2, bounds_thm3_cge, bounds_thm4, check_rho_range, BoundsVariant,
    ProblemParams, TheoremBounds,
};
pub use config::{
    AgentRole, BoxConfig, ConfigError, DelayModelConfig, FamilySource, FilterName, NoiseConfig,
    RunConfig, RunMode, ScheduleConfig, StochasticProblem,
};
pub use costs::{
    certify_constants, generate_family, stochastic_gradient, CostError, CostFamily, NoiseModel,
    QuadraticCost, SmoothnessCertificate, StochasticGradConfig,
};
pub use engine::{run, run_replicated, EngineError, FeasibleBox, Simulation, StepSchedule};
pub use faults::{corrupt, ByzantineStrategy};
pub use filters::{aggregate_cge, aggregate_cwtm, aggregate_sum, FilterError, FilterKind};
pub use redundancy::{
    compute_epsilon, subset_minimizer, target_minimizer, RedundancyError, RedundancyReport,
    SubsetMinimizer,
};
pub use simnet::{collect_fresh, ArrivalSet, DelayModel, DelayNetwork, SimnetError, StaleBuffer};
pub use trace::{ArrivalInfo, StepInfo, Trace, TraceRecord};
