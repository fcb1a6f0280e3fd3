//! Simulation and optimization engine for energy-efficient channel
//! allocation and power control in underlay device-to-multi-device (D2MD)
//! cellular networks.
//!
//! The pipeline mirrors a two-stage decomposition: interference-based stable
//! matching assigns uplink resource blocks to multicast groups, and
//! fractional programming (sequential concave approximation plus Dinkelbach
//! iterations) computes the transmit powers for a fixed assignment. A
//! Monte-Carlo experiment layer sweeps system parameters over randomly
//! generated scenarios and aggregates efficiency, rate, feasibility and
//! convergence statistics into CSV tables.
//!
//! All numeric code is generic over the scalar type through [`num::Real`];
//! the `*64` aliases below fix the default `f64` instantiation.

pub mod experiment;
pub mod matching;
pub mod model;
pub mod num;
pub mod optimizer;
pub mod power;
pub mod scenario;

pub use model::Assignment;

/// Default `f64` instantiations of the generic core types.
pub type Scenario64 = scenario::Scenario<f64>;
pub type GainTable64 = scenario::GainTable<f64>;
pub type Point64 = scenario::Point<f64>;
pub type PowerAllocation64 = model::PowerAllocation<f64>;
pub type Metrics64 = model::Metrics<f64>;
pub type SolverConfig64 = power::SolverConfig<f64>;
pub type Solution64 = optimizer::Solution<f64>;

/// Single-precision instantiations, for callers trading accuracy for memory.
pub type Scenario32 = scenario::Scenario<f32>;
pub type GainTable32 = scenario::GainTable<f32>;
pub type PowerAllocation32 = model::PowerAllocation<f32>;
