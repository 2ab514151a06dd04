//! Distributed Nash-equilibrium seeking for aggregative energy-consumption
//! games on undirected communication graphs.
//!
//! Players never see the aggregate consumption directly. Each one runs a
//! dynamic average consensus estimator over its graph neighbors and adapts its
//! own consumption on a slower time scale using its estimate. The crate
//! provides the vector fields for the general, primal-dual and
//! inner-equilibrium strategies ([`dynamics`]), a deterministic RK4 engine
//! ([`ode`]), an independent equilibrium oracle ([`oracle`]), scenario files
//! and output writers ([`scenario`], [`output`]), and the command-line front
//! end ([`cli`]).

// Negated float comparisons such as `!(x > 0.0)` are used on purpose so that
// NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dynamics;
pub mod exec;
pub mod game;
pub mod graph;
pub mod ode;
pub mod oracle;
pub mod output;
pub mod scenario;
pub mod simulation;

pub use dynamics::{SeekingFlow, SimState, StrategyMode};
pub use game::{CostModel, GameSpec, PlayerSpec, PricingSpec};
pub use graph::{Graph, Topology};
pub use ode::{IntegratorConfig, StopReason};
pub use oracle::EquilibriumResult;
pub use scenario::Scenario;
pub use simulation::Trajectory;
