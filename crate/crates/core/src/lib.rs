//! Placement of in-network aggregation switches on tree networks.
//!
//! Given a rooted switch tree with per-link rates and per-switch server
//! loads, choose at most `k` aggregating (blue) switches so that the total
//! transmission time of one Reduce toward the destination is minimal.
//!
//! * [`topology`]: validated trees, distances and JSON topology files.
//! * [`reduce`] and [`payload`]: message- and byte-level Reduce simulation.
//! * [`soar`]: the optimal gather/color dynamic program.
//! * [`strategies`]: baseline placements and the exhaustive oracle.
//! * [`scenario`]: generators and the online multi-workload engine.
//! * [`experiment`]: experiment matrix, scaling and timing harness.
//!
//! Everything numeric is generic over [`Scalar`]; the aliases below fix the
//! common choices.

pub mod experiment;
pub mod fixtures;
pub mod payload;
pub mod reduce;
pub mod scalar;
pub mod scenario;
pub mod soar;
pub mod strategies;
pub mod topology;

pub use payload::{simulate_bytes, ByteUtilization, Payload, PayloadKind, PayloadModel};
pub use reduce::{simulate_reduce, utilization_barrier, EdgeUtilization, Placement, ReduceError};
pub use scalar::{Cost, Rational, Scalar};
pub use soar::{solve, Color, GatherTables, SolveResult};
pub use strategies::StrategyKind;
pub use topology::{SwitchId, TopologyError, TreeBuilder, TreeNetwork};

/// Tree with double-precision rates.
pub type Tree = TreeNetwork<f64>;
/// Tree with single-precision rates.
pub type TreeF32 = TreeNetwork<f32>;
/// Tree with exact rational rates.
pub type ExactTree = TreeNetwork<Rational>;

pub type Tables = GatherTables<f64>;
pub type ExactTables = GatherTables<Rational>;
pub type Solution = SolveResult<f64>;
pub type ExactSolution = SolveResult<Rational>;
