//! Discrete-event simulation of base stations mining and voting on blocks.
//!
//! One master controller and several slave controllers share a ledger. Each
//! round, the node holding the oldest pending transaction mines: it samples
//! link telemetry, derives a nonce from the model's throughput prediction,
//! signs the payload, and broadcasts the candidate. Peers validate and vote;
//! the block commits when approvals reach the quorum. Failure events take
//! the master offline or split reachability into partitions, and every
//! reachability change triggers ledger synchronization.

mod config;
mod report;
mod sim;

pub use config::{
    ConfigError, DuplicatePolicy, FailureEvent, FailureKind, LinkOverride, LinkParams, LinksConfig, Quorum,
    SimConfig, WorkloadParams,
};
pub use report::{NodeSummary, RoundOutcome, RoundRecord, SimOutput, SimReport, TraceEvent};
pub use sim::{
    run_simulation, telemetry_sample, BaseStationNode, MessageKind, PendingTx, Role, SimError, Simulation,
    SubmitError,
};
