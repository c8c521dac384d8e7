//! Discrete-event simulation of the market under a matching policy.

pub mod engine;
pub mod report;
pub mod state;
pub mod trace;

pub use engine::{simulate, NoObserver, Observer, ReplicationOutcome, ReplicationStats, RunConfig};
pub use report::{PairRate, PolicyMeta, ReplicationRecord, SimulationReport, TypeEstimate, REPORT_SCHEMA_VERSION};
pub use state::{AvailableAgent, MarketState};
pub use trace::{estimate_rates, presence_frequency, EventTrace, TraceEvent, TRACE_SCHEMA_VERSION};

use crate::error::Result;
use crate::lp::LpSolution;
use crate::market::MarketInstance;
use crate::policy::PolicyConfig;

/// Single-replication convenience wrapper that always records the trace.
pub fn run_simulation(
    instance: &MarketInstance,
    policy: &PolicyConfig,
    solution: Option<&LpSolution>,
    horizon: f64,
    burn_in: f64,
    seed: u64,
) -> Result<(EventTrace, SimulationReport)> {
    let cfg = RunConfig {
        solution,
        burn_in,
        seed,
        record_trace: true,
        ..RunConfig::new(instance, *policy, horizon)
    };
    let out = simulate(&cfg, &mut NoObserver)?;
    let report = SimulationReport::from_replications(instance, policy, std::slice::from_ref(&out.stats))?;
    Ok((out.trace.expect("trace recorded"), report))
}
