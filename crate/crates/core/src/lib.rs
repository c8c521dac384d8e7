//! Simulation and analysis of dynamic matching markets: the LP upper bound,
//! the OnlineMatch policy and baselines, an event-driven simulator, the
//! hindsight benchmark, and instrumentation of the analysis events.

pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod hindsight;
pub mod lp;
pub mod market;
pub mod policy;
pub mod sim;
pub mod stats;
pub mod stochastic;

pub use error::{Error, Result};
pub use lp::{build_lp, check_feasibility, solve_instance, solve_lp, LinearProgram, LpSolution, LpStatus};
pub use market::{AgentId, AgentType, DepartureRate, MarketInstance, MatchValueMatrix, ValidationReport};
pub use policy::{MatchDecision, OnlineMatch, PolicyConfig, DEFAULT_GAMMA};
pub use sim::{run_simulation, EventTrace, MarketState, SimulationReport};
pub use stats::Estimate;
pub use stochastic::{Lane, SimRng};
