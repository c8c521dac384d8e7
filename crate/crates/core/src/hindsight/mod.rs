//! Optimal-in-hindsight matching on realized agent lifetimes.

pub mod matching;

use std::fmt::Write as _;

use rayon::prelude::*;

pub use matching::{
    blossom_matching, greedy_matching, max_weight_matching_by_component, max_weight_matching_exact, Edge,
    Matching, WeightedGraph, DEFAULT_EXACT_THRESHOLD,
};

use crate::error::{Error, Result};
use crate::market::{AgentId, MarketInstance};
use crate::policy::PolicyConfig;
use crate::sim::{simulate, EventTrace, NoObserver, RunConfig};
use crate::stats::Estimate;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HindsightNode {
    pub agent: AgentId,
    pub arrival: f64,
    pub departure: f64,
}

/// Agents of a trace with an edge between every pair whose lifetimes `[a, d)`
/// overlap and whose match value is positive.
#[derive(Debug, Clone)]
pub struct CompatibilityGraph {
    pub nodes: Vec<HindsightNode>,
    pub graph: WeightedGraph,
}

/// Overlap rule for half-open lifetimes; a zero-length (impatient) lifetime
/// overlaps anything alive at its instant.
pub fn lifetimes_overlap(a: (f64, f64), b: (f64, f64)) -> bool {
    (b.0 >= a.0 && b.0 < a.1) || (a.0 >= b.0 && a.0 < b.1)
}

impl CompatibilityGraph {
    pub fn from_nodes(mut nodes: Vec<HindsightNode>, instance: &MarketInstance) -> Self {
        nodes.sort_by(|p, q| p.arrival.total_cmp(&q.arrival).then(p.agent.cmp(&q.agent)));
        let mut graph = WeightedGraph::new(nodes.len());
        for (i, p) in nodes.iter().enumerate() {
            for (j, q) in nodes.iter().enumerate().skip(i + 1) {
                // sorted by arrival, so later nodes can only overlap while they
                // arrive before p leaves (or at p's own arrival instant)
                if q.arrival >= p.departure && q.arrival > p.arrival {
                    break;
                }
                if !lifetimes_overlap((p.arrival, p.departure), (q.arrival, q.departure)) {
                    continue;
                }
                let w = instance.values.get(p.agent.type_id, q.agent.type_id);
                if w > 0.0 {
                    graph.add_edge(i, j, w);
                }
            }
        }
        Self { nodes, graph }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.graph.edges.len()
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("graph G {\n");
        for (i, n) in self.nodes.iter().enumerate() {
            let _ = writeln!(s, "  {i} [label=\"{} [{:.3},{:.3})\"];", n.agent, n.arrival, n.departure);
        }
        for e in &self.graph.edges {
            let _ = writeln!(s, "  {} -- {} [label=\"{}\"];", e.u, e.v, e.weight);
        }
        s.push_str("}\n");
        s
    }
}

/// Builds the graph over all agents arriving in `[0, horizon]`. The trace must
/// carry every agent's true departure, including agents that were matched.
pub fn build_compatibility_graph(trace: &EventTrace, instance: &MarketInstance) -> Result<CompatibilityGraph> {
    let mut nodes = Vec::new();
    for (agent, arrival, departure) in trace.lifetimes()? {
        if agent.type_id >= instance.num_types() {
            return Err(Error::TypeIndexOutOfRange {
                index: agent.type_id,
                count: instance.num_types(),
            });
        }
        if arrival <= trace.horizon {
            nodes.push(HindsightNode {
                agent,
                arrival,
                departure,
            });
        }
    }
    Ok(CompatibilityGraph::from_nodes(nodes, instance))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HindsightOptions {
    /// Largest component solved by the exact subset search.
    pub exact_threshold: usize,
    /// Solve larger components with the blossom algorithm instead of failing.
    pub allow_blossom: bool,
}

impl Default for HindsightOptions {
    fn default() -> Self {
        Self {
            exact_threshold: DEFAULT_EXACT_THRESHOLD,
            allow_blossom: true,
        }
    }
}

/// `V(T)` for one replication, using the same arrival lanes as a policy run
/// with the same `(seed, replication)`.
pub fn hindsight_value(
    instance: &MarketInstance,
    horizon: f64,
    seed: u64,
    replication: u64,
    options: HindsightOptions,
) -> Result<f64> {
    let cfg = RunConfig {
        burn_in: 0.0,
        seed,
        replication,
        record_trace: true,
        ..RunConfig::new(instance, PolicyConfig::NoMatch, horizon)
    };
    let trace = simulate(&cfg, &mut NoObserver)?.trace.expect("trace recorded");
    let g = build_compatibility_graph(&trace, instance)?;
    let m = max_weight_matching_by_component(&g.graph, options.exact_threshold, options.allow_blossom)?;
    debug_assert!(m.is_disjoint());
    Ok(m.value)
}

/// Mean of `V(T)/T` across replications `0..replications`, with its standard
/// error.
pub fn hindsight_value_estimate(
    instance: &MarketInstance,
    horizon: f64,
    replications: u64,
    seed: u64,
    options: HindsightOptions,
) -> Result<Estimate> {
    if !(horizon > 0.0) || replications == 0 {
        return Err(Error::InvalidArgument(
            "hindsight estimate needs a positive horizon and at least one replication".into(),
        ));
    }
    let values = (0..replications)
        .into_par_iter()
        .map(|r| hindsight_value(instance, horizon, seed, r, options).map(|v| v / horizon))
        .collect::<Result<Vec<f64>>>()?;
    Ok(Estimate::from_samples(&values))
}
