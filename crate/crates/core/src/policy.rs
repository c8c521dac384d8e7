//! Matching policies as pure decision procedures over [`MarketState`].
//!
//! [`OnlineMatch`] follows an LP-UB solution: an arriving type-`y` agent walks
//! the types in a fresh uniformly random order and, for type `x`, passes a
//! Bernoulli check with probability `gamma * alpha_xy * max(1, mu_x / lambda_x)`.
//! The first type whose check passes while an agent of that type is available
//! gets matched (its longest-waiting agent). [`greedy_step`] and
//! [`periodic_clear`] are baselines.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hindsight::matching::{greedy_matching, max_weight_matching_exact, WeightedGraph};
use crate::lp::LpSolution;
use crate::market::{AgentId, DepartureRate, MarketInstance, MatchValueMatrix};
use crate::sim::MarketState;
use crate::stochastic::SimRng;

pub const DEFAULT_GAMMA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", try_from = "RawPolicy")]
pub enum PolicyConfig {
    OnlineMatch {
        gamma: f64,
    },
    Greedy,
    PeriodicClear {
        clear_period: f64,
    },
    /// Never matches; used to observe the arrival/departure process alone.
    NoMatch,
}

// Flat form so that parameters belonging to another policy kind are rejected.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolicy {
    kind: String,
    gamma: Option<f64>,
    clear_period: Option<f64>,
}

impl TryFrom<RawPolicy> for PolicyConfig {
    type Error = String;

    fn try_from(raw: RawPolicy) -> std::result::Result<Self, String> {
        let policy = match raw.kind.as_str() {
            "online_match" => PolicyConfig::OnlineMatch {
                gamma: raw.gamma.unwrap_or(DEFAULT_GAMMA),
            },
            "greedy" => PolicyConfig::Greedy,
            "periodic_clear" => PolicyConfig::PeriodicClear {
                clear_period: raw.clear_period.ok_or("periodic_clear needs clear_period")?,
            },
            "no_match" => PolicyConfig::NoMatch,
            other => return Err(format!("unknown policy kind {other:?}")),
        };
        if raw.gamma.is_some() && policy.gamma().is_none() {
            return Err(format!("gamma does not apply to {}", raw.kind));
        }
        if raw.clear_period.is_some() && policy.clear_period().is_none() {
            return Err(format!("clear_period does not apply to {}", raw.kind));
        }
        Ok(policy)
    }
}

impl PolicyConfig {
    pub fn online_match(gamma: f64) -> Self {
        PolicyConfig::OnlineMatch { gamma }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            PolicyConfig::OnlineMatch { .. } => "ONLINE_MATCH",
            PolicyConfig::Greedy => "GREEDY",
            PolicyConfig::PeriodicClear { .. } => "PERIODIC_CLEAR",
            PolicyConfig::NoMatch => "NO_MATCH",
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match *self {
            PolicyConfig::OnlineMatch { gamma } => Some(gamma),
            _ => None,
        }
    }

    pub fn clear_period(&self) -> Option<f64> {
        match *self {
            PolicyConfig::PeriodicClear { clear_period } => Some(clear_period),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PolicyConfig::OnlineMatch { gamma } if !(gamma > 0.0 && gamma <= 1.0) => Err(
                Error::InvalidArgument(format!("gamma must lie in (0, 1], got {gamma}")),
            ),
            PolicyConfig::PeriodicClear { clear_period } if !(clear_period > 0.0) || !clear_period.is_finite() => {
                Err(Error::InvalidArgument(format!(
                    "clear_period must be positive, got {clear_period}"
                )))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for PolicyConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyConfig::OnlineMatch { gamma } => write!(f, "ONLINE_MATCH(gamma={gamma})"),
            PolicyConfig::PeriodicClear { clear_period } => {
                write!(f, "PERIODIC_CLEAR(period={clear_period})")
            }
            other => f.write_str(other.kind_name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    NoMatch,
    Match { partner: AgentId },
}

/// One loop iteration of OnlineMatch: the type considered, whether its
/// Bernoulli check passed, and whether a partner of that type was available.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Attempt {
    pub type_id: usize,
    pub attempted: bool,
    pub partner_available: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchDecision {
    pub outcome: Outcome,
    /// Iterations actually executed, in order.
    pub attempts: Vec<Attempt>,
    /// The full random type order drawn for this arrival (empty for baselines).
    pub order: Vec<usize>,
    /// Pre-evaluated Bernoulli checks indexed by type, including types the
    /// loop never reached (empty for baselines).
    pub checks: Vec<bool>,
}

impl MatchDecision {
    fn no_match() -> Self {
        Self {
            outcome: Outcome::NoMatch,
            attempts: Vec::new(),
            order: Vec::new(),
            checks: Vec::new(),
        }
    }

    pub fn partner(&self) -> Option<AgentId> {
        match self.outcome {
            Outcome::Match { partner } => Some(partner),
            Outcome::NoMatch => None,
        }
    }
}

const CLAMP_SLACK: f64 = 1e-12;
const ALPHA_SLACK: f64 = 1e-9;

/// `gamma * alpha_xy * max(1, mu_x / lambda_x)`, defined as 0 for impatient `x`.
pub fn match_probability(
    alpha_xy: f64,
    lambda_x: f64,
    mu_x: DepartureRate,
    gamma: f64,
) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidArgument(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    if !(lambda_x > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "arrival rate must be positive, got {lambda_x}"
        )));
    }
    if !(alpha_xy >= -ALPHA_SLACK && alpha_xy <= 1.0 + ALPHA_SLACK) {
        return Err(Error::InvalidArgument(format!("alpha {alpha_xy} outside [0, 1]")));
    }
    let raw = match mu_x {
        DepartureRate::Infinite => {
            if alpha_xy > ALPHA_SLACK {
                return Err(Error::InvalidArgument(format!(
                    "alpha {alpha_xy} must be 0 for an impatient type"
                )));
            }
            0.0
        }
        DepartureRate::Finite(mu) => gamma * alpha_xy * (mu / lambda_x).max(1.0),
    };
    if raw > 1.0 + CLAMP_SLACK {
        return Err(Error::InvalidArgument(format!(
            "match probability {raw} exceeds 1; alpha violates its cap"
        )));
    }
    Ok(raw.clamp(0.0, 1.0))
}

/// OnlineMatch with its per-pair check probabilities precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineMatch {
    num_types: usize,
    gamma: f64,
    // [x * n + y]: probability an arriving y passes the check for x
    probability: Vec<f64>,
}

impl OnlineMatch {
    pub fn new(instance: &MarketInstance, solution: &LpSolution, gamma: f64) -> Result<Self> {
        let n = instance.num_types();
        if solution.num_types != n || solution.alpha.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: solution.alpha.len(),
            });
        }
        let mut probability = vec![0.0; n * n];
        for x in 0..n {
            for y in 0..n {
                probability[x * n + y] = match_probability(
                    solution.alpha(x, y),
                    instance.arrival_rate(x),
                    instance.departure_rate(x),
                    gamma,
                )?;
            }
        }
        Ok(Self {
            num_types: n,
            gamma,
            probability,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn num_types(&self) -> usize {
        self.num_types
    }

    pub fn probability(&self, x: usize, y: usize) -> f64 {
        self.probability[x * self.num_types + y]
    }

    /// Decides for `arriving` (not yet in `state`). Randomness is consumed in a
    /// fixed pattern: one shuffle of the type order, then one uniform per type
    /// in index order.
    pub fn step(&self, state: &MarketState, arriving: AgentId, rng: &mut SimRng) -> MatchDecision {
        let n = self.num_types;
        let y = arriving.type_id;
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        let checks: Vec<bool> = (0..n).map(|x| rng.bernoulli(self.probability(x, y))).collect();
        let mut attempts = Vec::with_capacity(n);
        let mut outcome = Outcome::NoMatch;
        for &x in &order {
            let partner = state.oldest_available(x).map(|a| a.id);
            attempts.push(Attempt {
                type_id: x,
                attempted: checks[x],
                partner_available: partner.is_some(),
            });
            if let (true, Some(partner)) = (checks[x], partner) {
                debug_assert_ne!(partner, arriving);
                outcome = Outcome::Match { partner };
                break;
            }
        }
        MatchDecision {
            outcome,
            attempts,
            order,
            checks,
        }
    }
}

pub fn online_match_step(
    state: &MarketState,
    arriving: AgentId,
    instance: &MarketInstance,
    solution: &LpSolution,
    gamma: f64,
    rng: &mut SimRng,
) -> Result<MatchDecision> {
    if state.num_types() != instance.num_types() {
        return Err(Error::DimensionMismatch {
            expected: instance.num_types(),
            found: state.num_types(),
        });
    }
    Ok(OnlineMatch::new(instance, solution, gamma)?.step(state, arriving, rng))
}

/// Matches to the longest-waiting agent of the available type with the highest
/// positive value; ties across types go to the lowest type id.
pub fn greedy_step(state: &MarketState, arriving: AgentId, values: &MatchValueMatrix) -> MatchDecision {
    let y = arriving.type_id;
    let mut best: Option<(usize, f64)> = None;
    for x in 0..state.num_types() {
        if state.num_available(x) == 0 {
            continue;
        }
        let v = values.get(x, y);
        if v > 0.0 && best.is_none_or(|(_, bv)| v > bv) {
            best = Some((x, v));
        }
    }
    match best {
        Some((x, _)) => MatchDecision {
            outcome: Outcome::Match {
                partner: state.oldest_available(x).expect("type has an available agent").id,
            },
            ..MatchDecision::no_match()
        },
        None => MatchDecision::no_match(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClearedPair {
    /// The agent that arrived first.
    pub earlier: AgentId,
    pub later: AgentId,
    pub value: f64,
}

/// Maximum-weight matching over every available agent, computed exactly when
/// at most `exact_threshold` agents are waiting and greedily by edge weight
/// otherwise. The state is not modified.
pub fn periodic_clear(
    state: &MarketState,
    values: &MatchValueMatrix,
    exact_threshold: usize,
) -> Vec<ClearedPair> {
    let pool: Vec<_> = state.available_agents().copied().collect();
    let mut graph = WeightedGraph::new(pool.len());
    for i in 0..pool.len() {
        for j in i + 1..pool.len() {
            let v = values.get(pool[i].id.type_id, pool[j].id.type_id);
            if v > 0.0 {
                graph.add_edge(i, j, v);
            }
        }
    }
    let matching = if pool.len() <= exact_threshold {
        max_weight_matching_exact(&graph, exact_threshold).expect("pool within exact threshold")
    } else {
        greedy_matching(&graph)
    };
    let mut out: Vec<ClearedPair> = matching
        .pairs
        .iter()
        .map(|&(i, j)| {
            let (a, b) = (&pool[i], &pool[j]);
            let a_first = (a.arrival, a.id.serial) <= (b.arrival, b.id.serial);
            let (earlier, later) = if a_first { (a, b) } else { (b, a) };
            ClearedPair {
                earlier: earlier.id,
                later: later.id,
                value: values.get(a.id.type_id, b.id.type_id),
            }
        })
        .collect();
    out.sort_by(|p, q| (p.earlier, p.later).cmp(&(q.earlier, q.later)));
    out
}
