use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::hindsight::matching::DEFAULT_EXACT_THRESHOLD;
use crate::lp::LpSolution;
use crate::market::{AgentId, DepartureRate, MarketInstance};
use crate::policy::{greedy_step, periodic_clear, MatchDecision, OnlineMatch, PolicyConfig};
use crate::sim::state::{AvailableAgent, MarketState};
use crate::sim::trace::{EventTrace, TraceEvent};
use crate::stochastic::{Lane, SimRng};

/// Hooks into the event loop. `on_arrival` sees the state before the arriving
/// agent is added; `on_departure` sees it before the departing agent is
/// removed. Impatient agents, which are never present, produce no departure
/// callback.
pub trait Observer {
    fn on_arrival(
        &mut self,
        _time: f64,
        _agent: AgentId,
        _state: &MarketState,
        _decision: Option<&MatchDecision>,
    ) {
    }

    fn on_departure(&mut self, _time: f64, _agent: AgentId, _state: &MarketState) {}
}

pub struct NoObserver;

impl Observer for NoObserver {}

#[derive(Debug, Clone, Copy)]
pub struct RunConfig<'a> {
    pub instance: &'a MarketInstance,
    pub policy: PolicyConfig,
    pub solution: Option<&'a LpSolution>,
    pub horizon: f64,
    pub burn_in: f64,
    /// Master seed; every random lane is derived from it and `replication`.
    pub seed: u64,
    pub replication: u64,
    pub record_trace: bool,
    pub exact_threshold: usize,
}

impl<'a> RunConfig<'a> {
    pub fn new(instance: &'a MarketInstance, policy: PolicyConfig, horizon: f64) -> Self {
        Self {
            instance,
            policy,
            solution: None,
            horizon,
            burn_in: horizon / 100.0,
            seed: 0,
            replication: 0,
            record_trace: false,
            exact_threshold: DEFAULT_EXACT_THRESHOLD,
        }
    }

    pub fn check(&self) -> Result<()> {
        self.instance.ensure_valid()?;
        self.policy.validate()?;
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be finite and nonnegative, got {}",
                self.horizon
            )));
        }
        let degenerate = self.horizon == 0.0 && self.burn_in == 0.0;
        if !(self.burn_in >= 0.0) || (self.burn_in >= self.horizon && !degenerate) {
            return Err(Error::InvalidArgument(format!(
                "burn_in must satisfy 0 <= burn_in < horizon, got burn_in={} horizon={}",
                self.burn_in, self.horizon
            )));
        }
        if matches!(self.policy, PolicyConfig::OnlineMatch { .. }) && self.solution.is_none() {
            return Err(Error::MissingSolution);
        }
        Ok(())
    }
}

/// Per-replication results accumulated during the run.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationStats {
    pub replication: u64,
    pub seed: u64,
    pub horizon: f64,
    pub burn_in: f64,
    pub total_value: f64,
    pub avg_value_per_time: f64,
    /// Row-major, see [`crate::sim::estimate_rates`].
    pub pair_match_rates: Vec<f64>,
    pub presence_frequency: Vec<f64>,
    pub arrivals: u64,
    pub matches: u64,
}

#[derive(Debug, Clone)]
pub struct ReplicationOutcome {
    pub trace: Option<EventTrace>,
    pub stats: ReplicationStats,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pending {
    time: f64,
    id: AgentId,
}

impl Eq for Pending {}

impl Ord for Pending {
    // reversed: BinaryHeap pops the earliest departure
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Engine<'a, 'o> {
    cfg: &'a RunConfig<'a>,
    n: usize,
    state: MarketState,
    arrival_rngs: Vec<SimRng>,
    decision_rng: SimRng,
    next_arrival: Vec<f64>,
    serials: Vec<u64>,
    departures: BinaryHeap<Pending>,
    online: Option<OnlineMatch>,
    trace: Option<Vec<TraceEvent>>,
    observer: &'o mut dyn Observer,
    total_value: f64,
    pair_counts: Vec<u64>,
    present_since: Vec<f64>,
    presence_time: Vec<f64>,
    arrivals: u64,
    matches: u64,
}

impl Engine<'_, '_> {
    fn in_window(&self, t: f64) -> bool {
        t >= self.cfg.burn_in && t <= self.cfg.horizon
    }

    fn push(&mut self, ev: TraceEvent) {
        if let Some(tr) = self.trace.as_mut() {
            tr.push(ev);
        }
    }

    fn record_match(&mut self, time: f64, earlier: AgentId, later: AgentId) {
        let value = self.cfg.instance.values.get(earlier.type_id, later.type_id);
        self.matches += 1;
        if self.in_window(time) {
            self.total_value += value;
            self.pair_counts[earlier.type_id * self.n + later.type_id] += 1;
        }
        self.push(TraceEvent::Match {
            time,
            earlier,
            later,
            value,
        });
    }

    fn close_presence(&mut self, x: usize, t: f64) {
        let (lo, hi) = (self.cfg.burn_in, self.cfg.horizon);
        self.presence_time[x] += (t.min(hi) - self.present_since[x].max(lo)).max(0.0);
    }

    fn arrive(&mut self, x: usize, t: f64) -> Result<()> {
        let inst = self.cfg.instance;
        let id = AgentId::new(x, self.serials[x]);
        self.serials[x] += 1;
        let departure = match inst.departure_rate(x) {
            DepartureRate::Finite(mu) => t + self.arrival_rngs[x].exponential(mu)?,
            DepartureRate::Infinite => t,
        };
        self.next_arrival[x] = t + self.arrival_rngs[x].exponential(inst.arrival_rate(x))?;
        self.arrivals += 1;
        self.state.clock = t;
        self.push(TraceEvent::Arrival { time: t, agent: id });

        let decision = match self.cfg.policy {
            PolicyConfig::OnlineMatch { .. } => {
                let online = self.online.as_ref().expect("online policy prepared");
                Some(online.step(&self.state, id, &mut self.decision_rng))
            }
            PolicyConfig::Greedy => Some(greedy_step(&self.state, id, &inst.values)),
            PolicyConfig::PeriodicClear { .. } | PolicyConfig::NoMatch => None,
        };
        self.observer.on_arrival(t, id, &self.state, decision.as_ref());

        let partner = decision.as_ref().and_then(MatchDecision::partner);
        if let Some(partner) = partner {
            self.state
                .take_available(partner)
                .expect("policy picked an available partner");
            self.record_match(t, partner, id);
        }
        let matched = partner.is_some();
        if inst.departure_rate(x).is_infinite() {
            self.push(TraceEvent::Departure {
                time: t,
                agent: id,
                matched,
            });
            return Ok(());
        }
        if self.state.num_present(x) == 0 {
            self.present_since[x] = t;
        }
        if matched {
            self.state.add_shadow(x);
        } else {
            self.state.add_available(AvailableAgent {
                id,
                arrival: t,
                departure,
            });
        }
        self.departures.push(Pending { time: departure, id });
        Ok(())
    }

    fn depart(&mut self, p: Pending) {
        self.state.clock = p.time;
        self.observer.on_departure(p.time, p.id, &self.state);
        let matched = self.state.depart(p.id);
        let x = p.id.type_id;
        if self.state.num_present(x) == 0 {
            self.close_presence(x, p.time);
        }
        self.push(TraceEvent::Departure {
            time: p.time,
            agent: p.id,
            matched,
        });
    }

    fn clear(&mut self, t: f64) {
        self.state.clock = t;
        let pairs = periodic_clear(&self.state, &self.cfg.instance.values, self.cfg.exact_threshold);
        for p in pairs {
            self.state.take_available(p.earlier).expect("cleared agent available");
            self.state.take_available(p.later).expect("cleared agent available");
            self.record_match(t, p.earlier, p.later);
        }
    }

    fn run(&mut self) -> Result<()> {
        let horizon = self.cfg.horizon;
        let period = self.cfg.policy.clear_period();
        let mut clears = 1u64;
        loop {
            let (ax, ta) = self
                .next_arrival
                .iter()
                .enumerate()
                .fold((usize::MAX, f64::INFINITY), |best, (x, &t)| if t < best.1 { (x, t) } else { best });
            let ta = if ta <= horizon { ta } else { f64::INFINITY };
            let tc = period
                .map(|p| clears as f64 * p)
                .filter(|&t| t <= horizon)
                .unwrap_or(f64::INFINITY);
            let td = self.departures.peek().map_or(f64::INFINITY, |p| p.time);
            if td == f64::INFINITY && ta == f64::INFINITY && tc == f64::INFINITY {
                break;
            }
            if td > horizon && ta == f64::INFINITY && tc == f64::INFINITY && self.trace.is_none() {
                break;
            }
            // departures first at equal times, then clears, then arrivals
            if td <= ta && td <= tc {
                let p = self.departures.pop().expect("peeked");
                self.depart(p);
            } else if tc <= ta {
                self.clear(tc);
                clears += 1;
            } else {
                self.arrive(ax, ta)?;
            }
        }
        for x in 0..self.n {
            if self.state.num_present(x) > 0 {
                self.close_presence(x, horizon);
            }
        }
        Ok(())
    }
}

/// Runs one replication. Arrival times and lifetimes of type `x` come from lane
/// `Arrivals(x)` and policy randomness from lane `Decisions`, so every policy
/// sees the same agents for a given `(seed, replication)`.
pub fn simulate(cfg: &RunConfig, observer: &mut dyn Observer) -> Result<ReplicationOutcome> {
    cfg.check()?;
    let inst = cfg.instance;
    let n = inst.num_types();
    let online = match cfg.policy {
        PolicyConfig::OnlineMatch { gamma } => Some(OnlineMatch::new(
            inst,
            cfg.solution.ok_or(Error::MissingSolution)?,
            gamma,
        )?),
        _ => None,
    };
    let mut arrival_rngs: Vec<SimRng> = (0..n)
        .map(|x| SimRng::lane(cfg.seed, cfg.replication, Lane::Arrivals(x)))
        .collect();
    let mut next_arrival = Vec::with_capacity(n);
    for (x, rng) in arrival_rngs.iter_mut().enumerate() {
        next_arrival.push(rng.exponential(inst.arrival_rate(x))?);
    }
    let mut engine = Engine {
        cfg,
        n,
        state: MarketState::new(n),
        arrival_rngs,
        decision_rng: SimRng::lane(cfg.seed, cfg.replication, Lane::Decisions),
        next_arrival,
        serials: vec![0; n],
        departures: BinaryHeap::new(),
        online,
        trace: cfg.record_trace.then(Vec::new),
        observer,
        total_value: 0.0,
        pair_counts: vec![0; n * n],
        present_since: vec![0.0; n],
        presence_time: vec![0.0; n],
        arrivals: 0,
        matches: 0,
    };
    engine.run()?;

    let eff = cfg.horizon - cfg.burn_in;
    let per_time = |v: f64| if eff > 0.0 { v / eff } else { 0.0 };
    let stats = ReplicationStats {
        replication: cfg.replication,
        seed: cfg.seed,
        horizon: cfg.horizon,
        burn_in: cfg.burn_in,
        total_value: engine.total_value,
        avg_value_per_time: per_time(engine.total_value),
        pair_match_rates: engine.pair_counts.iter().map(|&c| per_time(c as f64)).collect(),
        presence_frequency: engine.presence_time.iter().map(|&t| per_time(t)).collect(),
        arrivals: engine.arrivals,
        matches: engine.matches,
    };
    let trace = engine.trace.take().map(|events| EventTrace {
        events,
        horizon: cfg.horizon,
        burn_in: cfg.burn_in,
        seed: cfg.seed,
        replication: cfg.replication,
    });
    Ok(ReplicationOutcome { trace, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::DepartureRate::{Finite, Infinite};

    fn single() -> MarketInstance {
        MarketInstance::new([("x".to_string(), 1.0, Finite(1.0))], [(0, 0, 1.0)])
    }

    #[test]
    fn rejects_bad_windows_and_missing_solution() {
        let inst = single();
        let mut cfg = RunConfig::new(&inst, PolicyConfig::Greedy, 10.0);
        cfg.burn_in = 10.0;
        assert!(simulate(&cfg, &mut NoObserver).is_err());
        let cfg = RunConfig::new(&inst, PolicyConfig::online_match(0.5), 10.0);
        assert!(matches!(simulate(&cfg, &mut NoObserver), Err(Error::MissingSolution)));
    }

    #[test]
    fn zero_horizon_is_empty() {
        let inst = single();
        let mut cfg = RunConfig::new(&inst, PolicyConfig::Greedy, 0.0);
        cfg.record_trace = true;
        let out = simulate(&cfg, &mut NoObserver).unwrap();
        assert!(out.trace.unwrap().events.is_empty());
        assert_eq!(out.stats.avg_value_per_time, 0.0);
        assert_eq!(out.stats.arrivals, 0);
    }

    #[test]
    fn impatient_agents_never_wait() {
        let inst = MarketInstance::new(
            [
                ("p".to_string(), 1.0, Finite(1.0)),
                ("i".to_string(), 2.0, Infinite),
            ],
            [(0, 1, 1.0)],
        );
        let mut cfg = RunConfig::new(&inst, PolicyConfig::Greedy, 200.0);
        cfg.record_trace = true;
        cfg.burn_in = 0.0;
        let out = simulate(&cfg, &mut NoObserver).unwrap();
        let trace = out.trace.unwrap();
        assert!(trace.validate(&inst).is_empty());
        assert_eq!(out.stats.presence_frequency[1], 0.0);
        assert!(out.stats.matches > 0);
        // every match pairs a waiting patient agent with an arriving impatient one
        for ev in &trace.events {
            if let TraceEvent::Match { earlier, later, .. } = ev {
                assert_eq!((earlier.type_id, later.type_id), (0, 1));
            }
        }
    }

    #[test]
    fn periodic_clear_runs() {
        let inst = single();
        let mut cfg = RunConfig::new(&inst, PolicyConfig::PeriodicClear { clear_period: 0.5 }, 500.0);
        cfg.record_trace = true;
        let out = simulate(&cfg, &mut NoObserver).unwrap();
        let trace = out.trace.unwrap();
        assert!(trace.validate(&inst).is_empty());
        assert!(out.stats.matches > 0);
        for ev in &trace.events {
            if let TraceEvent::Match { time, .. } = ev {
                assert!((time / 0.5 - (time / 0.5).round()).abs() < 1e-9);
            }
        }
    }
}
