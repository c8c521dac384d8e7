//! Event traces and the statistics recomputable from them.
//!
//! CSV layout (schema version 1):
//!
//! ```text
//! # dynmatch-trace schema_version=1 horizon=<T> burn_in=<B> seed=<S> replication=<R>
//! time,event_kind,agent_a,agent_b,value
//! 0.31,arrival,0:0,,
//! 0.52,match,0:0,1:0,0.75
//! 0.52,departure_matched,1:0,,
//! 1.70,departure,0:3,,
//! ```
//!
//! Agent ids are `type_index:serial`. For `match` rows `agent_a` arrived
//! first. Departures are `departure` for agents that left unmatched and
//! `departure_matched` for the simulated departure of matched agents; the
//! trace keeps running past the horizon until every agent has departed.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};
use crate::market::{AgentId, MarketInstance};

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceEvent {
    Arrival {
        time: f64,
        agent: AgentId,
    },
    Departure {
        time: f64,
        agent: AgentId,
        matched: bool,
    },
    Match {
        time: f64,
        earlier: AgentId,
        later: AgentId,
        value: f64,
    },
}

impl TraceEvent {
    pub fn time(&self) -> f64 {
        match *self {
            TraceEvent::Arrival { time, .. }
            | TraceEvent::Departure { time, .. }
            | TraceEvent::Match { time, .. } => time,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventTrace {
    pub events: Vec<TraceEvent>,
    pub horizon: f64,
    pub burn_in: f64,
    pub seed: u64,
    pub replication: u64,
}

impl EventTrace {
    pub fn effective_horizon(&self) -> f64 {
        self.horizon - self.burn_in
    }

    fn in_window(&self, t: f64) -> bool {
        t >= self.burn_in && t <= self.horizon
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# dynmatch-trace schema_version={TRACE_SCHEMA_VERSION} horizon={} burn_in={} seed={} replication={}",
            self.horizon, self.burn_in, self.seed, self.replication
        )
        .map_err(|e| Error::io("<trace>", e))?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "event_kind", "agent_a", "agent_b", "value"])?;
        for ev in &self.events {
            match *ev {
                TraceEvent::Arrival { time, agent } => {
                    w.write_record([time.to_string().as_str(), "arrival", &agent.to_string(), "", ""])?
                }
                TraceEvent::Departure { time, agent, matched } => w.write_record([
                    time.to_string().as_str(),
                    if matched { "departure_matched" } else { "departure" },
                    &agent.to_string(),
                    "",
                    "",
                ])?,
                TraceEvent::Match {
                    time,
                    earlier,
                    later,
                    value,
                } => w.write_record([
                    time.to_string().as_str(),
                    "match",
                    &earlier.to_string(),
                    &later.to_string(),
                    &value.to_string(),
                ])?,
            }
        }
        w.flush().map_err(|e| Error::io("<trace>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = BufReader::new(input);
        let mut header = String::new();
        reader.read_line(&mut header).map_err(|e| Error::io("<trace>", e))?;
        let meta: HashMap<&str, &str> = header
            .trim()
            .strip_prefix("# dynmatch-trace")
            .ok_or_else(|| Error::Trace("missing trace header line".into()))?
            .split_whitespace()
            .filter_map(|kv| kv.split_once('='))
            .collect();
        let get = |k: &str| {
            meta.get(k)
                .copied()
                .ok_or_else(|| Error::Trace(format!("header is missing `{k}`")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?.parse().map_err(|_| Error::Trace(format!("bad `{k}` in header")))
        };
        let int = |k: &str| -> Result<u64> {
            get(k)?.parse().map_err(|_| Error::Trace(format!("bad `{k}` in header")))
        };
        if int("schema_version")? != TRACE_SCHEMA_VERSION as u64 {
            return Err(Error::Trace("unsupported trace schema version".into()));
        }
        let mut trace = EventTrace {
            events: Vec::new(),
            horizon: num("horizon")?,
            burn_in: num("burn_in")?,
            seed: int("seed")?,
            replication: int("replication")?,
        };
        let mut rdr = csv::Reader::from_reader(reader);
        for rec in rdr.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let time: f64 = field(0)
                .parse()
                .map_err(|_| Error::Trace(format!("bad time `{}`", field(0))))?;
            let a: AgentId = field(2).parse()?;
            let ev = match field(1) {
                "arrival" => TraceEvent::Arrival { time, agent: a },
                "departure" => TraceEvent::Departure {
                    time,
                    agent: a,
                    matched: false,
                },
                "departure_matched" => TraceEvent::Departure {
                    time,
                    agent: a,
                    matched: true,
                },
                "match" => TraceEvent::Match {
                    time,
                    earlier: a,
                    later: field(3).parse()?,
                    value: field(4)
                        .parse()
                        .map_err(|_| Error::Trace(format!("bad value `{}`", field(4))))?,
                },
                other => return Err(Error::Trace(format!("unknown event kind `{other}`"))),
            };
            trace.events.push(ev);
        }
        Ok(trace)
    }

    /// Replays the trace and returns every feasibility violation: matches must
    /// join two distinct agents that have both arrived, neither departed nor
    /// been matched before, at the instance's match value. Also checks time
    /// order and that every arrival has exactly one departure.
    pub fn validate(&self, instance: &MarketInstance) -> Vec<String> {
        #[derive(Default)]
        struct Life {
            departed: bool,
            matched: bool,
        }
        let mut lives: HashMap<AgentId, Life> = HashMap::new();
        let mut problems = Vec::new();
        let mut last = f64::NEG_INFINITY;
        for (i, ev) in self.events.iter().enumerate() {
            let t = ev.time();
            if t < last {
                problems.push(format!("event {i}: time {t} goes backwards"));
            }
            last = t;
            match *ev {
                TraceEvent::Arrival { agent, .. } => {
                    if agent.type_id >= instance.num_types() {
                        problems.push(format!("event {i}: unknown type in {agent}"));
                    }
                    if lives.insert(agent, Life::default()).is_some() {
                        problems.push(format!("event {i}: {agent} arrives twice"));
                    }
                }
                TraceEvent::Departure { agent, matched, .. } => match lives.get_mut(&agent) {
                    None => problems.push(format!("event {i}: {agent} departs before arriving")),
                    Some(l) if l.departed => problems.push(format!("event {i}: {agent} departs twice")),
                    Some(l) => {
                        if l.matched != matched {
                            problems.push(format!("event {i}: matched flag of {agent} is wrong"));
                        }
                        l.departed = true;
                    }
                },
                TraceEvent::Match {
                    earlier,
                    later,
                    value,
                    ..
                } => {
                    if earlier == later {
                        problems.push(format!("event {i}: {earlier} matched to itself"));
                        continue;
                    }
                    for agent in [earlier, later] {
                        match lives.get_mut(&agent) {
                            None => problems.push(format!("event {i}: {agent} matched before arriving")),
                            Some(l) if l.departed => {
                                problems.push(format!("event {i}: {agent} matched after departing"))
                            }
                            Some(l) if l.matched => problems.push(format!("event {i}: {agent} matched twice")),
                            Some(l) => l.matched = true,
                        }
                    }
                    if earlier.type_id < instance.num_types() && later.type_id < instance.num_types() {
                        let v = instance.values.get(earlier.type_id, later.type_id);
                        if v != value {
                            problems.push(format!("event {i}: value {value} differs from v = {v}"));
                        }
                    }
                }
            }
        }
        for (agent, l) in &lives {
            if !l.departed {
                problems.push(format!("{agent} never departs"));
            }
        }
        problems
    }

    /// `(arrival, departure)` for every agent, in arrival order.
    pub fn lifetimes(&self) -> Result<Vec<(AgentId, f64, f64)>> {
        let mut index: HashMap<AgentId, usize> = HashMap::new();
        let mut out: Vec<(AgentId, f64, Option<f64>)> = Vec::new();
        for ev in &self.events {
            match *ev {
                TraceEvent::Arrival { time, agent } => {
                    index.insert(agent, out.len());
                    out.push((agent, time, None));
                }
                TraceEvent::Departure { time, agent, .. } => {
                    let &i = index
                        .get(&agent)
                        .ok_or_else(|| Error::Trace(format!("{agent} departs before arriving")))?;
                    out[i].2 = Some(time);
                }
                TraceEvent::Match { .. } => {}
            }
        }
        out.into_iter()
            .map(|(id, a, d)| d.map(|d| (id, a, d)).ok_or(Error::MissingLifetime(id)))
            .collect()
    }

    /// Total post-burn-in match value per unit time.
    pub fn avg_value_per_time(&self) -> f64 {
        let eff = self.effective_horizon();
        if eff <= 0.0 {
            return 0.0;
        }
        self.events
            .iter()
            .filter_map(|ev| match *ev {
                TraceEvent::Match { time, value, .. } if self.in_window(time) => Some(value),
                _ => None,
            })
            .sum::<f64>()
            / eff
    }
}

/// Row-major `rate[x * n + y]`: post-burn-in matches per unit time in which a
/// type-`y` agent matched a type-`x` agent that arrived before it. "Before"
/// follows arrival order in the trace, so equal-time arrivals are ordered by
/// type index and then serial.
pub fn estimate_rates(trace: &EventTrace, instance: &MarketInstance) -> Vec<f64> {
    let n = instance.num_types();
    let mut rates = vec![0.0; n * n];
    let eff = trace.effective_horizon();
    if eff <= 0.0 {
        return rates;
    }
    let mut order: HashMap<AgentId, usize> = HashMap::new();
    for ev in &trace.events {
        match *ev {
            TraceEvent::Arrival { agent, .. } => {
                let k = order.len();
                order.insert(agent, k);
            }
            TraceEvent::Match {
                time,
                earlier,
                later,
                ..
            } if trace.in_window(time) => {
                let (first, second) = match (order.get(&earlier), order.get(&later)) {
                    (Some(a), Some(b)) if b < a => (later, earlier),
                    _ => (earlier, later),
                };
                rates[first.type_id * n + second.type_id] += 1.0;
            }
            _ => {}
        }
    }
    rates.iter_mut().for_each(|r| *r /= eff);
    rates
}

/// Fraction of post-burn-in time during which at least one type-`x` agent is
/// present, matched agents included until their simulated departure.
pub fn presence_frequency(trace: &EventTrace, x: usize) -> f64 {
    let eff = trace.effective_horizon();
    if eff <= 0.0 {
        return 0.0;
    }
    let (lo, hi) = (trace.burn_in, trace.horizon);
    let mut count = 0usize;
    let mut since = 0.0;
    let mut total = 0.0;
    for ev in &trace.events {
        match *ev {
            TraceEvent::Arrival { time, agent } if agent.type_id == x => {
                if count == 0 {
                    since = time;
                }
                count += 1;
            }
            TraceEvent::Departure { time, agent, .. } if agent.type_id == x => {
                count -= 1;
                if count == 0 {
                    total += (time.min(hi) - since.max(lo)).max(0.0);
                }
            }
            _ => {}
        }
    }
    if count > 0 {
        total += (hi - since.max(lo)).max(0.0);
    }
    total / eff
}
