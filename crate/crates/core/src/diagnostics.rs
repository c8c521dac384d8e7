//! Counts the analysis point processes Z1..Z4, A and B during OnlineMatch
//! runs and checks their rate bounds.
//!
//! For a waiting type `x` and arriving type `y`:
//! - Z1_x: a type-x arrival whose pre-evaluated checks fail for every type
//!   currently present.
//! - Z2_x: while x is present, an arrival whose check for x passes; while x is
//!   absent, an independent clock of rate `sum_y lambda_y p_xy`.
//! - Z3_x: while exactly one x is present, that agent's departure; otherwise an
//!   independent clock of rate `mu_x`.
//! - Z4_{x,y}: a y arrival whose check for x passes, with no other present type
//!   passing its check earlier in the random order. Presence of x itself plays
//!   no role. The "available" variant instead asks that the loop actually
//!   reached x with a passing check.
//! - B_x(t): the latest Z1/Z2/Z3 event of type x strictly before t is Z1.
//! - A_{x,y} = Z4_{x,y} and B_x.
//!
//! "Present" counts matched agents until their simulated departure. The
//! independent clocks run on `Lane::Diagnostics(x)` so they never touch the
//! policy's random streams.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::LpSolution;
use crate::market::{AgentId, DepartureRate, MarketInstance};
use crate::policy::{MatchDecision, OnlineMatch, PolicyConfig};
use crate::sim::{simulate, MarketState, Observer, ReplicationStats, RunConfig, SimulationReport};
use crate::stats::Estimate;
use crate::stochastic::{Lane, SimRng};

pub const DIAGNOSTICS_SCHEMA_VERSION: u32 = 1;
/// Bounds are only judged on runs at least this long.
pub const MIN_BOUND_HORIZON: f64 = 1e4;
/// Relative tolerance for the constant-rate checks on Z2 and Z3.
pub const RATE_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ZKind {
    Z1,
    Z2,
    Z3,
}

/// Per-replication event counts inside the measurement window. Pair arrays are
/// row-major `[x * n + y]` with `x` the waiting type and `y` the arriving type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventCounts {
    pub num_types: usize,
    pub window: f64,
    pub z1: Vec<u64>,
    pub z2: Vec<u64>,
    pub z3: Vec<u64>,
    pub z4: Vec<u64>,
    pub z4_available: Vec<u64>,
    /// Z4 occurrences at which B held.
    pub z4_with_b: Vec<u64>,
    pub a: Vec<u64>,
    /// A occurrences where the arrival really matched a type-x agent.
    pub a_matched: Vec<u64>,
    /// Time during which B_x held.
    pub b_time: Vec<f64>,
}

impl EventCounts {
    fn zeros(n: usize, window: f64) -> Self {
        Self {
            num_types: n,
            window,
            z1: vec![0; n],
            z2: vec![0; n],
            z3: vec![0; n],
            z4: vec![0; n * n],
            z4_available: vec![0; n * n],
            z4_with_b: vec![0; n * n],
            a: vec![0; n * n],
            a_matched: vec![0; n * n],
            b_time: vec![0.0; n],
        }
    }

    fn rate(&self, count: u64) -> f64 {
        if self.window > 0.0 {
            count as f64 / self.window
        } else {
            0.0
        }
    }

    /// Fraction of Z4_{x,.} occurrences at which B_x held.
    pub fn b_at_z4(&self, x: usize) -> Option<f64> {
        let n = self.num_types;
        let z4: u64 = self.z4[x * n..(x + 1) * n].iter().sum();
        let with_b: u64 = self.z4_with_b[x * n..(x + 1) * n].iter().sum();
        (z4 > 0).then(|| with_b as f64 / z4 as f64)
    }

    pub fn b_time_fraction(&self, x: usize) -> f64 {
        if self.window > 0.0 {
            self.b_time[x] / self.window
        } else {
            0.0
        }
    }

    pub fn a_unmatched(&self) -> u64 {
        self.a.iter().zip(&self.a_matched).map(|(a, m)| a - m).sum()
    }
}

/// Timestamped occurrences, kept only when requested.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Occurrences {
    pub z: Vec<(f64, usize, ZKind)>,
    /// `(time, x, y)`
    pub z4: Vec<(f64, usize, usize)>,
    pub a: Vec<(f64, usize, usize)>,
}

/// Simulation observer that classifies events as they happen.
pub struct EventCounters {
    n: usize,
    lo: f64,
    hi: f64,
    patient: Vec<bool>,
    z2_rate: Vec<f64>,
    z3_rate: Vec<f64>,
    rngs: Vec<SimRng>,
    next_z2: Vec<f64>,
    next_z3: Vec<f64>,
    present: Vec<usize>,
    last: Vec<Option<ZKind>>,
    last_time: Vec<f64>,
    clock: f64,
    counts: EventCounts,
    occurrences: Option<Occurrences>,
    error: Option<Error>,
}

impl EventCounters {
    pub fn new(
        instance: &MarketInstance,
        online: &OnlineMatch,
        burn_in: f64,
        horizon: f64,
        seed: u64,
        replication: u64,
        record_occurrences: bool,
    ) -> Result<Self> {
        let n = instance.num_types();
        if online.num_types() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: online.num_types(),
            });
        }
        let patient: Vec<bool> = (0..n).map(|x| !instance.departure_rate(x).is_infinite()).collect();
        let z2_rate: Vec<f64> = (0..n)
            .map(|x| (0..n).map(|y| instance.arrival_rate(y) * online.probability(x, y)).sum())
            .collect();
        let z3_rate: Vec<f64> = (0..n)
            .map(|x| match instance.departure_rate(x) {
                DepartureRate::Finite(mu) => mu,
                DepartureRate::Infinite => 0.0,
            })
            .collect();
        let mut rngs: Vec<SimRng> = (0..n)
            .map(|x| SimRng::lane(seed, replication, Lane::Diagnostics(x)))
            .collect();
        let mut next_z2 = Vec::with_capacity(n);
        let mut next_z3 = Vec::with_capacity(n);
        for x in 0..n {
            next_z2.push(next_clock(&mut rngs[x], 0.0, z2_rate[x])?);
            next_z3.push(next_clock(&mut rngs[x], 0.0, z3_rate[x])?);
        }
        Ok(Self {
            n,
            lo: burn_in,
            hi: horizon,
            patient,
            z2_rate,
            z3_rate,
            rngs,
            next_z2,
            next_z3,
            present: vec![0; n],
            last: vec![None; n],
            last_time: vec![0.0; n],
            clock: 0.0,
            counts: EventCounts::zeros(n, (horizon - burn_in).max(0.0)),
            occurrences: record_occurrences.then(Occurrences::default),
            error: None,
        })
    }

    fn in_window(&self, t: f64) -> bool {
        t >= self.lo && t <= self.hi
    }

    fn b(&self, x: usize) -> bool {
        self.last[x] == Some(ZKind::Z1)
    }

    fn mark(&mut self, t: f64, x: usize, kind: ZKind) {
        // accumulate the time B_x held since its last change
        if self.b(x) {
            self.counts.b_time[x] += (t.min(self.hi) - self.last_time[x].max(self.lo)).max(0.0);
        }
        self.last[x] = Some(kind);
        self.last_time[x] = t;
        if self.in_window(t) {
            let c = match kind {
                ZKind::Z1 => &mut self.counts.z1,
                ZKind::Z2 => &mut self.counts.z2,
                ZKind::Z3 => &mut self.counts.z3,
            };
            c[x] += 1;
            if let Some(o) = self.occurrences.as_mut() {
                o.z.push((t, x, kind));
            }
        }
    }

    /// Fires the independent clocks up to (not including) `t`. Presence is
    /// constant between observed events, so the current counts held on the
    /// whole interval since the previous event.
    fn advance(&mut self, t: f64) {
        if self.error.is_some() {
            return;
        }
        for x in 0..self.n {
            if !self.patient[x] {
                continue;
            }
            let absent = self.present[x] == 0;
            let not_single = self.present[x] != 1;
            loop {
                let (s2, s3) = (self.next_z2[x], self.next_z3[x]);
                let s = s2.min(s3);
                if s >= t {
                    break;
                }
                let (kind, rate) = if s2 <= s3 {
                    (ZKind::Z2, self.z2_rate[x])
                } else {
                    (ZKind::Z3, self.z3_rate[x])
                };
                if (kind == ZKind::Z2 && absent) || (kind == ZKind::Z3 && not_single) {
                    self.mark(s, x, kind);
                }
                match next_clock(&mut self.rngs[x], s, rate) {
                    Ok(next) if kind == ZKind::Z2 => self.next_z2[x] = next,
                    Ok(next) => self.next_z3[x] = next,
                    Err(e) => {
                        self.error = Some(e);
                        return;
                    }
                }
            }
        }
        self.clock = t;
    }

    /// Closes the measurement window; call once after the run.
    pub fn finish(mut self) -> Result<(EventCounts, Option<Occurrences>)> {
        if self.clock < self.hi {
            self.advance(self.hi);
        }
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        for x in 0..self.n {
            if self.b(x) {
                self.counts.b_time[x] += (self.hi - self.last_time[x].max(self.lo)).max(0.0);
            }
        }
        Ok((self.counts, self.occurrences))
    }
}

fn next_clock(rng: &mut SimRng, from: f64, rate: f64) -> Result<f64> {
    if rate > 0.0 {
        Ok(from + rng.exponential(rate)?)
    } else {
        Ok(f64::INFINITY)
    }
}

impl Observer for EventCounters {
    fn on_arrival(&mut self, t: f64, agent: AgentId, state: &MarketState, decision: Option<&MatchDecision>) {
        self.advance(t);
        if self.patient[agent.type_id] {
            self.present[agent.type_id] += 1;
        }
        let Some(d) = decision.filter(|d| d.checks.len() == self.n) else {
            self.error
                .get_or_insert(Error::NotOnlineMatch("arrival without pre-evaluated checks".into()));
            return;
        };
        let y = agent.type_id;
        let n = self.n;
        let counted = self.in_window(t);

        // Z4 and A use B as it stood strictly before this arrival. Z4_{x,y}
        // ignores whether x itself is present: x passes its check and no other
        // present type with a passing check comes earlier in the order.
        let mut blocked = false;
        let mut any_present_passes = false;
        for &x in &d.order {
            if !d.checks[x] {
                continue;
            }
            if !blocked && counted {
                let b = self.b(x);
                self.counts.z4[x * n + y] += 1;
                if b {
                    self.counts.z4_with_b[x * n + y] += 1;
                    self.counts.a[x * n + y] += 1;
                    if d.partner().is_some_and(|p| p.type_id == x) {
                        self.counts.a_matched[x * n + y] += 1;
                    }
                }
                if let Some(o) = self.occurrences.as_mut() {
                    o.z4.push((t, x, y));
                    if b {
                        o.a.push((t, x, y));
                    }
                }
            }
            if state.is_present(x) {
                blocked = true;
                any_present_passes = true;
            }
        }
        if counted {
            for at in d.attempts.iter().filter(|a| a.attempted) {
                self.counts.z4_available[at.type_id * n + y] += 1;
            }
        }

        if !any_present_passes {
            self.mark(t, y, ZKind::Z1);
        }
        for x in 0..n {
            if self.patient[x] && state.is_present(x) && d.checks[x] {
                self.mark(t, x, ZKind::Z2);
            }
        }
    }

    fn on_departure(&mut self, t: f64, agent: AgentId, state: &MarketState) {
        self.advance(t);
        let x = agent.type_id;
        if state.num_present(x) == 1 {
            self.mark(t, x, ZKind::Z3);
        }
        self.present[x] -= 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Inconclusive => "INCONCLUSIVE",
        }
    }
}

/// One checked bound. For floors the check is `empirical >= floor - 3 se`; for
/// constant rates it is `|empirical - floor| <= 5% of floor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub bound: String,
    pub empirical: f64,
    pub floor: f64,
    pub se: Option<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub rows: Vec<BoundRow>,
}

impl BoundReport {
    pub fn failures(&self) -> impl Iterator<Item = &BoundRow> {
        self.rows.iter().filter(|r| r.verdict == Verdict::Fail)
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.verdict == Verdict::Pass)
    }

    pub fn any_fail(&self) -> bool {
        self.failures().next().is_some()
    }

    pub fn row(&self, name: &str) -> Option<&BoundRow> {
        self.rows.iter().find(|r| r.bound == name)
    }
}

fn floor_row(bound: String, est: Estimate, floor: f64, enough: bool) -> BoundRow {
    let verdict = if floor <= 0.0 {
        Verdict::Pass
    } else if !enough || est.se.is_none_or(|se| 3.0 * se >= floor) {
        Verdict::Inconclusive
    } else if est.mean >= floor - 3.0 * est.se_or_zero() {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    BoundRow {
        bound,
        empirical: est.mean,
        floor,
        se: est.se,
        verdict,
    }
}

fn rate_row(bound: String, est: Estimate, target: f64, enough: bool) -> BoundRow {
    let verdict = if !enough {
        Verdict::Inconclusive
    } else if (est.mean - target).abs() <= RATE_TOLERANCE * target {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    BoundRow {
        bound,
        empirical: est.mean,
        floor: target,
        se: est.se,
        verdict,
    }
}

/// `min{1, lambda/mu} (1 - gamma) / (2 - gamma)`; zero for impatient types.
pub fn b_floor(lambda: f64, mu: DepartureRate, gamma: f64) -> f64 {
    match mu {
        DepartureRate::Finite(mu) => (lambda / mu).min(1.0) * (1.0 - gamma) / (2.0 - gamma),
        DepartureRate::Infinite => 0.0,
    }
}

/// `lambda_y (1 - gamma/2) gamma alpha_xy max(1, mu_x/lambda_x)`.
pub fn z4_floor(instance: &MarketInstance, solution: &LpSolution, gamma: f64, x: usize, y: usize) -> f64 {
    match instance.departure_rate(x) {
        DepartureRate::Finite(mu) => {
            instance.arrival_rate(y)
                * (1.0 - gamma / 2.0)
                * gamma
                * solution.alpha(x, y)
                * (mu / instance.arrival_rate(x)).max(1.0)
        }
        DepartureRate::Infinite => 0.0,
    }
}

/// `gamma (1 - gamma/2) (1 - gamma)/(2 - gamma) alpha_xy lambda_y`, which is
/// `alpha_xy lambda_y / 8` at gamma = 1/2.
pub fn pair_rate_floor(instance: &MarketInstance, solution: &LpSolution, gamma: f64, x: usize, y: usize) -> f64 {
    gamma * (1.0 - gamma / 2.0) * (1.0 - gamma) / (2.0 - gamma) * solution.alpha(x, y) * instance.arrival_rate(y)
}

/// Z2_x rate `gamma sum_y lambda_y alpha_xy max(1, mu_x/lambda_x)`.
pub fn z2_rate(instance: &MarketInstance, solution: &LpSolution, gamma: f64, x: usize) -> f64 {
    match instance.departure_rate(x) {
        DepartureRate::Finite(mu) => {
            let m = (mu / instance.arrival_rate(x)).max(1.0);
            (0..instance.num_types())
                .map(|y| gamma * instance.arrival_rate(y) * solution.alpha(x, y) * m)
                .sum()
        }
        DepartureRate::Infinite => 0.0,
    }
}

/// Judges the bounds from per-replication counts and simulation statistics of
/// the same runs.
pub fn check_rate_bounds(
    counts: &[EventCounts],
    stats: &[ReplicationStats],
    instance: &MarketInstance,
    solution: &LpSolution,
    gamma: f64,
) -> Result<BoundReport> {
    let n = instance.num_types();
    if counts.is_empty() || counts.len() != stats.len() {
        return Err(Error::InvalidArgument(
            "bound checks need matching, nonempty counts and statistics".into(),
        ));
    }
    let enough = stats.iter().all(|s| s.horizon >= MIN_BOUND_HORIZON);
    let est = |f: &dyn Fn(&EventCounts) -> f64| Estimate::from_samples(&counts.iter().map(f).collect::<Vec<_>>());
    let label = |x: usize| instance.label(x);
    let mut rows = Vec::new();
    for x in 0..n {
        if instance.departure_rate(x).is_infinite() {
            continue;
        }
        rows.push(rate_row(
            format!("z2_rate[{}]", label(x)),
            est(&|c| c.rate(c.z2[x])),
            z2_rate(instance, solution, gamma, x),
            enough,
        ));
        rows.push(rate_row(
            format!("z3_rate[{}]", label(x)),
            est(&|c| c.rate(c.z3[x])),
            instance.departure_rate(x).finite().unwrap_or(0.0),
            enough,
        ));
        let floor = b_floor(instance.arrival_rate(x), instance.departure_rate(x), gamma);
        rows.push(floor_row(
            format!("b_time_fraction[{}]", label(x)),
            est(&|c| c.b_time_fraction(x)),
            floor,
            enough,
        ));
        let at_z4: Vec<f64> = counts.iter().filter_map(|c| c.b_at_z4(x)).collect();
        if !at_z4.is_empty() {
            rows.push(floor_row(
                format!("b_at_z4[{}]", label(x)),
                Estimate::from_samples(&at_z4),
                floor,
                enough,
            ));
        }
        for y in 0..n {
            rows.push(floor_row(
                format!("z4_rate[{},{}]", label(x), label(y)),
                est(&|c| c.rate(c.z4[x * n + y])),
                z4_floor(instance, solution, gamma, x, y),
                enough,
            ));
        }
    }
    for x in 0..n {
        for y in 0..n {
            let samples: Vec<f64> = stats.iter().map(|s| s.pair_match_rates[x * n + y]).collect();
            rows.push(floor_row(
                format!("pair_rate[{},{}]", label(x), label(y)),
                Estimate::from_samples(&samples),
                pair_rate_floor(instance, solution, gamma, x, y),
                enough,
            ));
        }
    }
    Ok(BoundReport { rows })
}

#[derive(Debug, Clone)]
pub struct DiagnosticRun {
    pub counts: Vec<EventCounts>,
    pub occurrences: Vec<Option<Occurrences>>,
    pub stats: Vec<ReplicationStats>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticConfig {
    pub gamma: f64,
    pub horizon: f64,
    pub burn_in: f64,
    pub seed: u64,
    pub replications: u64,
    pub record_occurrences: bool,
}

/// Runs OnlineMatch with instrumentation for each replication.
pub fn run_diagnostics(
    instance: &MarketInstance,
    solution: &LpSolution,
    cfg: &DiagnosticConfig,
) -> Result<DiagnosticRun> {
    if cfg.replications == 0 {
        return Err(Error::InvalidArgument("replications must be at least 1".into()));
    }
    let online = OnlineMatch::new(instance, solution, cfg.gamma)?;
    let per_rep = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let mut counters = EventCounters::new(
                instance,
                &online,
                cfg.burn_in,
                cfg.horizon,
                cfg.seed,
                r,
                cfg.record_occurrences,
            )?;
            let run = RunConfig {
                solution: Some(solution),
                burn_in: cfg.burn_in,
                seed: cfg.seed,
                replication: r,
                ..RunConfig::new(instance, PolicyConfig::online_match(cfg.gamma), cfg.horizon)
            };
            let out = simulate(&run, &mut counters)?;
            let (counts, occ) = counters.finish()?;
            Ok((counts, occ, out.stats))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut run = DiagnosticRun {
        counts: Vec::new(),
        occurrences: Vec::new(),
        stats: Vec::new(),
    };
    for (c, o, s) in per_rep {
        run.counts.push(c);
        run.occurrences.push(o);
        run.stats.push(s);
    }
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub schema_version: u32,
    pub gamma: f64,
    pub horizon: f64,
    pub burn_in: f64,
    pub master_seed: u64,
    pub replications: u64,
    pub a_unmatched: u64,
    pub bounds: BoundReport,
    pub counts: Vec<EventCounts>,
}

impl DiagnosticReport {
    pub fn new(
        instance: &MarketInstance,
        solution: &LpSolution,
        cfg: &DiagnosticConfig,
        run: DiagnosticRun,
    ) -> Result<Self> {
        let bounds = check_rate_bounds(&run.counts, &run.stats, instance, solution, cfg.gamma)?;
        Ok(Self {
            schema_version: DIAGNOSTICS_SCHEMA_VERSION,
            gamma: cfg.gamma,
            horizon: cfg.horizon,
            burn_in: cfg.burn_in,
            master_seed: cfg.seed,
            replications: cfg.replications,
            a_unmatched: run.counts.iter().map(EventCounts::a_unmatched).sum(),
            bounds,
            counts: run.counts,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Convenience for callers that also want the merged simulation report.
pub fn simulation_report(instance: &MarketInstance, gamma: f64, run: &DiagnosticRun) -> Result<SimulationReport> {
    SimulationReport::from_replications(instance, &PolicyConfig::online_match(gamma), &run.stats)
}
