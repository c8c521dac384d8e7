//! Replication runner and policy comparison on common random numbers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::diagnostics::pair_rate_floor;
use crate::error::{Error, Result};
use crate::hindsight::{hindsight_value_estimate, HindsightOptions, DEFAULT_EXACT_THRESHOLD};
use crate::lp::{solve_instance, LpSolution};
use crate::market::MarketInstance;
use crate::policy::PolicyConfig;
use crate::sim::{simulate, NoObserver, PolicyMeta, ReplicationOutcome, RunConfig, SimulationReport};
use crate::stats::Estimate;

pub const COMPARISON_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunPlan {
    pub horizon: f64,
    pub burn_in: f64,
    pub seed: u64,
    pub replications: u64,
    pub record_traces: bool,
    pub exact_threshold: usize,
}

impl RunPlan {
    pub fn new(horizon: f64, seed: u64, replications: u64) -> Self {
        Self {
            horizon,
            burn_in: horizon / 100.0,
            seed,
            replications,
            record_traces: false,
            exact_threshold: DEFAULT_EXACT_THRESHOLD,
        }
    }
}

/// Runs replications `0..plan.replications` (in parallel) and returns them in
/// replication order together with the merged report.
pub fn run_policy(
    instance: &MarketInstance,
    policy: &PolicyConfig,
    solution: Option<&LpSolution>,
    plan: &RunPlan,
) -> Result<(Vec<ReplicationOutcome>, SimulationReport)> {
    if plan.replications == 0 {
        return Err(Error::InvalidArgument("replications must be at least 1".into()));
    }
    let outcomes = (0..plan.replications)
        .into_par_iter()
        .map(|r| {
            let cfg = RunConfig {
                instance,
                policy: *policy,
                solution,
                horizon: plan.horizon,
                burn_in: plan.burn_in,
                seed: plan.seed,
                replication: r,
                record_trace: plan.record_traces,
                exact_threshold: plan.exact_threshold,
            };
            simulate(&cfg, &mut NoObserver)
        })
        .collect::<Result<Vec<_>>>()?;
    let stats: Vec<_> = outcomes.iter().map(|o| o.stats.clone()).collect();
    let report = SimulationReport::from_replications(instance, policy, &stats)?;
    Ok((outcomes, report))
}

/// A competitive ratio, or `NOT_APPLICABLE` when the LP value is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ratio {
    Value(f64),
    NotApplicable,
}

impl Ratio {
    pub fn of(value: f64, lp_value: f64) -> Self {
        if lp_value > 0.0 {
            Ratio::Value(value / lp_value)
        } else {
            Ratio::NotApplicable
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Ratio::Value(v) => Some(v),
            Ratio::NotApplicable => None,
        }
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Ratio::Value(v) => s.serialize_f64(*v),
            Ratio::NotApplicable => s.serialize_str("NOT_APPLICABLE"),
        }
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Ratio::Value(v)),
            Raw::Text(t) if t == "NOT_APPLICABLE" => Ok(Ratio::NotApplicable),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("unexpected ratio {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRow {
    pub policy: PolicyMeta,
    pub value: Estimate,
    pub ratio: Ratio,
    pub ratio_se: Option<f64>,
    /// Guaranteed ratio, only for OnlineMatch.
    pub theoretical_floor: Option<f64>,
    pub report: SimulationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HindsightRow {
    pub horizon: f64,
    pub replications: u64,
    pub hindsight: Estimate,
    /// Policy values at the same horizon, no burn-in, same arrival draws.
    pub policies: Vec<(PolicyMeta, Estimate)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub master_seed: u64,
    pub horizon: f64,
    pub burn_in: f64,
    pub replications: u64,
    pub types: Vec<String>,
    pub lp_value: f64,
    pub policies: Vec<PolicyRow>,
    pub hindsight: Vec<HindsightRow>,
}

impl ComparisonReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HindsightPlan {
    pub horizons: Vec<f64>,
    pub replications: u64,
    pub options: HindsightOptions,
}

/// OnlineMatch's guaranteed fraction of the LP value,
/// `gamma (1 - gamma/2) (1 - gamma)/(2 - gamma)`; 1/8 at gamma = 1/2.
pub fn online_match_floor(gamma: f64) -> f64 {
    gamma * (1.0 - gamma / 2.0) * (1.0 - gamma) / (2.0 - gamma)
}

/// Runs every policy on the same arrival realizations and reports values
/// against the LP bound, plus the hindsight ladder when requested.
pub fn compare_policies(
    instance: &MarketInstance,
    policies: &[PolicyConfig],
    plan: &RunPlan,
    hindsight: Option<&HindsightPlan>,
) -> Result<ComparisonReport> {
    instance.ensure_valid()?;
    let solution = solve_instance(instance)?;
    let mut rows = Vec::with_capacity(policies.len());
    for policy in policies {
        let (_, report) = run_policy(instance, policy, Some(&solution), plan)?;
        let value = report.avg_value_per_time;
        rows.push(PolicyRow {
            policy: policy.into(),
            value,
            ratio: Ratio::of(value.mean, solution.value),
            ratio_se: value.se.filter(|_| solution.value > 0.0).map(|se| se / solution.value),
            theoretical_floor: policy.gamma().map(online_match_floor),
            report,
        });
    }
    let mut ladder = Vec::new();
    if let Some(h) = hindsight {
        for &horizon in &h.horizons {
            let est = hindsight_value_estimate(instance, horizon, h.replications, plan.seed, h.options)?;
            let sub = RunPlan {
                horizon,
                burn_in: 0.0,
                replications: h.replications,
                record_traces: false,
                ..*plan
            };
            let mut values = Vec::new();
            for policy in policies {
                let (_, rep) = run_policy(instance, policy, Some(&solution), &sub)?;
                values.push((policy.into(), rep.avg_value_per_time));
            }
            ladder.push(HindsightRow {
                horizon,
                replications: h.replications,
                hindsight: est,
                policies: values,
            });
        }
    }
    Ok(ComparisonReport {
        schema_version: COMPARISON_SCHEMA_VERSION,
        master_seed: plan.seed,
        horizon: plan.horizon,
        burn_in: plan.burn_in,
        replications: plan.replications,
        types: (0..instance.num_types()).map(|x| instance.label(x).to_string()).collect(),
        lp_value: solution.value,
        policies: rows,
        hindsight: ladder,
    })
}

/// Pair-rate floors `gamma (1 - gamma/2)(1 - gamma)/(2 - gamma) alpha_xy lambda_y`,
/// row-major.
pub fn pair_rate_floors(instance: &MarketInstance, solution: &LpSolution, gamma: f64) -> Vec<f64> {
    let n = instance.num_types();
    let mut out = Vec::with_capacity(n * n);
    for x in 0..n {
        for y in 0..n {
            out.push(pair_rate_floor(instance, solution, gamma, x, y));
        }
    }
    out
}
