use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::MarketInstance;
use crate::policy::PolicyConfig;
use crate::sim::engine::ReplicationStats;
use crate::stats::Estimate;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMeta {
    pub kind: String,
    pub gamma: Option<f64>,
    pub clear_period: Option<f64>,
}

impl From<&PolicyConfig> for PolicyMeta {
    fn from(p: &PolicyConfig) -> Self {
        Self {
            kind: p.kind_name().to_string(),
            gamma: p.gamma(),
            clear_period: p.clear_period(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRate {
    /// Type of the agent that arrived first.
    pub earlier: String,
    pub later: String,
    pub rate: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeEstimate {
    pub label: String,
    pub estimate: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: u64,
    pub master_seed: u64,
    pub avg_value_per_time: f64,
    pub arrivals: u64,
    pub matches: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub schema_version: u32,
    pub policy: PolicyMeta,
    pub horizon: f64,
    pub burn_in: f64,
    pub master_seed: u64,
    pub types: Vec<String>,
    pub avg_value_per_time: Estimate,
    /// Every ordered pair of types, row-major by `earlier`.
    pub pair_match_rates: Vec<PairRate>,
    pub presence_frequency: Vec<TypeEstimate>,
    pub replications: Vec<ReplicationRecord>,
}

impl SimulationReport {
    /// Merges per-replication statistics; standard errors are taken across
    /// replications.
    pub fn from_replications(
        instance: &MarketInstance,
        policy: &PolicyConfig,
        reps: &[ReplicationStats],
    ) -> Result<Self> {
        let first = reps
            .first()
            .ok_or_else(|| Error::InvalidArgument("at least one replication is required".into()))?;
        let n = instance.num_types();
        let labels: Vec<String> = (0..n).map(|x| instance.label(x).to_string()).collect();
        let collect = |f: &dyn Fn(&ReplicationStats) -> f64| {
            Estimate::from_samples(&reps.iter().map(f).collect::<Vec<_>>())
        };
        let mut pair_match_rates = Vec::with_capacity(n * n);
        for x in 0..n {
            for y in 0..n {
                pair_match_rates.push(PairRate {
                    earlier: labels[x].clone(),
                    later: labels[y].clone(),
                    rate: collect(&|r| r.pair_match_rates[x * n + y]),
                });
            }
        }
        let presence_frequency = (0..n)
            .map(|x| TypeEstimate {
                label: labels[x].clone(),
                estimate: collect(&|r| r.presence_frequency[x]),
            })
            .collect();
        Ok(Self {
            schema_version: REPORT_SCHEMA_VERSION,
            policy: policy.into(),
            horizon: first.horizon,
            burn_in: first.burn_in,
            master_seed: first.seed,
            types: labels,
            avg_value_per_time: collect(&|r| r.avg_value_per_time),
            pair_match_rates,
            presence_frequency,
            replications: reps
                .iter()
                .map(|r| ReplicationRecord {
                    replication: r.replication,
                    master_seed: r.seed,
                    avg_value_per_time: r.avg_value_per_time,
                    arrivals: r.arrivals,
                    matches: r.matches,
                })
                .collect(),
        })
    }

    pub fn num_types(&self) -> usize {
        self.types.len()
    }

    pub fn pair_rate(&self, earlier: usize, later: usize) -> Estimate {
        self.pair_match_rates[earlier * self.num_types() + later].rate
    }

    /// Matches per unit time between types `x` and `y` in either arrival order.
    pub fn unordered_pair_rate(&self, x: usize, y: usize) -> f64 {
        if x == y {
            self.pair_rate(x, x).mean
        } else {
            self.pair_rate(x, y).mean + self.pair_rate(y, x).mean
        }
    }

    pub fn presence(&self, x: usize) -> Estimate {
        self.presence_frequency[x].estimate
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
