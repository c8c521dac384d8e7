use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use dynmatch_core::hindsight::{HindsightOptions, DEFAULT_EXACT_THRESHOLD};
use dynmatch_core::experiment::HindsightPlan;
use dynmatch_core::{MarketInstance, PolicyConfig, DEFAULT_GAMMA};
use serde::Deserialize;

use crate::{Failure, RunArgs};

pub const OUT_ENV: &str = "DYNMATCH_OUT";
const DEFAULT_OUT: &str = "dynmatch-out";

/// On-disk experiment file. Every field can be overridden from the command
/// line; relative paths resolve against the file's directory.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: Option<PathBuf>,
    #[serde(default)]
    pub policies: Vec<PolicyConfig>,
    pub horizon: Option<f64>,
    pub burn_in: Option<f64>,
    pub replications: Option<u64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub exact_threshold: Option<usize>,
    pub hindsight: Option<HindsightConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HindsightConfig {
    pub horizons: Vec<f64>,
    #[serde(default = "default_hindsight_replications")]
    pub replications: u64,
    #[serde(default = "default_true")]
    pub allow_blossom: bool,
}

fn default_hindsight_replications() -> u64 {
    100
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(Failure::Usage)?;
        let mut cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| {
                let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
                anyhow::anyhow!(
                    "config parse error{}: {}",
                    line.map(|l| format!(" at line {l}")).unwrap_or_default(),
                    e.message()
                )
            })
            .map_err(Failure::Usage)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(p) = cfg.instance.take() {
            cfg.instance = Some(base.join(p));
        }
        if let Some(p) = cfg.out.take() {
            cfg.out = Some(base.join(p));
        }
        Ok(cfg)
    }
}

/// Fully resolved experiment after applying flag overrides.
#[derive(Debug)]
pub struct Experiment {
    pub instance_path: PathBuf,
    pub instance: MarketInstance,
    pub policies: Vec<PolicyConfig>,
    pub horizon: f64,
    pub burn_in: f64,
    pub replications: u64,
    pub seed: u64,
    pub out: PathBuf,
    pub exact_threshold: usize,
    pub hindsight: Option<HindsightPlan>,
}

pub fn parse_policy(name: &str, clear_period: Option<f64>) -> anyhow::Result<PolicyConfig> {
    Ok(match name.to_ascii_lowercase().as_str() {
        "online_match" => PolicyConfig::online_match(DEFAULT_GAMMA),
        "greedy" => PolicyConfig::Greedy,
        "no_match" => PolicyConfig::NoMatch,
        "periodic_clear" => PolicyConfig::PeriodicClear {
            clear_period: clear_period.context("periodic_clear needs --clear-period")?,
        },
        other => bail!("unknown policy `{other}` (expected online_match, greedy, periodic_clear, no_match)"),
    })
}

pub fn resolve(args: &RunArgs) -> Result<Experiment, Failure> {
    let cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let usage = |m: String| Failure::Usage(anyhow::anyhow!(m));
    let instance_path = args
        .instance
        .clone()
        .or(cfg.instance)
        .ok_or_else(|| usage("no instance given (use --instance or `instance` in the config)".into()))?;
    let instance = MarketInstance::load(&instance_path).map_err(Failure::from_core)?;
    instance.ensure_valid().map_err(Failure::from_core)?;

    let mut policies = if args.policy.is_empty() {
        cfg.policies
    } else {
        args.policy
            .iter()
            .map(|p| parse_policy(p, args.clear_period))
            .collect::<anyhow::Result<Vec<_>>>()
            .map_err(Failure::Usage)?
    };
    if policies.is_empty() {
        policies.push(PolicyConfig::online_match(DEFAULT_GAMMA));
    }
    if let Some(g) = args.gamma {
        for p in policies.iter_mut() {
            if let PolicyConfig::OnlineMatch { gamma } = p {
                *gamma = g;
            }
        }
    }
    for p in &policies {
        p.validate().map_err(|e| Failure::Usage(e.into()))?;
    }

    let horizon = args
        .horizon
        .or(cfg.horizon)
        .ok_or_else(|| usage("no horizon given (use --horizon or `horizon` in the config)".into()))?;
    let burn_in = args.burn_in.or(cfg.burn_in).unwrap_or(horizon / 100.0);
    if !(horizon > 0.0 && horizon.is_finite()) || !(burn_in >= 0.0 && burn_in < horizon) {
        return Err(usage(format!(
            "need 0 <= burn_in < horizon, got burn_in={burn_in} horizon={horizon}"
        )));
    }
    let replications = args.replications.or(cfg.replications).unwrap_or(1);
    if replications == 0 {
        return Err(usage("replications must be at least 1".into()));
    }
    let out = args
        .out
        .clone()
        .or(cfg.out)
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let exact_threshold = args.exact_threshold.or(cfg.exact_threshold).unwrap_or(DEFAULT_EXACT_THRESHOLD);

    let mut hindsight = cfg.hindsight.map(|h| HindsightPlan {
        horizons: h.horizons,
        replications: h.replications,
        options: HindsightOptions {
            exact_threshold,
            allow_blossom: h.allow_blossom,
        },
    });
    if let Some(hs) = &args.hindsight_horizons {
        let plan = hindsight.get_or_insert(HindsightPlan {
            horizons: Vec::new(),
            replications: default_hindsight_replications(),
            options: HindsightOptions {
                exact_threshold,
                allow_blossom: true,
            },
        });
        plan.horizons = hs.clone();
    }
    if let (Some(plan), Some(r)) = (hindsight.as_mut(), args.hindsight_replications) {
        plan.replications = r;
    }
    if let Some(plan) = &hindsight {
        if plan.replications == 0 || plan.horizons.iter().any(|h| !(*h > 0.0)) {
            return Err(usage("hindsight horizons must be positive with at least one replication".into()));
        }
    }

    Ok(Experiment {
        instance_path,
        instance,
        policies,
        horizon,
        burn_in,
        replications,
        seed: args.seed.or(cfg.seed).unwrap_or(0),
        out,
        exact_threshold,
        hindsight,
    })
}
