//! `dynmatch` command-line front end.
//!
//! Exit codes: 0 success, 1 domain violation or failed bound, 2 usage or
//! parse error.

pub mod config;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use dynmatch_core::diagnostics::{run_diagnostics, DiagnosticConfig, DiagnosticReport, Verdict};
use dynmatch_core::experiment::{compare_policies, run_policy, ComparisonReport, Ratio, RunPlan};
use dynmatch_core::lp::{build_lp, check_feasibility, solve_lp, LpStatus, FEASIBILITY_TOLERANCE};
use dynmatch_core::{Error as CoreError, MarketInstance, PolicyConfig, DEFAULT_GAMMA};

use config::{resolve, Experiment};

#[derive(Debug, Parser)]
#[command(name = "dynmatch", version, about = "Dynamic matching market experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check an instance file for violations.
    Validate { instance: PathBuf },
    /// Solve the LP upper bound for an instance.
    Lp {
        instance: PathBuf,
        /// Solution JSON path; a tableau dump is written next to it. Prints to
        /// stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate policies and write traces and a merged report.
    Simulate(RunArgs),
    /// Compare policies on common arrivals against the LP bound.
    Compare(RunArgs),
    /// Instrument OnlineMatch runs and check the analysis bounds.
    Diagnose(RunArgs),
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// Experiment file (TOML); flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub instance: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long = "burn-in")]
    pub burn_in: Option<f64>,
    /// Overrides gamma of every ONLINE_MATCH policy.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub replications: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// online_match, greedy, periodic_clear or no_match; repeatable.
    #[arg(long)]
    pub policy: Vec<String>,
    #[arg(long = "clear-period")]
    pub clear_period: Option<f64>,
    #[arg(long = "exact-threshold")]
    pub exact_threshold: Option<usize>,
    #[arg(long = "hindsight-horizons", value_delimiter = ',')]
    pub hindsight_horizons: Option<Vec<f64>>,
    #[arg(long = "hindsight-replications")]
    pub hindsight_replications: Option<u64>,
}

#[derive(Debug)]
pub enum Failure {
    /// Exit 1.
    Domain(anyhow::Error),
    /// Exit 2.
    Usage(anyhow::Error),
}

impl Failure {
    pub fn from_core(e: CoreError) -> Self {
        match e {
            CoreError::InstanceParse { .. }
            | CoreError::InvalidArgument(_)
            | CoreError::Io { .. }
            | CoreError::Json(_)
            | CoreError::Csv(_) => Failure::Usage(e.into()),
            _ => Failure::Domain(e.into()),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Domain(_) => 1,
            Failure::Usage(_) => 2,
        }
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        Failure::from_core(e)
    }
}

type CmdResult = Result<u8, Failure>;

pub fn main_with(cli: Cli) -> ExitCode {
    let result = match cli.command {
        Command::Validate { instance } => cmd_validate(&instance),
        Command::Lp { instance, out } => cmd_lp(&instance, out.as_deref()),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Compare(args) => cmd_compare(&args),
        Command::Diagnose(args) => cmd_diagnose(&args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            let (Failure::Domain(e) | Failure::Usage(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.exit_code())
        }
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(Failure::Usage)?;
    }
    fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::Usage)
}

pub fn cmd_validate(path: &Path) -> CmdResult {
    let instance = MarketInstance::load(path)?;
    let report = instance.validate();
    if report.is_valid() {
        println!("{}: valid ({} types)", path.display(), instance.num_types());
        Ok(0)
    } else {
        println!("{}: {} violation(s)", path.display(), report.violations.len());
        for v in &report.violations {
            println!("  [{}] {}", v.code, v.message);
        }
        Ok(1)
    }
}

pub fn cmd_lp(path: &Path, out: Option<&Path>) -> CmdResult {
    let instance = MarketInstance::load(path)?;
    let lp = build_lp(&instance)?;
    let solution = solve_lp(&lp)?;
    if solution.status != LpStatus::Optimal {
        return Err(Failure::Domain(anyhow::anyhow!(
            "LP solver finished with status {}",
            solution.status.as_str()
        )));
    }
    let feas = check_feasibility(&instance, &solution, FEASIBILITY_TOLERANCE)?;
    if !feas.feasible {
        return Err(Failure::Domain(anyhow::anyhow!(
            "LP solution violates a constraint by {}",
            feas.worst_violation
        )));
    }
    let json = solution.to_json(&lp.labels)?;
    match out {
        Some(p) => {
            write_file(p, json.as_bytes())?;
            let mut dump = p.as_os_str().to_owned();
            dump.push(".tableau.txt");
            write_file(Path::new(&dump), lp.tableau_dump().as_bytes())?;
            println!("v* = {}  ({})", solution.value, p.display());
        }
        None => println!("{json}"),
    }
    Ok(0)
}

fn policy_dir(out: &Path, index: usize, policy: &PolicyConfig) -> PathBuf {
    out.join(format!("p{index}_{}", policy.kind_name().to_ascii_lowercase()))
}

fn needs_lp(exp: &Experiment) -> bool {
    exp.policies.iter().any(|p| matches!(p, PolicyConfig::OnlineMatch { .. }))
}

pub fn cmd_simulate(args: &RunArgs) -> CmdResult {
    let exp = resolve(args)?;
    // ONLINE_MATCH needs the LP solution; solve it first
    let solution = if needs_lp(&exp) {
        let lp = build_lp(&exp.instance)?;
        let sol = solve_lp(&lp)?;
        if sol.status != LpStatus::Optimal {
            return Err(Failure::Domain(anyhow::anyhow!("LP is {}", sol.status.as_str())));
        }
        write_file(&exp.out.join("lp_solution.json"), sol.to_json(&lp.labels)?.as_bytes())?;
        Some(sol)
    } else {
        None
    };
    let plan = RunPlan {
        horizon: exp.horizon,
        burn_in: exp.burn_in,
        seed: exp.seed,
        replications: exp.replications,
        record_traces: true,
        exact_threshold: exp.exact_threshold,
    };
    for (i, policy) in exp.policies.iter().enumerate() {
        let (outcomes, report) = run_policy(&exp.instance, policy, solution.as_ref(), &plan)?;
        let dir = policy_dir(&exp.out, i, policy);
        for o in &outcomes {
            let trace = o.trace.as_ref().expect("traces recorded");
            let mut buf = Vec::new();
            trace.write_csv(&mut buf)?;
            write_file(&dir.join(format!("trace_rep{}.csv", trace.replication)), &buf)?;
        }
        write_file(&dir.join("report.json"), report.to_json()?.as_bytes())?;
        let v = report.avg_value_per_time;
        println!(
            "{policy}: value/time = {:.6} (se {})  -> {}",
            v.mean,
            fmt_se(v.se),
            dir.display()
        );
    }
    Ok(0)
}

fn fmt_se(se: Option<f64>) -> String {
    se.map_or_else(|| "n/a".to_string(), |s| format!("{s:.6}"))
}

fn ratio_str(r: Ratio) -> String {
    match r {
        Ratio::Value(v) => format!("{v}"),
        Ratio::NotApplicable => "NOT_APPLICABLE".to_string(),
    }
}

fn comparison_csv(rep: &ComparisonReport) -> String {
    let mut s = String::from("schema_version,policy,gamma,value_mean,value_se,lp_value,ratio,ratio_se,theoretical_floor\n");
    for row in &rep.policies {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            rep.schema_version,
            row.policy.kind,
            row.policy.gamma.map(|g| g.to_string()).unwrap_or_default(),
            row.value.mean,
            row.value.se.map(|x| x.to_string()).unwrap_or_default(),
            rep.lp_value,
            ratio_str(row.ratio),
            row.ratio_se.map(|x| x.to_string()).unwrap_or_default(),
            row.theoretical_floor.map(|x| x.to_string()).unwrap_or_default(),
        ));
    }
    s
}

fn hindsight_csv(rep: &ComparisonReport) -> String {
    let mut s = String::from("schema_version,horizon,replications,series,mean,se\n");
    for row in &rep.hindsight {
        let mut line = |series: &str, mean: f64, se: Option<f64>| {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                rep.schema_version,
                row.horizon,
                row.replications,
                series,
                mean,
                se.map(|x| x.to_string()).unwrap_or_default()
            ));
        };
        line("HINDSIGHT", row.hindsight.mean, row.hindsight.se);
        for (meta, est) in &row.policies {
            line(&meta.kind, est.mean, est.se);
        }
    }
    s
}

pub fn cmd_compare(args: &RunArgs) -> CmdResult {
    let exp = resolve(args)?;
    let plan = RunPlan {
        horizon: exp.horizon,
        burn_in: exp.burn_in,
        seed: exp.seed,
        replications: exp.replications,
        record_traces: false,
        exact_threshold: exp.exact_threshold,
    };
    let rep = compare_policies(&exp.instance, &exp.policies, &plan, exp.hindsight.as_ref())?;
    write_file(&exp.out.join("comparison.json"), rep.to_json()?.as_bytes())?;
    write_file(&exp.out.join("comparison.csv"), comparison_csv(&rep).as_bytes())?;
    if !rep.hindsight.is_empty() {
        write_file(&exp.out.join("hindsight.csv"), hindsight_csv(&rep).as_bytes())?;
    }
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "v* = {}", rep.lp_value);
    for row in &rep.policies {
        let _ = writeln!(
            stdout,
            "{:<16} value {:.6} (se {})  ratio {}",
            row.policy.kind,
            row.value.mean,
            fmt_se(row.value.se),
            ratio_str(row.ratio)
        );
    }
    for row in &rep.hindsight {
        let _ = writeln!(
            stdout,
            "hindsight T={}: {:.6} (se {})",
            row.horizon,
            row.hindsight.mean,
            fmt_se(row.hindsight.se)
        );
    }
    Ok(0)
}

pub fn cmd_diagnose(args: &RunArgs) -> CmdResult {
    let exp = resolve(args)?;
    let gamma = match exp.policies.iter().find_map(PolicyConfig::gamma) {
        Some(g) => g,
        None if args.policy.is_empty() => DEFAULT_GAMMA,
        None => {
            return Err(Failure::Domain(anyhow::anyhow!(
                "diagnostics instrument ONLINE_MATCH only"
            )))
        }
    };
    let lp = build_lp(&exp.instance)?;
    let solution = solve_lp(&lp)?;
    if solution.status != LpStatus::Optimal {
        return Err(Failure::Domain(anyhow::anyhow!("LP is {}", solution.status.as_str())));
    }
    let cfg = DiagnosticConfig {
        gamma,
        horizon: exp.horizon,
        burn_in: exp.burn_in,
        seed: exp.seed,
        replications: exp.replications,
        record_occurrences: false,
    };
    let run = run_diagnostics(&exp.instance, &solution, &cfg)?;
    let report = DiagnosticReport::new(&exp.instance, &solution, &cfg, run)?;
    write_file(&exp.out.join("diagnostics.json"), report.to_json()?.as_bytes())?;
    let mut csv = String::from("schema_version,bound,empirical,floor,se,verdict\n");
    for r in &report.bounds.rows {
        csv.push_str(&format!(
            "{},\"{}\",{},{},{},{}\n",
            report.schema_version,
            r.bound,
            r.empirical,
            r.floor,
            r.se.map(|x| x.to_string()).unwrap_or_default(),
            r.verdict.as_str()
        ));
        println!(
            "{:<28} {:<12} empirical {:.6} floor {:.6} se {}",
            r.bound,
            r.verdict.as_str(),
            r.empirical,
            r.floor,
            fmt_se(r.se)
        );
    }
    write_file(&exp.out.join("bounds.csv"), csv.as_bytes())?;
    println!("A occurrences without a matching x partner: {}", report.a_unmatched);
    Ok(if report.bounds.rows.iter().any(|r| r.verdict == Verdict::Fail) {
        1
    } else {
        0
    })
}
