use dynmatch_core::diagnostics::{
    b_floor, check_rate_bounds, run_diagnostics, DiagnosticConfig, DiagnosticReport, EventCounters, Verdict,
    ZKind,
};
use dynmatch_core::lp::LpSolution;
use dynmatch_core::policy::OnlineMatch;
use dynmatch_core::sim::{simulate, RunConfig};
use dynmatch_core::{solve_instance, DepartureRate, MarketInstance, PolicyConfig};

fn single() -> MarketInstance {
    MarketInstance::new([("x".to_string(), 1.0, DepartureRate::Finite(1.0))], [(0, 0, 1.0)])
}

fn cfg(horizon: f64, replications: u64) -> DiagnosticConfig {
    DiagnosticConfig {
        gamma: 0.5,
        horizon,
        burn_in: horizon / 100.0,
        seed: 2024,
        replications,
        record_occurrences: false,
    }
}

#[test]
fn zero_alpha_makes_every_arrival_z1() {
    let inst = single();
    let zero = LpSolution::zeros(1);
    let run = run_diagnostics(&inst, &zero, &DiagnosticConfig { burn_in: 0.0, ..cfg(2000.0, 1) }).unwrap();
    let c = &run.counts[0];
    assert_eq!(c.z1[0], run.stats[0].arrivals);
    assert_eq!(c.z2[0], 0);
    assert_eq!(c.z4.iter().sum::<u64>(), 0);
}

#[test]
fn single_type_rates() {
    let inst = single();
    let sol = solve_instance(&inst).unwrap();
    let run = run_diagnostics(&inst, &sol, &cfg(1e4, 4)).unwrap();
    let rep = DiagnosticReport::new(&inst, &sol, &cfg(1e4, 4), run).unwrap();
    for row in &rep.bounds.rows {
        eprintln!("{row:?}");
    }
    let z3 = rep.bounds.row("z3_rate[x]").unwrap();
    assert!((z3.empirical - 1.0).abs() <= 0.05, "{z3:?}");
    let z2 = rep.bounds.row("z2_rate[x]").unwrap();
    assert!((z2.empirical - 0.25).abs() <= 0.05 * 0.25, "{z2:?}");
    assert!(!rep.bounds.any_fail());
}

#[test]
fn z_events_are_disjoint_and_a_never_exceeds_matches() {
    let inst = MarketInstance::new(
        [
            ("a".to_string(), 1.3, DepartureRate::Finite(0.6)),
            ("b".to_string(), 0.8, DepartureRate::Finite(1.7)),
        ],
        [(0, 0, 0.4), (0, 1, 1.0), (1, 1, 0.2)],
    );
    let sol = solve_instance(&inst).unwrap();
    let run = run_diagnostics(&inst, &sol, &DiagnosticConfig { record_occurrences: true, ..cfg(5000.0, 2) }).unwrap();
    let n = inst.num_types();
    for (occ, (counts, stats)) in run.occurrences.iter().zip(run.counts.iter().zip(&run.stats)) {
        let occ = occ.as_ref().unwrap();
        let mut keys: Vec<(u64, usize)> = occ.z.iter().map(|&(t, x, _)| (t.to_bits(), x)).collect();
        let total = keys.len();
        keys.sort_unstable();
        keys.dedup();
        assert_eq!(keys.len(), total, "an instant counted twice for one type");
        let per_kind = |k: ZKind| occ.z.iter().filter(|o| o.2 == k).count() as u64;
        assert_eq!(per_kind(ZKind::Z1), counts.z1.iter().sum::<u64>());
        for x in 0..n {
            for y in 0..n {
                let a = counts.a[x * n + y];
                let matches = stats.pair_match_rates[x * n + y] * counts.window;
                assert!(a as f64 <= matches + 1e-6, "A[{x},{y}]={a} > matches {matches}");
                assert!(counts.a_matched[x * n + y] <= a);
            }
        }
        eprintln!("A unmatched: {}", counts.a_unmatched());
    }
}

#[test]
fn rejects_other_policies() {
    let inst = single();
    let sol = solve_instance(&inst).unwrap();
    let online = OnlineMatch::new(&inst, &sol, 0.5).unwrap();
    let mut counters = EventCounters::new(&inst, &online, 0.0, 100.0, 1, 0, false).unwrap();
    let run = RunConfig::new(&inst, PolicyConfig::Greedy, 100.0);
    simulate(&run, &mut counters).unwrap();
    assert!(counters.finish().is_err());
}

#[test]
fn b_floor_examples() {
    assert!((b_floor(1.0, DepartureRate::Finite(1.0), 0.5) - 1.0 / 3.0).abs() < 1e-15);
    assert!((b_floor(1.0, DepartureRate::Finite(2.0), 0.5) - 1.0 / 6.0).abs() < 1e-15);
    assert_eq!(b_floor(1.0, DepartureRate::Infinite, 0.5), 0.0);
}

#[test]
fn short_runs_are_inconclusive() {
    let inst = single();
    let sol = solve_instance(&inst).unwrap();
    let run = run_diagnostics(&inst, &sol, &cfg(500.0, 3)).unwrap();
    let rep = check_rate_bounds(&run.counts, &run.stats, &inst, &sol, 0.5).unwrap();
    assert!(rep
        .rows
        .iter()
        .all(|r| r.verdict == Verdict::Inconclusive || r.floor == 0.0));
}
