use dynmatch_core::experiment::{run_policy, RunPlan};
use dynmatch_core::sim::{estimate_rates, presence_frequency, simulate, NoObserver, RunConfig, TraceEvent};
use dynmatch_core::{run_simulation, solve_instance, DepartureRate, EventTrace, MarketInstance, PolicyConfig};
use proptest::prelude::*;

fn two_type() -> MarketInstance {
    MarketInstance::new(
        [
            ("a".to_string(), 1.2, DepartureRate::Finite(0.8)),
            ("b".to_string(), 0.7, DepartureRate::Finite(1.5)),
            ("c".to_string(), 0.9, DepartureRate::Infinite),
        ],
        [(0, 0, 0.3), (0, 1, 1.0), (1, 2, 0.6), (0, 2, 0.2)],
    )
}

fn policies() -> Vec<PolicyConfig> {
    vec![
        PolicyConfig::online_match(0.5),
        PolicyConfig::Greedy,
        PolicyConfig::PeriodicClear { clear_period: 0.7 },
        PolicyConfig::NoMatch,
    ]
}

#[test]
fn same_seed_same_trace() {
    let inst = two_type();
    let sol = solve_instance(&inst).unwrap();
    for p in policies() {
        let (t1, r1) = run_simulation(&inst, &p, Some(&sol), 300.0, 3.0, 42).unwrap();
        let (t2, r2) = run_simulation(&inst, &p, Some(&sol), 300.0, 3.0, 42).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(r1, r2);
        let (t3, _) = run_simulation(&inst, &p, Some(&sol), 300.0, 3.0, 43).unwrap();
        assert_ne!(t1, t3);
    }
}

#[test]
fn traces_replay_feasibly_and_report_is_recomputable() {
    let inst = two_type();
    let sol = solve_instance(&inst).unwrap();
    for p in policies() {
        let (trace, report) = run_simulation(&inst, &p, Some(&sol), 500.0, 5.0, 3).unwrap();
        assert_eq!(trace.validate(&inst), Vec::<String>::new(), "{p}");
        assert!((trace.avg_value_per_time() - report.avg_value_per_time.mean).abs() < 1e-9);
        let rates = estimate_rates(&trace, &inst);
        let n = inst.num_types();
        for x in 0..n {
            for y in 0..n {
                assert!((rates[x * n + y] - report.pair_rate(x, y).mean).abs() < 1e-9);
            }
            assert!((presence_frequency(&trace, x) - report.presence(x).mean).abs() < 1e-9);
        }
    }
}

#[test]
fn csv_round_trip_preserves_trace() {
    let inst = two_type();
    let sol = solve_instance(&inst).unwrap();
    let (trace, _) = run_simulation(&inst, &PolicyConfig::online_match(0.5), Some(&sol), 100.0, 1.0, 5).unwrap();
    let mut buf = Vec::new();
    trace.write_csv(&mut buf).unwrap();
    let back = EventTrace::read_csv(&buf[..]).unwrap();
    assert_eq!(back, trace);
}

#[test]
fn every_arrival_departs_once_and_matches_are_disjoint() {
    let inst = two_type();
    let sol = solve_instance(&inst).unwrap();
    let (trace, _) = run_simulation(&inst, &PolicyConfig::Greedy, Some(&sol), 400.0, 0.0, 11).unwrap();
    let arrivals = trace.events.iter().filter(|e| matches!(e, TraceEvent::Arrival { .. })).count();
    let departures = trace.events.iter().filter(|e| matches!(e, TraceEvent::Departure { .. })).count();
    assert_eq!(arrivals, departures);
    let mut seen = std::collections::HashSet::new();
    for e in &trace.events {
        if let TraceEvent::Match { earlier, later, .. } = e {
            assert!(seen.insert(*earlier) && seen.insert(*later));
        }
    }
}

#[test]
fn presence_law_single_type() {
    // presence including matched agents is independent of the policy
    let inst = MarketInstance::new([("x".to_string(), 1.0, DepartureRate::Finite(1.0))], [(0, 0, 1.0)]);
    let sol = solve_instance(&inst).unwrap();
    let expected = 1.0 - (-1.0f64).exp();
    for p in [PolicyConfig::NoMatch, PolicyConfig::online_match(0.5)] {
        let (_, report) = run_policy(&inst, &p, Some(&sol), &RunPlan::new(2e4, 1, 4)).unwrap();
        assert!((report.presence(0).mean - expected).abs() < 0.015, "{p}: {:?}", report.presence(0));
    }
}

#[test]
fn value_never_exceeds_matches_times_max_value() {
    let inst = two_type();
    let sol = solve_instance(&inst).unwrap();
    let cfg = RunConfig {
        solution: Some(&sol),
        ..RunConfig::new(&inst, PolicyConfig::online_match(0.5), 1000.0)
    };
    let out = simulate(&cfg, &mut NoObserver).unwrap();
    assert!(out.stats.total_value <= out.stats.matches as f64 * 1.0 + 1e-9);
    assert!(out.stats.matches <= out.stats.arrivals / 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conservation_across_policies(seed in any::<u64>(), which in 0usize..4) {
        let inst = two_type();
        let sol = solve_instance(&inst).unwrap();
        let p = policies()[which];
        let (trace, _) = run_simulation(&inst, &p, Some(&sol), 80.0, 0.0, seed).unwrap();
        prop_assert!(trace.validate(&inst).is_empty());
        let lifetimes = trace.lifetimes().unwrap();
        for (id, a, d) in lifetimes {
            prop_assert!(d >= a);
            if inst.departure_rate(id.type_id).is_infinite() {
                prop_assert_eq!(a, d);
            }
        }
    }
}
