#[path = "support/oracles.rs"]
mod oracles;

use dynmatch_core::lp::{check_feasibility, FEASIBILITY_TOLERANCE};
use dynmatch_core::{solve_instance, DepartureRate, MarketInstance, SimRng};
use proptest::prelude::*;

#[test]
fn simplex_agrees_with_vertex_enumeration() {
    let mut rng = SimRng::new(0x1f);
    for _ in 0..60 {
        let n = 1 + (rng.uniform() * 3.0) as usize;
        let inst = oracles::random_instance(&mut rng, n.min(3), 0.5, 2.0);
        let sol = solve_instance(&inst).unwrap();
        let oracle = oracles::lp_vertex_oracle(&inst);
        assert!((sol.value - oracle).abs() < 1e-8, "simplex {} oracle {}", sol.value, oracle);
    }
}

#[test]
fn oracle_handles_impatient_types() {
    let inst = MarketInstance::new(
        [
            ("a".to_string(), 1.0, DepartureRate::Finite(1.0)),
            ("b".to_string(), 1.0, DepartureRate::Infinite),
        ],
        [(0, 1, 1.0)],
    );
    assert!((oracles::lp_vertex_oracle(&inst) - 1.0).abs() < 1e-12);
    assert!((solve_instance(&inst).unwrap().value - 1.0).abs() < 1e-8);
}

fn instance_strategy() -> impl Strategy<Value = MarketInstance> {
    (1usize..=3, any::<u64>()).prop_map(|(n, seed)| oracles::random_instance(&mut SimRng::new(seed), n, 0.5, 2.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solutions_are_feasible_and_arrivals_not_overmatched(inst in instance_strategy()) {
        let sol = solve_instance(&inst).unwrap();
        let report = check_feasibility(&inst, &sol, FEASIBILITY_TOLERANCE).unwrap();
        prop_assert!(report.feasible, "worst violation {}", report.worst_violation);
        let n = inst.num_types();
        for y in 0..n {
            let s: f64 = (0..n).map(|x| sol.alpha(x, y)).sum();
            prop_assert!(s <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn value_scales_with_values(inst in instance_strategy(), c in 0.1f64..10.0) {
        let base = solve_instance(&inst).unwrap().value;
        let scaled = MarketInstance { values: inst.values.scaled(c), ..inst.clone() };
        let v = solve_instance(&scaled).unwrap().value;
        prop_assert!((v - c * base).abs() <= 1e-8 * (1.0 + c * base));
    }

    #[test]
    fn value_scales_with_time(inst in instance_strategy(), c in 0.2f64..5.0) {
        // speeding up every clock multiplies the value per unit time by c
        let base = solve_instance(&inst).unwrap().value;
        let n = inst.num_types();
        let types: Vec<_> = (0..n)
            .map(|x| {
                let mu = match inst.departure_rate(x) {
                    DepartureRate::Finite(m) => DepartureRate::Finite(c * m),
                    DepartureRate::Infinite => DepartureRate::Infinite,
                };
                (inst.label(x).to_string(), c * inst.arrival_rate(x), mu)
            })
            .collect();
        let sped = MarketInstance::new(types, inst.values.pairs().collect::<Vec<_>>());
        let v = solve_instance(&sped).unwrap().value;
        prop_assert!((v - c * base).abs() <= 1e-8 * (1.0 + c * base));
    }
}
