use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use dynmatch_core::hindsight::{max_weight_matching_exact, WeightedGraph};
use dynmatch_core::sim::{simulate, NoObserver, RunConfig};
use dynmatch_core::{solve_instance, DepartureRate, MarketInstance, PolicyConfig};

fn market(n: usize) -> MarketInstance {
    let types = (0..n).map(|i| (format!("t{i}"), 0.5 + 0.3 * i as f64, DepartureRate::Finite(1.0 + 0.2 * i as f64)));
    let mut values = Vec::new();
    for i in 0..n {
        for j in i..n {
            values.push((i, j, ((i * 7 + j * 3) % 10) as f64 / 10.0));
        }
    }
    MarketInstance::new(types, values)
}

fn dense_graph(n: usize) -> WeightedGraph {
    let mut g = WeightedGraph::new(n);
    for u in 0..n {
        for v in u + 1..n {
            if (u * 31 + v * 17) % 3 != 0 {
                g.add_edge(u, v, ((u * 13 + v * 5) % 97) as f64 / 97.0 + 0.01);
            }
        }
    }
    g
}

fn lp(c: &mut Criterion) {
    for n in [3, 8] {
        let inst = market(n);
        c.bench_function(&format!("lp_solve/{n}_types"), |b| b.iter(|| solve_instance(black_box(&inst)).unwrap()));
    }
}

fn simulation(c: &mut Criterion) {
    let inst = market(4);
    let sol = solve_instance(&inst).unwrap();
    let mut group = c.benchmark_group("simulate_1e4");
    for (name, policy) in [
        ("online_match", PolicyConfig::online_match(0.5)),
        ("greedy", PolicyConfig::Greedy),
    ] {
        group.bench_function(name, |b| {
            b.iter(|| {
                let cfg = RunConfig {
                    solution: Some(&sol),
                    ..RunConfig::new(&inst, policy, 1e4)
                };
                simulate(&cfg, &mut NoObserver).unwrap()
            })
        });
    }
    group.finish();
}

fn matching(c: &mut Criterion) {
    for n in [10, 16] {
        c.bench_function(&format!("exact_matching/{n}_nodes"), |b| {
            b.iter_batched(|| dense_graph(n), |g| max_weight_matching_exact(&g, 20).unwrap(), BatchSize::SmallInput)
        });
    }
}

criterion_group!(benches, lp, simulation, matching);
criterion_main!(benches);
