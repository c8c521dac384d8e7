// Test-only oracles, written independently of the library's solvers.
#![allow(dead_code)]

use dynmatch_core::hindsight::WeightedGraph;
use dynmatch_core::{DepartureRate, MarketInstance, SimRng};

/// Random instance with rates in [lo, hi], values in [0, 1], all patient.
pub fn random_instance(rng: &mut SimRng, n: usize, lo: f64, hi: f64) -> MarketInstance {
    let types: Vec<(String, f64, DepartureRate)> = (0..n)
        .map(|x| {
            let lambda = lo + (hi - lo) * rng.uniform();
            let mu = lo + (hi - lo) * rng.uniform();
            (format!("t{x}"), lambda, DepartureRate::Finite(mu))
        })
        .collect();
    let mut values = Vec::new();
    for x in 0..n {
        for y in x..n {
            values.push((x, y, rng.uniform()));
        }
    }
    MarketInstance::new(types, values)
}

/// LP value by enumerating basic solutions. Each variable sits at 0, at its
/// upper bound min(1, lambda_x/mu_x), or is basic; k basic variables are
/// pinned down by k tight flow rows.
pub fn lp_vertex_oracle(inst: &MarketInstance) -> f64 {
    let n = inst.num_types();
    let lam: Vec<f64> = (0..n).map(|x| inst.arrival_rate(x)).collect();
    // variables (x, y) with x patient
    let mut vars = Vec::new();
    let mut upper = Vec::new();
    let mut obj = Vec::new();
    for x in 0..n {
        let DepartureRate::Finite(mu) = inst.departure_rate(x) else {
            continue;
        };
        for y in 0..n {
            vars.push((x, y));
            upper.push((lam[x] / mu).min(1.0));
            obj.push(inst.values.get(x, y) * lam[y]);
        }
    }
    let nv = vars.len();
    // flow row r: sum_y a_ry lam_y + sum_y a_yr lam_r <= lam_r
    let mut rows = vec![vec![0.0; nv]; n];
    for (j, &(x, y)) in vars.iter().enumerate() {
        rows[x][j] += lam[y];
        rows[y][j] += lam[y];
    }
    let feasible = |a: &[f64]| {
        a.iter().zip(&upper).all(|(&v, &u)| v >= -1e-9 && v <= u + 1e-9)
            && rows
                .iter()
                .enumerate()
                .all(|(r, row)| row.iter().zip(a).map(|(c, v)| c * v).sum::<f64>() <= lam[r] + 1e-9)
    };
    let mut best = 0.0f64;
    let mut state = vec![0u8; nv]; // 0 lower, 1 upper, 2 basic
    loop {
        let basic: Vec<usize> = (0..nv).filter(|&j| state[j] == 2).collect();
        let k = basic.len();
        if k <= n {
            for tight in subsets(n, k) {
                let mut a: Vec<f64> = (0..nv).map(|j| if state[j] == 1 { upper[j] } else { 0.0 }).collect();
                if k > 0 {
                    let mut m = vec![vec![0.0; k + 1]; k];
                    for (i, &r) in tight.iter().enumerate() {
                        let fixed: f64 = (0..nv).filter(|&j| state[j] != 2).map(|j| rows[r][j] * a[j]).sum();
                        for (c, &j) in basic.iter().enumerate() {
                            m[i][c] = rows[r][j];
                        }
                        m[i][k] = lam[r] - fixed;
                    }
                    let Some(sol) = gauss(m) else {
                        continue;
                    };
                    for (c, &j) in basic.iter().enumerate() {
                        a[j] = sol[c];
                    }
                }
                if feasible(&a) {
                    best = best.max(obj.iter().zip(&a).map(|(o, v)| o * v).sum());
                }
            }
        }
        // next assignment in base 3
        let mut i = 0;
        while i < nv && state[i] == 2 {
            state[i] = 0;
            i += 1;
        }
        if i == nv {
            break;
        }
        state[i] += 1;
    }
    best
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..(1 << n))
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|&i| m >> i & 1 == 1).collect())
        .collect()
}

// Gaussian elimination with partial pivoting on an augmented k x (k+1) matrix.
fn gauss(mut m: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let k = m.len();
    for c in 0..k {
        let p = (c..k).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs()))?;
        if m[p][c].abs() < 1e-12 {
            return None;
        }
        m.swap(c, p);
        for r in 0..k {
            if r != c {
                let f = m[r][c] / m[c][c];
                for j in c..=k {
                    m[r][j] -= f * m[c][j];
                }
            }
        }
    }
    Some((0..k).map(|i| m[i][k] / m[i][i]).collect())
}

/// Best matching value by trying every matching.
pub fn matching_enumeration_oracle(g: &WeightedGraph) -> f64 {
    let mut w = vec![vec![0.0f64; g.num_nodes]; g.num_nodes];
    for e in &g.edges {
        if e.u != e.v {
            w[e.u][e.v] = w[e.u][e.v].max(e.weight);
            w[e.v][e.u] = w[e.u][e.v];
        }
    }
    fn go(w: &[Vec<f64>], used: &mut [bool]) -> f64 {
        let Some(u) = used.iter().position(|&b| !b) else {
            return 0.0;
        };
        used[u] = true;
        let mut best = go(w, used);
        for v in 0..w.len() {
            if !used[v] && w[u][v] > 0.0 {
                used[v] = true;
                best = best.max(w[u][v] + go(w, used));
                used[v] = false;
            }
        }
        used[u] = false;
        best
    }
    go(&w, &mut vec![false; g.num_nodes])
}

/// Random graph on up to `max_nodes` nodes with edge probability 1/2 and
/// weights in (0, 1].
pub fn random_graph(rng: &mut SimRng, max_nodes: usize) -> WeightedGraph {
    let n = 1 + (rng.uniform() * max_nodes as f64) as usize;
    let n = n.min(max_nodes);
    let mut g = WeightedGraph::new(n);
    for u in 0..n {
        for v in u + 1..n {
            if rng.bernoulli(0.5) {
                g.add_edge(u, v, rng.uniform_open_closed());
            }
        }
    }
    g
}
