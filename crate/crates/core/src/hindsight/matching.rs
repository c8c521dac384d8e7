//! Maximum-weight matching on small general graphs.

use std::collections::HashMap;
use std::convert::Infallible;

use petgraph::graph::UnGraph;

use crate::error::{Error, Result};

pub const DEFAULT_EXACT_THRESHOLD: usize = 20;
const MAX_EXACT_NODES: usize = 63;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightedGraph {
    pub num_nodes: usize,
    pub edges: Vec<Edge>,
}

impl WeightedGraph {
    pub fn new(num_nodes: usize) -> Self {
        Self {
            num_nodes,
            edges: Vec::new(),
        }
    }

    pub fn add_edge(&mut self, u: usize, v: usize, weight: f64) {
        assert!(u != v && u < self.num_nodes && v < self.num_nodes, "bad edge ({u}, {v})");
        self.edges.push(Edge { u, v, weight });
    }

    /// Connected components over positive-weight edges, each sorted, ordered by
    /// smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut parent: Vec<usize> = (0..self.num_nodes).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in self.edges.iter().filter(|e| e.weight > 0.0) {
            let (a, b) = (find(&mut parent, e.u), find(&mut parent, e.v));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
        for x in 0..self.num_nodes {
            let r = find(&mut parent, x);
            groups.entry(r).or_default().push(x);
        }
        let mut out: Vec<Vec<usize>> = groups.into_values().collect();
        out.sort_by_key(|c| c[0]);
        out
    }

    /// Subgraph induced on `nodes` (renumbered in the given order).
    pub fn induced(&self, nodes: &[usize]) -> WeightedGraph {
        let index: HashMap<usize, usize> = nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let mut g = WeightedGraph::new(nodes.len());
        for e in &self.edges {
            if let (Some(&u), Some(&v)) = (index.get(&e.u), index.get(&e.v)) {
                g.add_edge(u, v, e.weight);
            }
        }
        g
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Matching {
    /// Matched node pairs with `u < v`, sorted.
    pub pairs: Vec<(usize, usize)>,
    pub value: f64,
}

impl Matching {
    pub fn is_disjoint(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.pairs.iter().all(|&(u, v)| u != v && seen.insert(u) && seen.insert(v))
    }

    fn from_pairs(graph: &WeightedGraph, mut pairs: Vec<(usize, usize)>) -> Self {
        let w = best_weights(graph);
        pairs.iter_mut().for_each(|p| *p = (p.0.min(p.1), p.0.max(p.1)));
        pairs.sort_unstable();
        let value = pairs.iter().map(|p| w[p]).sum();
        Self { pairs, value }
    }
}

// heaviest positive weight per unordered pair
fn best_weights(graph: &WeightedGraph) -> HashMap<(usize, usize), f64> {
    let mut w: HashMap<(usize, usize), f64> = HashMap::new();
    for e in graph.edges.iter().filter(|e| e.weight > 0.0) {
        let key = (e.u.min(e.v), e.u.max(e.v));
        let slot = w.entry(key).or_insert(e.weight);
        if e.weight > *slot {
            *slot = e.weight;
        }
    }
    w
}

/// Globally optimal matching by memoized search over the set of unmatched
/// vertices: the lowest remaining vertex is either left single or matched to
/// one of its remaining neighbours.
pub fn max_weight_matching_exact(graph: &WeightedGraph, threshold: usize) -> Result<Matching> {
    let limit = threshold.min(MAX_EXACT_NODES);
    if graph.num_nodes > limit {
        return Err(Error::TooManyNodes {
            nodes: graph.num_nodes,
            threshold: limit,
        });
    }
    let n = graph.num_nodes;
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (&(u, v), &w) in &best_weights(graph) {
        adj[u].push((v, w));
        adj[v].push((u, w));
    }
    for a in adj.iter_mut() {
        a.sort_by_key(|&(v, _)| v);
    }

    struct Search<'a> {
        adj: &'a [Vec<(usize, f64)>],
        memo: HashMap<u64, f64>,
    }
    impl Search<'_> {
        fn best(&mut self, mask: u64) -> f64 {
            if mask == 0 {
                return 0.0;
            }
            if let Some(&v) = self.memo.get(&mask) {
                return v;
            }
            let v = mask.trailing_zeros() as usize;
            let rest = mask & !(1u64 << v);
            let mut best = self.best(rest);
            for &(u, w) in &self.adj[v] {
                if rest & (1u64 << u) != 0 {
                    let cand = w + self.best(rest & !(1u64 << u));
                    if cand > best {
                        best = cand;
                    }
                }
            }
            self.memo.insert(mask, best);
            best
        }
    }

    let full = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut s = Search {
        adj: &adj,
        memo: HashMap::new(),
    };
    let total = s.best(full);
    let mut pairs = Vec::new();
    let mut mask = full;
    while mask != 0 {
        let v = mask.trailing_zeros() as usize;
        let rest = mask & !(1u64 << v);
        let target = s.best(mask);
        if s.best(rest) == target {
            mask = rest;
            continue;
        }
        let &(u, _) = adj[v]
            .iter()
            .find(|&&(u, w)| rest & (1u64 << u) != 0 && w + s.best(rest & !(1u64 << u)) == target)
            .expect("memoized optimum is reachable");
        pairs.push((v, u));
        mask = rest & !(1u64 << u);
    }
    let m = Matching::from_pairs(graph, pairs);
    debug_assert!((m.value - total).abs() <= 1e-9 * total.max(1.0));
    Ok(m)
}

/// Repeatedly takes the heaviest remaining edge with both ends free.
pub fn greedy_matching(graph: &WeightedGraph) -> Matching {
    let mut edges: Vec<Edge> = graph.edges.iter().copied().filter(|e| e.weight > 0.0).collect();
    edges.sort_by(|a, b| {
        b.weight
            .total_cmp(&a.weight)
            .then((a.u.min(a.v), a.u.max(a.v)).cmp(&(b.u.min(b.v), b.u.max(b.v))))
    });
    let mut used = vec![false; graph.num_nodes];
    let mut pairs = Vec::new();
    for e in edges {
        if !used[e.u] && !used[e.v] {
            used[e.u] = true;
            used[e.v] = true;
            pairs.push((e.u, e.v));
        }
    }
    Matching::from_pairs(graph, pairs)
}

/// Edmonds' blossom algorithm (rustworkx-core) on weights scaled to integers
/// with 2^40 resolution relative to the heaviest edge.
pub fn blossom_matching(graph: &WeightedGraph) -> Matching {
    let w = best_weights(graph);
    if w.is_empty() {
        return Matching::default();
    }
    let wmax = w.values().copied().fold(0.0, f64::max);
    let scale = (1u64 << 40) as f64 / wmax;
    let mut g: UnGraph<(), i128> = UnGraph::with_capacity(graph.num_nodes, w.len());
    for _ in 0..graph.num_nodes {
        g.add_node(());
    }
    let mut keys: Vec<_> = w.keys().copied().collect();
    keys.sort_unstable();
    for (u, v) in keys {
        let iw = (w[&(u, v)] * scale).round() as i128;
        g.add_edge((u as u32).into(), (v as u32).into(), iw.max(1));
    }
    let set = rustworkx_core::max_weight_matching::max_weight_matching(
        &g,
        false,
        |e| Ok::<i128, Infallible>(*e.weight()),
        false,
    )
    .unwrap_or_else(|never| match never {});
    Matching::from_pairs(graph, set.into_iter().collect())
}

/// Solves each connected component separately: exactly when it has at most
/// `threshold` nodes, otherwise with the blossom algorithm if allowed.
pub fn max_weight_matching_by_component(
    graph: &WeightedGraph,
    threshold: usize,
    allow_blossom: bool,
) -> Result<Matching> {
    let mut pairs = Vec::new();
    for comp in graph.components() {
        if comp.len() < 2 {
            continue;
        }
        let sub = graph.induced(&comp);
        let m = if comp.len() <= threshold {
            max_weight_matching_exact(&sub, threshold)?
        } else if allow_blossom {
            blossom_matching(&sub)
        } else {
            return Err(Error::TooManyNodes {
                nodes: comp.len(),
                threshold,
            });
        };
        pairs.extend(m.pairs.iter().map(|&(u, v)| (comp[u], comp[v])));
    }
    Ok(Matching::from_pairs(graph, pairs))
}
