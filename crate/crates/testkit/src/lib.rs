//! Test-only oracles. Nothing here calls into the canonicalization or
//! matching code it is used to check: isomorphism is decided by trying every
//! permutation and subsets are enumerated exhaustively.

use std::collections::VecDeque;

use kminer_core::LabeledGraph;
use rand::Rng;

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in (i + 1)..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Every permutation of `0..n` (Heap's algorithm).
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut a: Vec<usize> = (0..n).collect();
    let mut out = vec![a.clone()];
    let mut c = vec![0; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            out.push(a.clone());
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

pub fn adjacent(g: &LabeledGraph, u: usize, v: usize) -> bool {
    g.neighbors(u).contains(&v)
}

/// Breadth-first connectivity of the subgraph induced by `nodes`.
pub fn subset_connected(g: &LabeledGraph, nodes: &[usize]) -> bool {
    if nodes.is_empty() {
        return false;
    }
    let mut seen = vec![false; nodes.len()];
    seen[0] = true;
    let mut queue = VecDeque::from([0]);
    while let Some(i) = queue.pop_front() {
        for j in 0..nodes.len() {
            if !seen[j] && adjacent(g, nodes[i], nodes[j]) {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen.iter().all(|&s| s)
}

/// Induced subgraph built directly from the adjacency lists.
pub fn induced(g: &LabeledGraph, nodes: &[usize]) -> LabeledGraph {
    let labels = nodes.iter().map(|&v| g.label(v)).collect();
    let mut edges = Vec::new();
    for i in 0..nodes.len() {
        for j in (i + 1)..nodes.len() {
            if adjacent(g, nodes[i], nodes[j]) {
                edges.push((i, j));
            }
        }
    }
    LabeledGraph::new(labels, &edges).unwrap()
}

/// Isomorphism by exhaustive search over all bijections.
pub fn isomorphic(a: &LabeledGraph, b: &LabeledGraph) -> bool {
    let n = a.node_count();
    if n != b.node_count() || a.edge_count() != b.edge_count() {
        return false;
    }
    let mut la: Vec<u32> = a.labels().to_vec();
    let mut lb: Vec<u32> = b.labels().to_vec();
    la.sort_unstable();
    lb.sort_unstable();
    if la != lb {
        return false;
    }
    permutations(n).into_iter().any(|p| {
        (0..n).all(|v| a.label(v) == b.label(p[v]))
            && (0..n).all(|u| (u + 1..n).all(|v| adjacent(a, u, v) == adjacent(b, p[u], p[v])))
    })
}

pub fn connected_k_subsets(g: &LabeledGraph, k: usize) -> Vec<Vec<usize>> {
    combinations(g.node_count(), k)
        .into_iter()
        .filter(|s| subset_connected(g, s))
        .collect()
}

/// Isomorphism classes of connected induced `k`-subgraphs with their counts.
pub fn histogram(g: &LabeledGraph, k: usize) -> Vec<(LabeledGraph, usize)> {
    let mut classes: Vec<(LabeledGraph, usize)> = Vec::new();
    for s in connected_k_subsets(g, k) {
        let sub = induced(g, &s);
        match classes.iter_mut().find(|(rep, _)| isomorphic(rep, &sub)) {
            Some((_, c)) => *c += 1,
            None => classes.push((sub, 1)),
        }
    }
    classes
}

/// Number of vertex subsets of `target` inducing a copy of `pattern`.
pub fn frequency(pattern: &LabeledGraph, target: &LabeledGraph) -> usize {
    combinations(target.node_count(), pattern.node_count())
        .into_iter()
        .filter(|s| isomorphic(pattern, &induced(target, s)))
        .count()
}

/// Connected graph: a random spanning tree plus each remaining pair with
/// probability `extra_edge_prob`. Labels are drawn from `label_weights`.
pub fn random_connected_graph<R: Rng>(
    rng: &mut R,
    n: usize,
    label_weights: &[f64],
    extra_edge_prob: f64,
) -> LabeledGraph {
    let total: f64 = label_weights.iter().sum();
    let labels = (0..n)
        .map(|_| {
            let mut x = rng.random::<f64>() * total;
            for (i, w) in label_weights.iter().enumerate() {
                if x < *w {
                    return i as u32;
                }
                x -= w;
            }
            (label_weights.len() - 1) as u32
        })
        .collect();
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.random_range(0..v), v));
    }
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random::<f64>() < extra_edge_prob {
                edges.push((u, v));
            }
        }
    }
    LabeledGraph::new(labels, &edges).unwrap()
}

/// Central finite difference of `f` at `x` along every coordinate.
pub fn numeric_gradient<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + eps;
            let up = f(&probe);
            probe[i] = orig - eps;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Largest entrywise `|a - n| / max(|a|, |n|, floor)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
