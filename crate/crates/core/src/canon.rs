//! Isomorphism machinery for small labeled graphs.
//!
//! Canonical codes come from color refinement seeded with `(label, degree)`,
//! followed by an exhaustive branch-and-bound search over the orderings that
//! respect the refined cells. The code is the smallest
//! `(label sequence, adjacency bits)` encoding among those orderings, so two
//! graphs share a code exactly when they are isomorphic.
//!
//! Embeddings are induced: a pattern edge maps to a target edge and a
//! pattern non-edge maps to a target non-edge.

use std::collections::{HashMap, HashSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::graph::LabeledGraph;

/// Largest graph [`canonical_code`] accepts by default.
pub const DEFAULT_MAX_NODES: usize = 10;

/// Per-thread count of calls into the counting routines in this module and in
/// [`crate::enumerator`]. Lets callers verify that a code path never counts.
pub mod probe {
    use std::cell::Cell;

    thread_local! {
        static CALLS: Cell<u64> = const { Cell::new(0) };
    }

    pub fn calls() -> u64 {
        CALLS.with(Cell::get)
    }

    pub fn reset() {
        CALLS.with(|c| c.set(0));
    }

    pub(crate) fn hit() {
        CALLS.with(|c| c.set(c.get() + 1));
    }
}

/// Isomorphism-class identity of a small labeled graph.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CanonicalCode(Vec<u8>);

impl CanonicalCode {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        hex::decode(s)
            .map(CanonicalCode)
            .map_err(|e| Error::Domain(format!("invalid canonical code {s:?}: {e}")))
    }

    /// Node count encoded in the code.
    pub fn node_count(&self) -> usize {
        self.0.first().copied().unwrap_or(0) as usize
    }
}

impl fmt::Debug for CanonicalCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CanonicalCode({})", self.to_hex())
    }
}

impl fmt::Display for CanonicalCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Injective map from pattern nodes to target nodes: `self.0[p]` is the
/// image of pattern node `p`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Embedding(pub Vec<usize>);

impl Embedding {
    /// Sorted image set.
    pub fn image_set(&self) -> Vec<usize> {
        let mut s = self.0.clone();
        s.sort_unstable();
        s
    }
}

fn refine_colors(g: &LabeledGraph) -> Vec<u32> {
    let n = g.node_count();
    let seed: Vec<(u32, usize)> = (0..n).map(|v| (g.label(v), g.degree(v))).collect();
    let mut colors = rank(&seed);
    let mut classes = count_distinct(&colors);
    loop {
        let sigs: Vec<(u32, Vec<u32>)> = (0..n)
            .map(|v| {
                let mut around: Vec<u32> = g.neighbors(v).iter().map(|&w| colors[w]).collect();
                around.sort_unstable();
                (colors[v], around)
            })
            .collect();
        let next = rank(&sigs);
        let next_classes = count_distinct(&next);
        colors = next;
        if next_classes == classes {
            return colors;
        }
        classes = next_classes;
    }
}

fn rank<T: Ord + Clone>(keys: &[T]) -> Vec<u32> {
    let mut sorted: Vec<T> = keys.to_vec();
    sorted.sort();
    sorted.dedup();
    keys.iter()
        .map(|k| sorted.binary_search(k).expect("key present") as u32)
        .collect()
}

fn count_distinct(colors: &[u32]) -> usize {
    colors.iter().collect::<HashSet<_>>().len()
}

struct OrderSearch<'a> {
    g: &'a LabeledGraph,
    /// Cell (set of vertices) that fills each position.
    cell_of_position: Vec<&'a [usize]>,
    order: Vec<usize>,
    used: Vec<bool>,
    bits: Vec<u8>,
    best: Option<Vec<u8>>,
    /// `twins[u][v]`: swapping `u` and `v` is an automorphism.
    twins: Vec<Vec<bool>>,
}

impl OrderSearch<'_> {
    fn search(&mut self, pos: usize) {
        let n = self.cell_of_position.len();
        if pos == n {
            if self.best.as_ref().is_none_or(|b| self.bits < *b) {
                self.best = Some(self.bits.clone());
            }
            return;
        }
        let cell = self.cell_of_position[pos];
        for (i, &v) in cell.iter().enumerate() {
            if self.used[v] || cell[..i].iter().any(|&u| !self.used[u] && self.twins[u][v]) {
                continue;
            }
            let start = self.bits.len();
            for &u in &self.order {
                self.bits.push(self.g.has_edge(u, v) as u8);
            }
            let worse = self
                .best
                .as_ref()
                .is_some_and(|b| self.bits.as_slice() > &b[..self.bits.len()]);
            if !worse {
                self.used[v] = true;
                self.order.push(v);
                self.search(pos + 1);
                self.order.pop();
                self.used[v] = false;
            }
            self.bits.truncate(start);
        }
    }
}

fn twin_matrix(g: &LabeledGraph) -> Vec<Vec<bool>> {
    let n = g.node_count();
    let mut twins = vec![vec![false; n]; n];
    for u in 0..n {
        for v in (u + 1)..n {
            if g.label(u) != g.label(v) || g.degree(u) != g.degree(v) {
                continue;
            }
            let strip = |a: usize, b: usize| g.neighbors(a).iter().copied().filter(move |&w| w != b);
            if strip(u, v).eq(strip(v, u)) {
                twins[u][v] = true;
                twins[v][u] = true;
            }
        }
    }
    twins
}

/// Canonical code of `g`; fails for graphs above [`DEFAULT_MAX_NODES`].
pub fn canonical_code(g: &LabeledGraph) -> Result<CanonicalCode> {
    canonical_code_bounded(g, DEFAULT_MAX_NODES)
}

pub fn canonical_code_bounded(g: &LabeledGraph, max_nodes: usize) -> Result<CanonicalCode> {
    probe::hit();
    let n = g.node_count();
    if n > max_nodes || n > u8::MAX as usize {
        return Err(Error::Domain(format!(
            "canonical codes are limited to {max_nodes} nodes, graph has {n}"
        )));
    }
    Ok(code_unchecked(g))
}

pub(crate) fn code_unchecked(g: &LabeledGraph) -> CanonicalCode {
    let n = g.node_count();
    let colors = refine_colors(g);
    let mut by_color: Vec<(u32, usize)> = (0..n).map(|v| (colors[v], v)).collect();
    by_color.sort_unstable();
    let mut cells: Vec<Vec<usize>> = Vec::new();
    let mut last = None;
    for &(c, v) in &by_color {
        if last != Some(c) {
            cells.push(Vec::new());
            last = Some(c);
        }
        cells.last_mut().unwrap().push(v);
    }
    let cell_of_position: Vec<&[usize]> = cells
        .iter()
        .flat_map(|cell| std::iter::repeat_n(cell.as_slice(), cell.len()))
        .collect();
    let labels: Vec<u32> = by_color.iter().map(|&(_, v)| g.label(v)).collect();

    let mut search = OrderSearch {
        g,
        cell_of_position,
        order: Vec::with_capacity(n),
        used: vec![false; n],
        bits: Vec::with_capacity(n * n / 2),
        best: None,
        twins: twin_matrix(g),
    };
    search.search(0);
    let bits = search.best.unwrap_or_default();

    let mut out = Vec::with_capacity(1 + 4 * n + bits.len() / 8 + 1);
    out.push(n as u8);
    for l in labels {
        out.extend_from_slice(&l.to_be_bytes());
    }
    for chunk in bits.chunks(8) {
        let mut byte = 0u8;
        for (i, &b) in chunk.iter().enumerate() {
            byte |= b << (7 - i);
        }
        out.push(byte);
    }
    CanonicalCode(out)
}

pub fn are_isomorphic(a: &LabeledGraph, b: &LabeledGraph) -> Result<bool> {
    if a.node_count() != b.node_count() || a.edge_count() != b.edge_count() {
        // Still validate the size bound on both inputs.
        canonical_code(a)?;
        canonical_code(b)?;
        return Ok(false);
    }
    Ok(canonical_code(a)? == canonical_code(b)?)
}

/// Pattern-node visiting order: highest degree first, then nodes with the most
/// already-placed neighbors, breaking ties by label, degree and id.
fn matching_order(pattern: &LabeledGraph) -> Vec<usize> {
    let k = pattern.node_count();
    let mut placed = vec![false; k];
    let mut order = Vec::with_capacity(k);
    while order.len() < k {
        let next = (0..k)
            .filter(|&v| !placed[v])
            .max_by(|&a, &b| {
                let links = |v: usize| pattern.neighbors(v).iter().filter(|&&w| placed[w]).count();
                links(a)
                    .cmp(&links(b))
                    .then(pattern.degree(a).cmp(&pattern.degree(b)))
                    .then(pattern.label(b).cmp(&pattern.label(a)))
                    .then(b.cmp(&a))
            })
            .expect("unplaced node exists");
        placed[next] = true;
        order.push(next);
    }
    order
}

struct Matcher<'a, F> {
    pattern: &'a LabeledGraph,
    target: &'a LabeledGraph,
    order: Vec<usize>,
    /// For each position, an earlier position adjacent to it in the pattern.
    anchor: Vec<Option<usize>>,
    image: Vec<usize>,
    used: Vec<bool>,
    visit: F,
}

impl<F: FnMut(&[usize])> Matcher<'_, F> {
    fn feasible(&self, pos: usize, t: usize) -> bool {
        let p = self.order[pos];
        if self.used[t]
            || self.target.label(t) != self.pattern.label(p)
            || self.target.degree(t) < self.pattern.degree(p)
        {
            return false;
        }
        self.order[..pos].iter().all(|&q| {
            self.pattern.has_edge(p, q) == self.target.has_edge(t, self.image[q])
        })
    }

    fn extend(&mut self, pos: usize) {
        if pos == self.order.len() {
            (self.visit)(&self.image);
            return;
        }
        let p = self.order[pos];
        let candidates: Vec<usize> = match self.anchor[pos] {
            Some(q) => self.target.neighbors(self.image[self.order[q]]).to_vec(),
            None => (0..self.target.node_count()).collect(),
        };
        for t in candidates {
            if self.feasible(pos, t) {
                self.used[t] = true;
                self.image[p] = t;
                self.extend(pos + 1);
                self.used[t] = false;
            }
        }
    }
}

/// Calls `visit` with every induced embedding of `pattern` into `target`
/// (indexed by pattern node), in a deterministic order.
pub fn for_each_embedding<F: FnMut(&[usize])>(
    pattern: &LabeledGraph,
    target: &LabeledGraph,
    visit: F,
) {
    let k = pattern.node_count();
    if k == 0 || k > target.node_count() {
        return;
    }
    let order = matching_order(pattern);
    let mut position = vec![0; k];
    for (i, &p) in order.iter().enumerate() {
        position[p] = i;
    }
    let anchor = order
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            pattern
                .neighbors(p)
                .iter()
                .map(|&w| position[w])
                .filter(|&j| j < i)
                .min()
        })
        .collect();
    let mut m = Matcher {
        pattern,
        target,
        order,
        anchor,
        image: vec![usize::MAX; k],
        used: vec![false; target.node_count()],
        visit,
    };
    m.extend(0);
}

pub fn enumerate_embeddings(pattern: &LabeledGraph, target: &LabeledGraph) -> Vec<Embedding> {
    probe::hit();
    let mut out = Vec::new();
    for_each_embedding(pattern, target, |img| out.push(Embedding(img.to_vec())));
    out
}

/// Number of distinct vertex sets of `target` whose induced subgraph is
/// isomorphic to `pattern`.
pub fn frequency(pattern: &LabeledGraph, target: &LabeledGraph) -> usize {
    probe::hit();
    let mut sets: HashSet<Vec<usize>> = HashSet::new();
    for_each_embedding(pattern, target, |img| {
        let mut s = img.to_vec();
        s.sort_unstable();
        sets.insert(s);
    });
    sets.len()
}

/// Minimum over pattern nodes of the number of distinct images the node takes
/// across all embeddings; 0 when there is no embedding.
pub fn mni(pattern: &LabeledGraph, target: &LabeledGraph) -> usize {
    probe::hit();
    let k = pattern.node_count();
    let mut images: Vec<HashSet<usize>> = vec![HashSet::new(); k];
    for_each_embedding(pattern, target, |img| {
        for (p, &t) in img.iter().enumerate() {
            images[p].insert(t);
        }
    });
    images.iter().map(HashSet::len).min().unwrap_or(0)
}

/// Frequency lookups memoized by canonical code, for repeated scoring of
/// vertex sets drawn from one fixed target graph.
#[derive(Debug, Default, Clone)]
pub struct FrequencyMemo {
    known: HashMap<CanonicalCode, usize>,
}

impl FrequencyMemo {
    pub fn new() -> Self {
        Self::default()
    }

    /// Frequency in `target` of the pattern induced by `nodes`.
    pub fn frequency_of_set(&mut self, target: &LabeledGraph, nodes: &[usize]) -> Result<usize> {
        let pattern = target.induced_subgraph(nodes)?;
        let code = canonical_code_bounded(&pattern, u8::MAX as usize)?;
        if let Some(&f) = self.known.get(&code) {
            return Ok(f);
        }
        let f = frequency(&pattern, target);
        self.known.insert(code, f);
        Ok(f)
    }

    pub fn len(&self) -> usize {
        self.known.len()
    }

    pub fn is_empty(&self) -> bool {
        self.known.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(labels: &[u32], edges: &[(usize, usize)]) -> LabeledGraph {
        LabeledGraph::new(labels.to_vec(), edges).unwrap()
    }

    fn triangle(l: [u32; 3]) -> LabeledGraph {
        g(&l, &[(0, 1), (1, 2), (0, 2)])
    }

    #[test]
    fn relabeled_triangles_share_a_code() {
        let a = triangle([0, 0, 0]);
        let b = a.permuted(&[2, 0, 1]);
        assert_eq!(canonical_code(&a).unwrap(), canonical_code(&b).unwrap());
        let path = g(&[0, 0, 0], &[(0, 1), (1, 2)]);
        assert_ne!(canonical_code(&a).unwrap(), canonical_code(&path).unwrap());
    }

    #[test]
    fn label_multiset_distinguishes() {
        assert!(!are_isomorphic(&triangle([0, 0, 0]), &triangle([0, 0, 1])).unwrap());
        let t = triangle([0, 1, 0]);
        assert!(are_isomorphic(&t, &t).unwrap());
    }

    #[test]
    fn oversized_graph_is_rejected() {
        let big = g(&[0; 11], &[]);
        assert!(matches!(canonical_code(&big), Err(Error::Domain(_))));
        assert!(canonical_code_bounded(&big, 11).is_ok());
        assert!(are_isomorphic(&big, &big).is_err());
    }

    #[test]
    fn hex_round_trip() {
        let c = canonical_code(&triangle([1, 2, 3])).unwrap();
        assert_eq!(CanonicalCode::from_hex(&c.to_hex()).unwrap(), c);
        assert_eq!(c.node_count(), 3);
        assert!(CanonicalCode::from_hex("zz").is_err());
    }

    #[test]
    fn regular_ten_node_graphs_are_fast_and_distinguished() {
        // Petersen graph vs. the 5-prism: both 3-regular on 10 nodes.
        let outer: Vec<_> = (0..5).map(|i| (i, (i + 1) % 5)).collect();
        let spokes: Vec<_> = (0..5).map(|i| (i, i + 5)).collect();
        let star: Vec<_> = (0..5).map(|i| (5 + i, 5 + (i + 2) % 5)).collect();
        let ring: Vec<_> = (0..5).map(|i| (5 + i, 5 + (i + 1) % 5)).collect();
        let petersen = g(&[0; 10], &[outer.clone(), spokes.clone(), star].concat());
        let prism = g(&[0; 10], &[outer, spokes, ring].concat());
        let cp = canonical_code(&petersen).unwrap();
        assert_ne!(cp, canonical_code(&prism).unwrap());
        let shuffled = petersen.permuted(&[3, 7, 1, 9, 0, 5, 2, 8, 6, 4]);
        assert_eq!(cp, canonical_code(&shuffled).unwrap());
    }

    #[test]
    fn embeddings_are_induced() {
        // A path pattern must not match inside a triangle.
        let path = g(&[0, 0, 0], &[(0, 1), (1, 2)]);
        assert!(enumerate_embeddings(&path, &triangle([0, 0, 0])).is_empty());
        assert_eq!(frequency(&path, &triangle([0, 0, 0])), 0);
        assert_eq!(mni(&path, &triangle([0, 0, 0])), 0);
    }

    #[test]
    fn pattern_larger_than_target_has_no_embedding() {
        let t = triangle([0, 0, 0]);
        assert!(enumerate_embeddings(&g(&[0; 4], &[]), &t).is_empty());
    }

    #[test]
    fn memo_matches_direct_count() {
        let target = g(&[0, 1, 0, 1, 0], &[(0, 1), (1, 2), (2, 3), (3, 4)]);
        let mut memo = FrequencyMemo::new();
        let direct = frequency(&target.induced_subgraph(&[0, 1, 2]).unwrap(), &target);
        assert_eq!(memo.frequency_of_set(&target, &[0, 1, 2]).unwrap(), direct);
        assert_eq!(memo.frequency_of_set(&target, &[2, 3, 4]).unwrap(), direct);
        assert_eq!(memo.len(), 1);
    }

    #[test]
    fn probe_counts_calls() {
        probe::reset();
        let t = triangle([0, 0, 0]);
        frequency(&t, &t);
        mni(&t, &t);
        assert_eq!(probe::calls(), 2);
    }
}
