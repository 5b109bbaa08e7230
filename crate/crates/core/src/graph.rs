//! Immutable node-labeled undirected graphs.

use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};

/// Dense label id, an index into a [`LabelVocabulary`].
pub type Label = u32;

/// Simple undirected graph with one label per node.
///
/// Node ids are `0..node_count()`. Neighbor lists are sorted ascending and
/// symmetric; there are no self-loops or parallel edges.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabeledGraph {
    labels: Vec<Label>,
    adjacency: Vec<Vec<usize>>,
    edge_count: usize,
}

impl LabeledGraph {
    /// Builds a graph from per-node labels and an undirected edge list.
    ///
    /// Duplicate edges (in either orientation) collapse to one. Self-loops and
    /// out-of-range endpoints are rejected.
    pub fn new(labels: Vec<Label>, edges: &[(usize, usize)]) -> Result<Self> {
        let n = labels.len();
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Structural(format!(
                    "edge ({u}, {v}) references a node outside 0..{n}"
                )));
            }
            if u == v {
                return Err(Error::Structural(format!("self-loop on node {u}")));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        let mut twice = 0;
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
            twice += list.len();
        }
        Ok(Self {
            labels,
            adjacency,
            edge_count: twice / 2,
        })
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn label(&self, v: usize) -> Label {
        self.labels[v]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    /// Largest label id plus one (0 for the empty graph).
    pub fn label_bound(&self) -> usize {
        self.labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0)
    }

    /// `2|E| / (|V|(|V|-1))`.
    pub fn edge_density(&self) -> Result<f64> {
        let n = self.node_count();
        if n < 2 {
            return Err(Error::Domain(format!(
                "edge density needs at least 2 nodes, graph has {n}"
            )));
        }
        Ok(2.0 * self.edge_count as f64 / (n as f64 * (n as f64 - 1.0)))
    }

    /// True iff the graph has exactly one connected component. The empty
    /// graph is reported as disconnected.
    pub fn is_connected(&self) -> bool {
        let n = self.node_count();
        if n == 0 {
            return false;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(u) = queue.pop_front() {
            for &v in self.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    reached += 1;
                    queue.push_back(v);
                }
            }
        }
        reached == n
    }

    /// Whether the given node subset induces a connected subgraph.
    pub fn is_connected_subset(&self, nodes: &[usize]) -> bool {
        if nodes.is_empty() {
            return false;
        }
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![0];
        seen[0] = true;
        let mut reached = 1;
        while let Some(i) = stack.pop() {
            for (j, &w) in nodes.iter().enumerate() {
                if !seen[j] && self.has_edge(nodes[i], w) {
                    seen[j] = true;
                    reached += 1;
                    stack.push(j);
                }
            }
        }
        reached == nodes.len()
    }

    /// Subgraph induced by `nodes`: every edge of `self` with both endpoints
    /// in the set. Nodes are renumbered `0..` in ascending original-id order.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Result<LabeledGraph> {
        if nodes.is_empty() {
            return Err(Error::Domain("induced subgraph of an empty node set".into()));
        }
        let mut sorted = nodes.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if let Some(&bad) = sorted.iter().find(|&&v| v >= self.node_count()) {
            return Err(Error::Domain(format!(
                "node {bad} out of range for a graph with {} nodes",
                self.node_count()
            )));
        }
        Ok(self.induced_sorted(&sorted))
    }

    /// Same as [`induced_subgraph`](Self::induced_subgraph) for a sorted,
    /// duplicate-free, in-range slice.
    pub(crate) fn induced_sorted(&self, sorted: &[usize]) -> LabeledGraph {
        let k = sorted.len();
        let labels = sorted.iter().map(|&v| self.labels[v]).collect();
        let mut adjacency = vec![Vec::new(); k];
        let mut edge_count = 0;
        for i in 0..k {
            for j in (i + 1)..k {
                if self.has_edge(sorted[i], sorted[j]) {
                    adjacency[i].push(j);
                    adjacency[j].push(i);
                    edge_count += 1;
                }
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        LabeledGraph {
            labels,
            adjacency,
            edge_count,
        }
    }

    /// Graph with node `v` renamed to `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> LabeledGraph {
        let n = self.node_count();
        assert_eq!(perm.len(), n, "permutation length must equal node count");
        let mut labels = vec![0; n];
        for v in 0..n {
            labels[perm[v]] = self.labels[v];
        }
        let edges: Vec<_> = self.edges().map(|(u, v)| (perm[u], perm[v])).collect();
        LabeledGraph::new(labels, &edges).expect("permutation preserves validity")
    }
}

/// Bijection between raw label tokens and dense ids, in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelVocabulary {
    tokens: Vec<String>,
    index: HashMap<String, Label>,
}

impl LabelVocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Self::new();
        for t in tokens {
            vocab.intern(&t.into());
        }
        vocab
    }

    /// Id of `token`, assigning the next free id on first sight.
    pub fn intern(&mut self, token: &str) -> Label {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len() as Label;
        self.tokens.push(token.to_owned());
        self.index.insert(token.to_owned(), id);
        id
    }

    pub fn id(&self, token: &str) -> Option<Label> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: Label) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}
