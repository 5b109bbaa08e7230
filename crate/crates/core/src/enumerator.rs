//! Exact enumeration: connected k-vertex sets (ESU), per-pattern histograms,
//! the most-frequent-pattern oracle, and the two reference baselines.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::canon::{self, probe, CanonicalCode, FrequencyMemo, DEFAULT_MAX_NODES};
use crate::error::{parse_err, Error, Result};
use crate::graph::LabeledGraph;
use crate::mdp::{run_episode, RewardMode};

struct Esu<'a, F> {
    g: &'a LabeledGraph,
    k: usize,
    sub: Vec<usize>,
    /// Number of nodes in `sub` that equal or neighbor each vertex.
    cover: Vec<u32>,
    visit: F,
}

impl<F: FnMut(&[usize])> Esu<'_, F> {
    fn push(&mut self, w: usize) {
        self.sub.push(w);
        self.cover[w] += 1;
        for &x in self.g.neighbors(w) {
            self.cover[x] += 1;
        }
    }

    fn pop(&mut self) {
        let w = self.sub.pop().expect("non-empty");
        self.cover[w] -= 1;
        for &x in self.g.neighbors(w) {
            self.cover[x] -= 1;
        }
    }

    fn extend(&mut self, mut ext: Vec<usize>, root: usize) {
        if self.sub.len() == self.k {
            let mut set = self.sub.clone();
            set.sort_unstable();
            (self.visit)(&set);
            return;
        }
        while let Some(w) = ext.pop() {
            let mut next = ext.clone();
            next.extend(
                self.g
                    .neighbors(w)
                    .iter()
                    .copied()
                    .filter(|&u| u > root && self.cover[u] == 0),
            );
            self.push(w);
            self.extend(next, root);
            self.pop();
        }
    }
}

/// Streams every vertex set of size `k` that induces a connected subgraph,
/// each exactly once, as a sorted slice.
pub fn for_each_connected_k_set<F: FnMut(&[usize])>(
    g: &LabeledGraph,
    k: usize,
    visit: F,
) -> Result<()> {
    probe::hit();
    if k == 0 || k > g.node_count() {
        return Err(Error::Domain(format!(
            "subgraph size {k} outside 1..={}",
            g.node_count()
        )));
    }
    let mut esu = Esu {
        g,
        k,
        sub: Vec::with_capacity(k),
        cover: vec![0; g.node_count()],
        visit,
    };
    for root in 0..g.node_count() {
        let ext: Vec<usize> = g.neighbors(root).iter().copied().filter(|&u| u > root).collect();
        esu.push(root);
        esu.extend(ext, root);
        esu.pop();
    }
    Ok(())
}

pub fn enumerate_connected_k_sets(g: &LabeledGraph, k: usize) -> Result<Vec<Vec<usize>>> {
    let mut out = Vec::new();
    for_each_connected_k_set(g, k, |s| out.push(s.to_vec()))?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternCount {
    pub frequency: usize,
    /// First enumerated vertex set inducing this pattern.
    pub witness: Vec<usize>,
}

/// Connected k-vertex sets of one graph grouped by isomorphism class.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PatternHistogram {
    pub k: usize,
    pub entries: BTreeMap<CanonicalCode, PatternCount>,
}

impl PatternHistogram {
    pub fn total(&self) -> usize {
        self.entries.values().map(|e| e.frequency).sum()
    }

    pub fn get(&self, code: &CanonicalCode) -> Option<&PatternCount> {
        self.entries.get(code)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Adds the counts of `other` (same `k`); the witness of the
    /// lexicographically smaller vertex set is kept, so the result does not
    /// depend on merge order.
    pub fn merge(&mut self, other: PatternHistogram) {
        for (code, c) in other.entries {
            match self.entries.get_mut(&code) {
                Some(mine) => {
                    mine.frequency += c.frequency;
                    if c.witness < mine.witness {
                        mine.witness = c.witness;
                    }
                }
                None => {
                    self.entries.insert(code, c);
                }
            }
        }
    }
}

/// Counts every connected induced k-subgraph of `g` by canonical code.
pub fn pattern_histogram(g: &LabeledGraph, k: usize) -> Result<PatternHistogram> {
    if k > DEFAULT_MAX_NODES {
        return Err(Error::Domain(format!(
            "histograms are limited to k <= {DEFAULT_MAX_NODES}, got {k}"
        )));
    }
    let mut hist = PatternHistogram {
        k,
        entries: BTreeMap::new(),
    };
    for_each_connected_k_set(g, k, |set| {
        let code = canon::code_unchecked(&g.induced_sorted(set));
        hist.entries
            .entry(code)
            .and_modify(|c| c.frequency += 1)
            .or_insert_with(|| PatternCount {
                frequency: 1,
                witness: set.to_vec(),
            });
    })?;
    Ok(hist)
}

/// Ground-truth optimum for one `(graph, k)` pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleEntry {
    pub graph_id: usize,
    pub k: usize,
    pub best_code: CanonicalCode,
    pub best_frequency: usize,
    pub witness: Vec<usize>,
}

impl OracleEntry {
    pub fn with_graph_id(mut self, graph_id: usize) -> Self {
        self.graph_id = graph_id;
        self
    }
}

/// Highest-frequency entry of a histogram; ties go to the smaller code.
pub fn best_of(hist: &PatternHistogram) -> Option<OracleEntry> {
    let mut best: Option<(&CanonicalCode, &PatternCount)> = None;
    for (code, c) in &hist.entries {
        if best.is_none_or(|(_, b)| c.frequency > b.frequency) {
            best = Some((code, c));
        }
    }
    best.map(|(code, c)| OracleEntry {
        graph_id: 0,
        k: hist.k,
        best_code: code.clone(),
        best_frequency: c.frequency,
        witness: c.witness.clone(),
    })
}

/// Most frequent connected induced k-subgraph of `g` (graph id 0).
pub fn most_frequent(g: &LabeledGraph, k: usize) -> Result<OracleEntry> {
    let hist = pattern_histogram(g, k)?;
    best_of(&hist).ok_or(Error::NotFound(k))
}

/// Random-policy baseline: `n_samples` uniformly random episodes, returning
/// the best frequency seen and the vertex set that achieved it first.
pub fn rand_baseline(
    g: &LabeledGraph,
    k: usize,
    n_samples: usize,
    seed: u64,
) -> Result<(usize, Vec<usize>)> {
    if n_samples == 0 {
        return Err(Error::Domain("rand baseline needs at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut memo = FrequencyMemo::new();
    let mut best: Option<(usize, Vec<usize>)> = None;
    for _ in 0..n_samples {
        let episode = run_episode(
            g,
            k,
            |s| {
                let valid = s.valid_action_list().expect("non-terminal");
                *valid.choose(&mut rng).expect("connected graph has a valid action")
            },
            RewardMode::Raw,
            None,
            &mut memo,
        )?;
        if best.as_ref().is_none_or(|(f, _)| episode.frequency > *f) {
            let mut nodes = episode.nodes;
            nodes.sort_unstable();
            best = Some((episode.frequency, nodes));
        }
    }
    Ok(best.expect("at least one sample"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaxMni {
    pub code: CanonicalCode,
    pub mni: usize,
    pub frequency: usize,
    pub witness: Vec<usize>,
}

/// Pattern with the highest MNI support among all connected induced
/// k-subgraphs (ties to the smaller code), with its plain frequency.
///
/// Runs a full embedding enumeration per pattern; intended for small graphs.
pub fn max_mni_pattern(g: &LabeledGraph, k: usize) -> Result<MaxMni> {
    let hist = pattern_histogram(g, k)?;
    let mut best: Option<MaxMni> = None;
    for (code, c) in &hist.entries {
        let pattern = g.induced_sorted(&c.witness);
        let support = canon::mni(&pattern, g);
        if best.as_ref().is_none_or(|b| support > b.mni) {
            best = Some(MaxMni {
                code: code.clone(),
                mni: support,
                frequency: c.frequency,
                witness: c.witness.clone(),
            });
        }
    }
    best.ok_or(Error::NotFound(k))
}

/// Persisted oracle results, keyed by `(graph_id, k)`.
///
/// Text form, one line per entry:
/// `graph_id,k,best_frequency,best_code_hex,witness ids separated by spaces`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OracleCache {
    entries: BTreeMap<(usize, usize), OracleEntry>,
}

impl OracleCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, entry: OracleEntry) {
        self.entries.insert((entry.graph_id, entry.k), entry);
    }

    pub fn get(&self, graph_id: usize, k: usize) -> Option<&OracleEntry> {
        self.entries.get(&(graph_id, k))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &OracleEntry> {
        self.entries.values()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cache = Self::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let [gid, k, freq, code, witness] = fields.as_slice() else {
                return Err(parse_err(line_no, format!("expected 5 fields, got {}", fields.len())));
            };
            let num = |s: &str, what: &str| -> Result<usize> {
                s.trim()
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("invalid {what} {s:?}")))
            };
            let k = num(k, "k")?;
            let witness = witness
                .split_whitespace()
                .map(|s| num(s, "witness node"))
                .collect::<Result<Vec<_>>>()?;
            if witness.len() != k {
                return Err(parse_err(
                    line_no,
                    format!("witness has {} nodes, expected {k}", witness.len()),
                ));
            }
            let best_code = CanonicalCode::from_hex(code.trim())
                .map_err(|e| parse_err(line_no, e.to_string()))?;
            cache.insert(OracleEntry {
                graph_id: num(gid, "graph id")?,
                k,
                best_code,
                best_frequency: num(freq, "frequency")?,
                witness,
            });
        }
        Ok(cache)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in self.entries.values() {
            let witness: Vec<String> = e.witness.iter().map(usize::to_string).collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                e.graph_id,
                e.k,
                e.best_frequency,
                e.best_code.to_hex(),
                witness.join(" ")
            );
        }
        out
    }
}
