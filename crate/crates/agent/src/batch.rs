use std::ops::Range;

use kminer_core::{LabeledGraph, StateSnapshot};

use crate::config::NetConfig;
use crate::error::{Error, Result};

/// Several `(graph, state)` pairs laid out as one disjoint union. Node `v` of
/// member `b` is row `groups[b].start + v`.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub groups: Vec<Range<usize>>,
    pub node_graph: Vec<usize>,
    pub labels: Vec<usize>,
    pub state: Vec<usize>,
    /// Directed edges, both orientations of every undirected edge.
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub degree: Vec<f64>,
    pub remaining: Vec<usize>,
    pub k: Vec<usize>,
    /// Valid actions; all false for terminal members.
    pub mask: Vec<bool>,
}

impl GraphBatch {
    pub fn new(items: &[(&LabeledGraph, &StateSnapshot)], cfg: &NetConfig) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Contract("empty graph batch".into()));
        }
        let total: usize = items.iter().map(|(g, _)| g.node_count()).sum();
        let mut b = GraphBatch {
            groups: Vec::with_capacity(items.len()),
            node_graph: Vec::with_capacity(total),
            labels: Vec::with_capacity(total),
            state: Vec::with_capacity(total),
            src: Vec::new(),
            dst: Vec::new(),
            degree: Vec::with_capacity(total),
            remaining: Vec::with_capacity(items.len()),
            k: Vec::with_capacity(items.len()),
            mask: Vec::with_capacity(total),
        };
        for (gi, (g, s)) in items.iter().enumerate() {
            let n = g.node_count();
            if n == 0 {
                return Err(Error::Contract("graph without nodes in batch".into()));
            }
            if s.selection.len() != n {
                return Err(Error::Contract(format!(
                    "state covers {} nodes, graph has {n}",
                    s.selection.len()
                )));
            }
            let task = s.task;
            if task.k > cfg.k_max || task.remaining > task.k || task.k == 0 {
                return Err(Error::Domain(format!(
                    "task ({}, {}) outside the supported range k <= {}",
                    task.remaining, task.k, cfg.k_max
                )));
            }
            let off = b.node_graph.len();
            b.groups.push(off..off + n);
            for v in 0..n {
                let label = g.label(v) as usize;
                if label >= cfg.label_vocab_size {
                    return Err(Error::Domain(format!(
                        "label id {label} outside a vocabulary of {}",
                        cfg.label_vocab_size
                    )));
                }
                b.node_graph.push(gi);
                b.labels.push(label);
                b.state.push(usize::from(s.selection[v]));
                b.degree.push(g.degree(v) as f64);
                for &u in g.neighbors(v) {
                    b.src.push(off + v);
                    b.dst.push(off + u);
                }
            }
            if task.is_terminal() {
                b.mask.extend(std::iter::repeat_n(false, n));
            } else {
                b.mask.extend(s.valid_mask(g));
            }
            b.remaining.push(task.remaining);
            b.k.push(task.k);
        }
        Ok(b)
    }

    pub fn graph_count(&self) -> usize {
        self.groups.len()
    }

    pub fn node_count(&self) -> usize {
        self.node_graph.len()
    }

    pub fn valid_counts(&self) -> Vec<usize> {
        self.groups
            .iter()
            .map(|g| self.mask[g.clone()].iter().filter(|&&m| m).count())
            .collect()
    }

    pub(crate) fn require_actions(&self) -> Result<()> {
        if self.valid_counts().contains(&0) {
            return Err(Error::Contract("a batch member has no valid action".into()));
        }
        Ok(())
    }
}
