//! Episodic node-selection process on a target graph.
//!
//! An episode for size `k` starts with nothing selected. Each step selects one
//! unselected node; after the first step the node must touch the current
//! selection, so the selection always induces a connected subgraph. The
//! episode ends after `k` selections and only the final step is rewarded.

use std::fmt;
use std::str::FromStr;

use crate::canon::FrequencyMemo;
use crate::enumerator::OracleEntry;
use crate::error::{Error, Result};
use crate::graph::LabeledGraph;

/// `(remaining, k)`: selections still to make and the target subgraph size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TaskDescriptor {
    pub remaining: usize,
    pub k: usize,
}

impl TaskDescriptor {
    pub fn fresh(k: usize) -> Self {
        Self { remaining: k, k }
    }

    pub fn is_terminal(&self) -> bool {
        self.remaining == 0
    }
}

/// Selection vector plus task, detached from the graph so it can be stored.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateSnapshot {
    pub selection: Vec<bool>,
    pub task: TaskDescriptor,
}

impl StateSnapshot {
    pub fn selected_count(&self) -> usize {
        self.selection.iter().filter(|&&s| s).count()
    }

    /// Valid-action mask of this state on `g` (see [`EpisodeState::valid_actions`]).
    pub fn valid_mask(&self, g: &LabeledGraph) -> Vec<bool> {
        valid_mask(g, &self.selection)
    }
}

fn valid_mask(g: &LabeledGraph, selection: &[bool]) -> Vec<bool> {
    if !selection.iter().any(|&s| s) {
        return vec![true; selection.len()];
    }
    (0..selection.len())
        .map(|v| !selection[v] && g.neighbors(v).iter().any(|&u| selection[u]))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeState<'g> {
    graph: &'g LabeledGraph,
    selection: Vec<bool>,
    order: Vec<usize>,
    task: TaskDescriptor,
}

impl<'g> EpisodeState<'g> {
    /// Fresh state for size `k`. The graph must be connected and hold at least
    /// `k` nodes.
    pub fn reset(graph: &'g LabeledGraph, k: usize) -> Result<Self> {
        if k == 0 || k > graph.node_count() {
            return Err(Error::Domain(format!(
                "subgraph size {k} outside 1..={}",
                graph.node_count()
            )));
        }
        if !graph.is_connected() {
            return Err(Error::Domain("episodes need a connected graph".into()));
        }
        Ok(Self {
            graph,
            selection: vec![false; graph.node_count()],
            order: Vec::with_capacity(k),
            task: TaskDescriptor::fresh(k),
        })
    }

    pub fn graph(&self) -> &'g LabeledGraph {
        self.graph
    }

    pub fn selection(&self) -> &[bool] {
        &self.selection
    }

    pub fn task(&self) -> TaskDescriptor {
        self.task
    }

    pub fn selected_count(&self) -> usize {
        self.order.len()
    }

    /// Selected nodes in selection order.
    pub fn selected(&self) -> &[usize] {
        &self.order
    }

    pub fn is_terminal(&self) -> bool {
        self.task.is_terminal()
    }

    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot {
            selection: self.selection.clone(),
            task: self.task,
        }
    }

    /// Every node at `t = 0`; afterwards the unselected nodes adjacent to at
    /// least one selected node.
    pub fn valid_actions(&self) -> Result<Vec<bool>> {
        if self.is_terminal() {
            return Err(Error::Contract("no actions in a terminal state".into()));
        }
        Ok(valid_mask(self.graph, &self.selection))
    }

    pub fn valid_action_list(&self) -> Result<Vec<usize>> {
        Ok(self
            .valid_actions()?
            .iter()
            .enumerate()
            .filter_map(|(v, &ok)| ok.then_some(v))
            .collect())
    }

    /// Selects `action`, returning the successor and whether it is terminal.
    pub fn step(&self, action: usize) -> Result<(EpisodeState<'g>, bool)> {
        let valid = self.valid_actions()?;
        if !valid.get(action).copied().unwrap_or(false) {
            return Err(Error::Contract(format!("action {action} is not valid here")));
        }
        let mut next = self.clone();
        next.selection[action] = true;
        next.order.push(action);
        next.task.remaining -= 1;
        if !next.graph.is_connected_subset(&next.order) {
            return Err(Error::Contract("selection lost connectivity".into()));
        }
        let done = next.is_terminal();
        Ok((next, done))
    }
}

/// How a terminal frequency is turned into a reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RewardMode {
    /// The frequency itself.
    Raw,
    /// Frequency divided by the exact optimum for `(graph, k)`.
    OracleNormalized,
    /// Frequency divided by `|V| * density * k`.
    DensityNormalized,
}

impl RewardMode {
    pub fn needs_oracle(self) -> bool {
        self == RewardMode::OracleNormalized
    }
}

impl FromStr for RewardMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(RewardMode::Raw),
            "oracle" | "oracle-normalized" => Ok(RewardMode::OracleNormalized),
            "density" | "density-normalized" => Ok(RewardMode::DensityNormalized),
            _ => Err(Error::Config(format!("unknown reward mode {s:?}"))),
        }
    }
}

impl fmt::Display for RewardMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RewardMode::Raw => "raw",
            RewardMode::OracleNormalized => "oracle",
            RewardMode::DensityNormalized => "density",
        })
    }
}

/// Reward for a terminal selection whose pattern has frequency `frequency`.
pub fn reward_from_frequency(
    frequency: usize,
    g: &LabeledGraph,
    k: usize,
    mode: RewardMode,
    oracle: Option<&OracleEntry>,
) -> Result<f64> {
    match mode {
        RewardMode::Raw => Ok(frequency as f64),
        RewardMode::OracleNormalized => {
            let entry = oracle.ok_or_else(|| {
                Error::Config(format!("oracle-normalized reward for k={k} needs an oracle entry"))
            })?;
            if entry.k != k {
                return Err(Error::Config(format!(
                    "oracle entry is for k={}, episode has k={k}",
                    entry.k
                )));
            }
            if frequency > entry.best_frequency || entry.best_frequency == 0 {
                return Err(Error::Config(format!(
                    "oracle optimum {} is below an observed frequency {frequency}",
                    entry.best_frequency
                )));
            }
            Ok(frequency as f64 / entry.best_frequency as f64)
        }
        RewardMode::DensityNormalized => {
            let density = g.edge_density()?;
            Ok(frequency as f64 / (g.node_count() as f64 * density * k as f64))
        }
    }
}

/// Terminal reward of `state`, counting the frequency from scratch.
pub fn reward(
    g: &LabeledGraph,
    state: &EpisodeState<'_>,
    mode: RewardMode,
    oracle: Option<&OracleEntry>,
) -> Result<f64> {
    if !state.is_terminal() {
        return Err(Error::Contract("reward requested for a non-terminal state".into()));
    }
    let pattern = g.induced_subgraph(state.selected())?;
    let f = crate::canon::frequency(&pattern, g);
    reward_from_frequency(f, g, state.task().k, mode, oracle)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: StateSnapshot,
    pub action: usize,
    pub reward: f64,
    pub next: StateSnapshot,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    /// Selected nodes in selection order.
    pub nodes: Vec<usize>,
    /// Frequency of the final pattern.
    pub frequency: usize,
    pub transitions: Vec<Transition>,
}

impl Episode {
    pub fn episode_return(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum()
    }
}

/// Rolls one episode, asking `choose` for each action. Only the final
/// transition carries a non-zero reward.
pub fn run_episode<F>(
    g: &LabeledGraph,
    k: usize,
    mut choose: F,
    mode: RewardMode,
    oracle: Option<&OracleEntry>,
    memo: &mut FrequencyMemo,
) -> Result<Episode>
where
    F: FnMut(&EpisodeState<'_>) -> usize,
{
    if mode.needs_oracle() && oracle.is_none() {
        return Err(Error::Config(format!(
            "oracle-normalized reward for k={k} needs an oracle entry"
        )));
    }
    let mut state = EpisodeState::reset(g, k)?;
    let mut transitions = Vec::with_capacity(k);
    loop {
        let action = choose(&state);
        let (next, done) = state.step(action)?;
        let mut t = Transition {
            state: state.snapshot(),
            action,
            reward: 0.0,
            next: next.snapshot(),
            done,
        };
        if done {
            let frequency = memo.frequency_of_set(g, next.selected())?;
            t.reward = reward_from_frequency(frequency, g, k, mode, oracle)?;
            transitions.push(t);
            return Ok(Episode {
                nodes: next.selected().to_vec(),
                frequency,
                transitions,
            });
        }
        transitions.push(t);
        state = next;
    }
}
