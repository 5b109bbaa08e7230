use kminer_autograd::{ParameterSet, Real, Tape};
use kminer_core::{EpisodeState, LabeledGraph};

use crate::batch::GraphBatch;
use crate::config::NetConfig;
use crate::error::Result;
use crate::nets::actor_forward;

/// Action probabilities for one state, indexed by node.
pub fn policy<T: Real>(cfg: &NetConfig, actor: &ParameterSet<T>, state: &EpisodeState<'_>) -> Result<Vec<f64>> {
    let snapshot = state.snapshot();
    let batch = GraphBatch::new(&[(state.graph(), &snapshot)], cfg)?;
    let tape = Tape::<T>::no_grad();
    let out = actor_forward(cfg, &actor.bind(&tape), &batch)?;
    let probs = out.probs.tensor();
    Ok(probs.data().iter().map(|p| p.as_f64()).collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GreedyOutcome {
    /// Selected nodes in selection order.
    pub nodes: Vec<usize>,
    pub actor_passes: usize,
}

/// Most probable valid node at every step, ties to the smallest id.
pub fn greedy_infer<T: Real>(
    cfg: &NetConfig,
    actor: &ParameterSet<T>,
    g: &LabeledGraph,
    k: usize,
) -> Result<GreedyOutcome> {
    let mut state = EpisodeState::reset(g, k)?;
    let mut passes = 0;
    while !state.is_terminal() {
        let probs = policy(cfg, actor, &state)?;
        passes += 1;
        let valid = state.valid_actions()?;
        let mut best: Option<usize> = None;
        for v in (0..probs.len()).filter(|&v| valid[v]) {
            if best.is_none_or(|b| probs[v] > probs[b]) {
                best = Some(v);
            }
        }
        let action = best.expect("non-terminal states have a valid action");
        state = state.step(action)?.0;
    }
    Ok(GreedyOutcome {
        nodes: state.selected().to_vec(),
        actor_passes: passes,
    })
}
