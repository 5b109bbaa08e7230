//! Discrete soft actor-critic objectives. Expectations over actions are
//! exact sums over each state's valid actions.

use kminer_autograd::{ParameterSet, Real, Tape, Tensor, Var, Bound};
use kminer_core::{LabeledGraph, Transition};

use crate::batch::GraphBatch;
use crate::config::NetConfig;
use crate::error::{Error, Result};
use crate::nets::{actor_forward, critic_forward};

#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub graph: &'a LabeledGraph,
    pub transition: &'a Transition,
}

fn constant<'t, T: Real>(tape: &'t Tape<T>, rows: usize, values: &[f64]) -> Result<Var<'t, T>> {
    let t = Tensor::from_vec(rows, values.len() / rows.max(1), values.iter().map(|&x| T::lit(x)).collect())?;
    Ok(tape.leaf(t))
}

pub fn state_batch(samples: &[Sample<'_>], cfg: &NetConfig) -> Result<GraphBatch> {
    let items: Vec<_> = samples.iter().map(|s| (s.graph, &s.transition.state)).collect();
    GraphBatch::new(&items, cfg)
}

/// Batch row of each sample's action.
pub fn action_rows(batch: &GraphBatch, samples: &[Sample<'_>]) -> Result<Vec<usize>> {
    samples
        .iter()
        .zip(&batch.groups)
        .map(|(s, g)| {
            let row = g.start + s.transition.action;
            if row < g.end && batch.mask[row] {
                Ok(row)
            } else {
                Err(Error::Contract(format!("stored action {} is not valid", s.transition.action)))
            }
        })
        .collect()
}

/// `ratio * ln |A|`.
pub fn target_entropy(valid_actions: usize, ratio: f64) -> f64 {
    ratio * (valid_actions as f64).ln()
}

/// Bootstrapped targets `r + gamma (1 - done) sum_a' pi(a') [min_i Qbar_i(a') - alpha log pi(a')]`.
pub fn critic_targets<T: Real>(
    cfg: &NetConfig,
    actor: &ParameterSet<T>,
    targets: [&ParameterSet<T>; 2],
    alpha: f64,
    gamma: f64,
    samples: &[Sample<'_>],
) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let mut y: Vec<f64> = samples.iter().map(|s| s.transition.reward).collect();
    let live: Vec<usize> = (0..samples.len()).filter(|&i| !samples[i].transition.done).collect();
    if live.is_empty() {
        return Ok(y);
    }
    let items: Vec<_> = live
        .iter()
        .map(|&i| (samples[i].graph, &samples[i].transition.next))
        .collect();
    let batch = GraphBatch::new(&items, cfg)?;
    let tape = Tape::<T>::no_grad();
    let policy = actor_forward(cfg, &actor.bind(&tape), &batch)?;
    let q1 = critic_forward(cfg, &targets[0].bind(&tape), &batch)?.q.tensor();
    let q2 = critic_forward(cfg, &targets[1].bind(&tape), &batch)?.q.tensor();
    let (p, lp) = (policy.probs.tensor(), policy.log_probs.tensor());
    for (b, &i) in live.iter().enumerate() {
        let soft_value: f64 = batch.groups[b]
            .clone()
            .filter(|&r| batch.mask[r])
            .map(|r| {
                let qmin = q1.data()[r].min(q2.data()[r]).as_f64();
                p.data()[r].as_f64() * (qmin - alpha * lp.data()[r].as_f64())
            })
            .sum();
        y[i] += gamma * soft_value;
    }
    Ok(y)
}

pub struct CriticLoss<'t, T: Real> {
    pub loss: Var<'t, T>,
    /// `Q(s, a)` per sample, before the update.
    pub q_taken: Vec<f64>,
}

/// `sum_i w_i [ (Q_i - y_i)^2 / 2 + (rhat_i - r_i)^2 ] / B`.
pub fn critic_loss<'t, T: Real>(
    cfg: &NetConfig,
    critic: &Bound<'t, '_, T>,
    batch: &GraphBatch,
    samples: &[Sample<'_>],
    targets: &[f64],
    weights: &[f64],
) -> Result<CriticLoss<'t, T>> {
    let b = samples.len();
    if b == 0 || targets.len() != b || weights.len() != b || batch.graph_count() != b {
        return Err(Error::Contract("critic loss needs one target and weight per sample".into()));
    }
    let tape = critic.vars()[0].tape();
    let rows = action_rows(batch, samples)?;
    let out = critic_forward(cfg, critic, batch)?;
    let q = out.q.gather_rows(&rows)?;
    let q_taken = q.tensor().data().iter().map(|x| x.as_f64()).collect();
    let diff = q.sub(constant(tape, b, targets)?)?;
    let mut per_sample = diff.mul(diff)?.scale(T::lit(0.5));
    if let Some(r_hat) = out.reward {
        let rewards: Vec<f64> = samples.iter().map(|s| s.transition.reward).collect();
        let e = r_hat.gather_rows(&rows)?.sub(constant(tape, b, &rewards)?)?;
        per_sample = per_sample.add(e.mul(e)?)?;
    }
    let loss = per_sample
        .mul(constant(tape, b, weights)?)?
        .sum()
        .scale(T::lit(1.0 / b as f64));
    Ok(CriticLoss { loss, q_taken })
}

/// Elementwise minimum of both critics' Q-values over every batch row.
pub fn min_q<T: Real>(cfg: &NetConfig, critics: [&ParameterSet<T>; 2], batch: &GraphBatch) -> Result<Vec<f64>> {
    let tape = Tape::<T>::no_grad();
    let q1 = critic_forward(cfg, &critics[0].bind(&tape), batch)?.q.tensor();
    let q2 = critic_forward(cfg, &critics[1].bind(&tape), batch)?.q.tensor();
    Ok(q1
        .data()
        .iter()
        .zip(q2.data())
        .map(|(a, b)| a.min(*b).as_f64())
        .collect())
}

pub struct ActorLoss<'t, T: Real> {
    pub loss: Var<'t, T>,
    pub probs: Vec<f64>,
    pub log_probs: Vec<f64>,
}

/// `mean_s sum_a pi(a|s) (alpha log pi(a|s) - min_i Q_i(s, a))` with `Q` and
/// `alpha` held fixed.
pub fn actor_loss<'t, T: Real>(
    cfg: &NetConfig,
    actor: &Bound<'t, '_, T>,
    batch: &GraphBatch,
    q_min: &[f64],
    alpha: f64,
) -> Result<ActorLoss<'t, T>> {
    let n = batch.node_count();
    if q_min.len() != n {
        return Err(Error::Contract(format!("{} Q-values for {n} rows", q_min.len())));
    }
    let tape = actor.vars()[0].tape();
    let policy = actor_forward(cfg, actor, batch)?;
    let valid: Vec<f64> = batch.mask.iter().map(|&m| f64::from(u8::from(m))).collect();
    let inner = policy
        .log_probs
        .scale(T::lit(alpha))
        .sub(constant(tape, n, q_min)?)?
        .mul(constant(tape, n, &valid)?)?;
    let loss = policy
        .probs
        .mul(inner)?
        .sum()
        .scale(T::lit(1.0 / batch.graph_count() as f64));
    let flat = |v: Var<'t, T>| v.tensor().data().iter().map(|x| x.as_f64()).collect();
    Ok(ActorLoss {
        loss,
        probs: flat(policy.probs),
        log_probs: flat(policy.log_probs),
    })
}

/// How the temperature objective measures the policy's spread.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EntropyForm {
    /// `-sum pi log pi`.
    #[default]
    Log,
    /// `-sum pi^2`.
    Literal,
}

/// Per-state entropy term minus the target entropy.
pub fn entropy_gaps(
    batch: &GraphBatch,
    probs: &[f64],
    log_probs: &[f64],
    ratio: f64,
    form: EntropyForm,
) -> Vec<f64> {
    batch
        .groups
        .iter()
        .map(|g| {
            let valid: Vec<usize> = g.clone().filter(|&r| batch.mask[r]).collect();
            let spread: f64 = match form {
                EntropyForm::Log => -valid.iter().map(|&r| probs[r] * log_probs[r]).sum::<f64>(),
                EntropyForm::Literal => -valid.iter().map(|&r| probs[r] * probs[r]).sum::<f64>(),
            };
            spread - target_entropy(valid.len(), ratio)
        })
        .collect()
}

/// `alpha * mean(gap)` with `alpha = exp(log_alpha)`; the policy is fixed.
pub fn alpha_loss<'t, T: Real>(log_alpha: Var<'t, T>, gaps: &[f64]) -> Result<Var<'t, T>> {
    if gaps.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    Ok(log_alpha.exp().scale(T::lit(mean)))
}
