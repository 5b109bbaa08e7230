//! Task-state-aware message passing and the actor and critic heads.
//!
//! Weights are stored input-major (`in x out`), so every linear map is a
//! right multiplication `X W`. All graphs of a [`GraphBatch`] are processed
//! together; per-graph quantities (task embedding, pooled state, value) are
//! `B x d` and broadcast to nodes by gathering on `node_graph`.

use std::ops::Range;

use kminer_autograd::{Bound, ParameterSet, Real, Tape, Tensor, Var};
use rand::Rng;

use crate::batch::GraphBatch;
use crate::config::NetConfig;
use crate::error::Result;

pub const ACTOR: &str = "actor";

/// Per-thread count of actor forward passes.
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

pub const CRITIC: &str = "critic";

struct Registry<'a, T: Real, R: Rng> {
    set: &'a mut ParameterSet<T>,
    rng: &'a mut R,
    prefix: &'a str,
}

impl<T: Real, R: Rng> Registry<'_, T, R> {
    fn weight(&mut self, name: &str, rows: usize, cols: usize) -> Result<()> {
        let t = Tensor::glorot(rows, cols, self.rng);
        Ok(self.set.insert(format!("{}.{name}", self.prefix), t)?)
    }

    fn bias(&mut self, name: &str, cols: usize) -> Result<()> {
        Ok(self
            .set
            .insert(format!("{}.{name}", self.prefix), Tensor::zeros(1, cols))?)
    }

    fn linear(&mut self, name: &str, rows: usize, cols: usize) -> Result<()> {
        self.weight(&format!("{name}.w"), rows, cols)?;
        self.bias(&format!("{name}.b"), cols)
    }

    fn mlp(&mut self, name: &str, input: usize, hidden: usize, out: usize) -> Result<()> {
        self.linear(&format!("{name}.0"), input, hidden)?;
        self.linear(&format!("{name}.1"), hidden, out)
    }

    fn mha(&mut self, name: &str, d: usize) -> Result<()> {
        for part in ["q", "k", "v", "o"] {
            self.linear(&format!("{name}.{part}"), d, d)?;
        }
        Ok(())
    }

    fn gnn(&mut self, cfg: &NetConfig) -> Result<()> {
        let d = cfg.hidden_dim;
        let ab = cfg.ablations;
        self.weight("gnn.w0", cfg.label_vocab_size, d)?;
        if ab.state_concat {
            self.weight("gnn.w0_state", 1, d)?;
        }
        if !ab.no_step_count {
            self.weight("gnn.wa", cfg.k_max + 1, d)?;
        }
        self.weight("gnn.wb", cfg.k_max + 1, d)?;
        self.weight("gnn.wd", d, d)?;
        self.weight("gnn.ws", d, d)?;
        if !ab.skip_without_gate {
            self.weight("gnn.wc", d, d)?;
        }
        for l in 0..cfg.num_layers {
            for w in ["w1", "w2", "w3", "w6", "w7"] {
                self.weight(&format!("gnn.l{l}.{w}"), d, d)?;
            }
            if !ab.state_concat {
                self.weight(&format!("gnn.l{l}.w4"), 2, d)?;
                self.weight(&format!("gnn.l{l}.w5"), 2, d)?;
            }
        }
        Ok(())
    }
}

/// Fresh actor parameters, all named `actor.*`.
pub fn init_actor<T: Real, R: Rng>(cfg: &NetConfig, rng: &mut R) -> Result<ParameterSet<T>> {
    cfg.validate()?;
    let mut set = ParameterSet::new();
    let d = cfg.hidden_dim;
    let mut r = Registry { set: &mut set, rng, prefix: ACTOR };
    r.gnn(cfg)?;
    r.mha("head.mha", d)?;
    r.mlp("head.mlp", d, d, 1)?;
    Ok(set)
}

/// Fresh critic parameters, all named `critic.*`.
pub fn init_critic<T: Real, R: Rng>(cfg: &NetConfig, rng: &mut R) -> Result<ParameterSet<T>> {
    cfg.validate()?;
    let mut set = ParameterSet::new();
    let d = cfg.hidden_dim;
    let mut r = Registry { set: &mut set, rng, prefix: CRITIC };
    r.gnn(cfg)?;
    r.mha("adv.mha", d)?;
    r.mlp("adv.mlp", d, d, 1)?;
    r.weight("pool.seed", 1, d)?;
    r.linear("pool.q", d, d)?;
    r.linear("pool.k", d, d)?;
    r.linear("pool.v", d, d)?;
    r.linear("pool.o", d, d)?;
    r.mlp("state.mlp", d, d, d)?;
    r.mlp("value.mlp", d, d, 1)?;
    if !cfg.ablations.no_reward_head {
        r.mlp("reward.mlp", 2 * d, d, 1)?;
    }
    Ok(set)
}

struct Ctx<'a, 't, 'p, T: Real> {
    tape: &'t Tape<T>,
    p: &'a Bound<'t, 'p, T>,
    prefix: &'a str,
    cfg: &'a NetConfig,
}

impl<'t, T: Real> Ctx<'_, 't, '_, T> {
    fn w(&self, name: &str) -> Result<Var<'t, T>> {
        Ok(self.p.var(&format!("{}.{name}", self.prefix))?)
    }

    fn constant(&self, rows: usize, cols: usize, data: impl IntoIterator<Item = f64>) -> Result<Var<'t, T>> {
        let t = Tensor::from_vec(rows, cols, data.into_iter().map(T::lit).collect())?;
        Ok(self.tape.leaf(t))
    }

    fn linear(&self, name: &str, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let y = x.matmul(self.w(&format!("{name}.w"))?)?;
        Ok(y.add(self.w(&format!("{name}.b"))?)?)
    }

    fn mlp(&self, name: &str, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let h = self.linear(&format!("{name}.0"), x)?.relu();
        self.linear(&format!("{name}.1"), h)
    }

    fn mha(&self, name: &str, x: Var<'t, T>, groups: &[Range<usize>]) -> Result<Var<'t, T>> {
        let q = self.linear(&format!("{name}.q"), x)?;
        let k = self.linear(&format!("{name}.k"), x)?;
        let v = self.linear(&format!("{name}.v"), x)?;
        let o = self.tape.attention(q, k, v, groups, groups, self.cfg.num_heads)?;
        self.linear(&format!("{name}.o"), o)
    }

    /// `B x d` task representations.
    fn task_embedding(&self, batch: &GraphBatch) -> Result<Var<'t, T>> {
        let total = self.w("gnn.wb")?.gather_rows(&batch.k)?;
        if self.cfg.ablations.no_step_count {
            return Ok(total);
        }
        let left = self.w("gnn.wa")?.gather_rows(&batch.remaining)?;
        Ok(left.mul(total)?)
    }

    fn layer(
        &self,
        l: usize,
        batch: &GraphBatch,
        h: Var<'t, T>,
        src_ctx: Var<'t, T>,
        dst_ctx: Var<'t, T>,
        degree: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let n = batch.node_count();
        let w = |name: &str| self.w(&format!("gnn.l{l}.{name}"));
        let concat = self.cfg.ablations.state_concat;
        let s_src = if concat {
            h
        } else {
            w("w4")?.gather_rows(&batch.state)?.mul(h)?
        };
        let own = s_src
            .matmul(w("w2")?)?
            .mul(s_src.mul(src_ctx)?.matmul(w("w6")?)?.sigmoid())?;
        let incoming = if self.cfg.literal_state_onehot && !concat {
            // Per-edge: the neighbor's features scaled by the receiver's state.
            let scale = w("w5")?.gather_rows(&batch.state)?.gather_rows(&batch.src)?;
            let s = scale.mul(h.gather_rows(&batch.dst)?)?;
            let ctx = dst_ctx.gather_rows(&batch.src)?;
            let m = s.matmul(w("w3")?)?.mul(s.mul(ctx)?.matmul(w("w7")?)?.sigmoid())?;
            m.segment_sum(&batch.src, n)?
        } else {
            let s = if concat {
                h
            } else {
                w("w5")?.gather_rows(&batch.state)?.mul(h)?
            };
            let m = s.matmul(w("w3")?)?.mul(s.mul(dst_ctx)?.matmul(w("w7")?)?.sigmoid())?;
            m.gather_rows(&batch.dst)?.segment_sum(&batch.src, n)?
        };
        Ok(h.matmul(w("w1")?)?.add(own.mul(degree)?)?.sub(incoming)?.relu())
    }

    fn initial(&self, batch: &GraphBatch) -> Result<Var<'t, T>> {
        let mut h0 = self.w("gnn.w0")?.gather_rows(&batch.labels)?;
        if self.cfg.ablations.state_concat {
            let x = self.constant(batch.node_count(), 1, batch.state.iter().map(|&s| s as f64))?;
            h0 = h0.add(x.matmul(self.w("gnn.w0_state")?)?)?;
        }
        Ok(h0.relu())
    }

    /// Task contexts for the receiving and sending side of every node.
    fn contexts(&self, batch: &GraphBatch) -> Result<(Var<'t, T>, Var<'t, T>, Var<'t, T>)> {
        let task = self.task_embedding(batch)?.relu();
        let src_ctx = task.matmul(self.w("gnn.wd")?)?.gather_rows(&batch.node_graph)?;
        let dst_ctx = task.matmul(self.w("gnn.ws")?)?.gather_rows(&batch.node_graph)?;
        Ok((task, src_ctx, dst_ctx))
    }

    fn degree(&self, batch: &GraphBatch) -> Result<Var<'t, T>> {
        self.constant(batch.node_count(), 1, batch.degree.iter().copied())
    }

    fn gnn(&self, batch: &GraphBatch) -> Result<Var<'t, T>> {
        let ab = self.cfg.ablations;
        let (task, src_ctx, dst_ctx) = self.contexts(batch)?;
        let h0 = self.initial(batch)?;
        let degree = self.degree(batch)?;
        let mut h = h0;
        for l in 0..self.cfg.num_layers {
            h = self.layer(l, batch, h, src_ctx, dst_ctx, degree)?;
        }
        if ab.skip_without_gate {
            return Ok(h0.add(h)?);
        }
        let gate_ctx = task.matmul(self.w("gnn.wc")?)?.gather_rows(&batch.node_graph)?;
        let gate = h.mul(gate_ctx)?.sigmoid();
        Ok(h0.add(h.mul(gate)?)?)
    }
}

/// Node representations (`N x d`) from the actor or critic encoder.
pub fn encode<'t, T: Real>(
    cfg: &NetConfig,
    p: &Bound<'t, '_, T>,
    prefix: &str,
    batch: &GraphBatch,
) -> Result<Var<'t, T>> {
    let tape = p.vars().first().map(|v| v.tape()).ok_or_else(empty)?;
    Ctx { tape, p, prefix, cfg }.gnn(batch)
}

/// Label embeddings `H0` (`N x d`).
pub fn initial_embedding<'t, T: Real>(
    cfg: &NetConfig,
    p: &Bound<'t, '_, T>,
    prefix: &str,
    batch: &GraphBatch,
) -> Result<Var<'t, T>> {
    let tape = p.vars().first().map(|v| v.tape()).ok_or_else(empty)?;
    Ctx { tape, p, prefix, cfg }.initial(batch)
}

/// Layer `layer` of the encoder applied to `h`.
pub fn message_layer<'t, T: Real>(
    cfg: &NetConfig,
    p: &Bound<'t, '_, T>,
    prefix: &str,
    layer: usize,
    batch: &GraphBatch,
    h: Var<'t, T>,
) -> Result<Var<'t, T>> {
    let tape = p.vars().first().map(|v| v.tape()).ok_or_else(empty)?;
    let c = Ctx { tape, p, prefix, cfg };
    if h.shape() != [batch.node_count(), cfg.hidden_dim] {
        return Err(crate::Error::Contract(format!(
            "layer input {:?} for {} nodes of width {}",
            h.shape(),
            batch.node_count(),
            cfg.hidden_dim
        )));
    }
    let (_, src_ctx, dst_ctx) = c.contexts(batch)?;
    let degree = c.degree(batch)?;
    c.layer(layer, batch, h, src_ctx, dst_ctx, degree)
}

/// Task representations (`B x d`).
pub fn task_embedding<'t, T: Real>(
    cfg: &NetConfig,
    p: &Bound<'t, '_, T>,
    prefix: &str,
    batch: &GraphBatch,
) -> Result<Var<'t, T>> {
    let tape = p.vars().first().map(|v| v.tape()).ok_or_else(empty)?;
    Ctx { tape, p, prefix, cfg }.task_embedding(batch)
}

fn empty() -> crate::Error {
    crate::Error::Contract("empty parameter set".into())
}

pub struct PolicyOutput<'t, T: Real> {
    /// `N x 1` per-node logits before masking.
    pub logits: Var<'t, T>,
    /// `N x 1`, summing to one over each member's valid actions.
    pub probs: Var<'t, T>,
    pub log_probs: Var<'t, T>,
}

pub fn actor_forward<'t, T: Real>(
    cfg: &NetConfig,
    p: &Bound<'t, '_, T>,
    batch: &GraphBatch,
) -> Result<PolicyOutput<'t, T>> {
    batch.require_actions()?;
    probe::hit();
    let tape = p.vars().first().map(|v| v.tape()).ok_or_else(empty)?;
    let c = Ctx { tape, p, prefix: ACTOR, cfg };
    let h = c.gnn(batch)?;
    let attended = c.mha("head.mha", h, &batch.groups)?;
    let logits = c.mlp("head.mlp", attended)?;
    Ok(PolicyOutput {
        logits,
        probs: logits.masked_softmax(&batch.groups, &batch.mask)?,
        log_probs: logits.masked_log_softmax(&batch.groups, &batch.mask)?,
    })
}

pub struct CriticOutput<'t, T: Real> {
    /// `N x 1`; meaningful on valid actions only.
    pub q: Var<'t, T>,
    /// `B x 1`.
    pub value: Var<'t, T>,
    /// `N x 1`.
    pub advantage: Var<'t, T>,
    /// `N x 1` predicted terminal reward per action.
    pub reward: Option<Var<'t, T>>,
}

pub fn critic_forward<'t, T: Real>(
    cfg: &NetConfig,
    p: &Bound<'t, '_, T>,
    batch: &GraphBatch,
) -> Result<CriticOutput<'t, T>> {
    batch.require_actions()?;
    let tape = p.vars().first().map(|v| v.tape()).ok_or_else(empty)?;
    let c = Ctx { tape, p, prefix: CRITIC, cfg };
    let (n, b) = (batch.node_count(), batch.graph_count());
    let h = c.gnn(batch)?;

    let attended = c.mha("adv.mha", h, &batch.groups)?;
    let advantage = c.mlp("adv.mlp", attended)?;

    let seeds = c.w("pool.seed")?.gather_rows(&vec![0; b])?;
    let q = c.linear("pool.q", seeds)?;
    let k = c.linear("pool.k", h)?;
    let v = c.linear("pool.v", h)?;
    let unit: Vec<Range<usize>> = (0..b).map(|i| i..i + 1).collect();
    let pooled = q.add(tape.attention(q, k, v, &unit, &batch.groups, cfg.num_heads)?)?;
    let pooled = pooled.add(c.linear("pool.o", pooled)?.relu())?;
    let state = c.mlp("state.mlp", pooled)?;
    let value = c.mlp("value.mlp", state)?;

    let valid = c.constant(n, 1, batch.mask.iter().map(|&m| f64::from(u8::from(m))))?;
    let inv_counts = c.constant(b, 1, batch.valid_counts().iter().map(|&k| 1.0 / k as f64))?;
    let mean_adv = advantage
        .mul(valid)?
        .segment_sum(&batch.node_graph, b)?
        .mul(inv_counts)?;
    let q = value
        .sub(mean_adv)?
        .gather_rows(&batch.node_graph)?
        .add(advantage)?;

    let reward = if cfg.ablations.no_reward_head {
        None
    } else {
        let joint = state.gather_rows(&batch.node_graph)?.concat_cols(attended)?;
        Some(c.mlp("reward.mlp", joint)?)
    };
    Ok(CriticOutput {
        q,
        value,
        advantage,
        reward,
    })
}
