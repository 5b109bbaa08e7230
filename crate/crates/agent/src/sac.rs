//! Training loop: random warmup, then per epoch one sampled episode per
//! `(graph, k)` followed by gradient steps on a union of per-`k` replay draws.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use kminer_autograd::{Adam, ParameterSet, Tape, Tensor};
use kminer_core::enumerator::OracleCache;
use kminer_core::mdp::{run_episode, Episode};
use kminer_core::{EpisodeState, FrequencyMemo, LabeledGraph, RewardMode, Transition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::NetConfig;
use crate::error::{Error, Result};
use crate::infer::{greedy_infer, policy};
use crate::losses::{
    action_rows, actor_loss, alpha_loss, critic_loss, critic_targets, entropy_gaps, min_q, state_batch,
    EntropyForm, Sample,
};
use crate::nets::{init_actor, init_critic};
use crate::replay::PrioritizedReplay;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub gamma: f64,
    pub tau: f64,
    pub initial_alpha: f64,
    pub lr: f64,
    pub warmup_epochs: usize,
    pub gradient_steps_per_episode: usize,
    pub per_k_batch: usize,
    pub train_sizes: Vec<usize>,
    pub eval_sizes: Vec<usize>,
    pub epochs: usize,
    pub reward_mode: RewardMode,
    pub seed: u64,
    pub buffer_capacity: usize,
    pub priority_exponent: f64,
    pub importance_exponent: f64,
    pub target_entropy_ratio: f64,
    pub entropy_form: EntropyForm,
    /// Greedy evaluation every this many epochs; 0 disables it.
    pub eval_every: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 1e-2,
            initial_alpha: 1.0,
            lr: 2.5e-4,
            warmup_epochs: 50,
            gradient_steps_per_episode: 2,
            per_k_batch: 8,
            train_sizes: (3..=9).collect(),
            eval_sizes: (5..=9).collect(),
            epochs: 100,
            reward_mode: RewardMode::OracleNormalized,
            seed: 0,
            buffer_capacity: 1_000_000,
            priority_exponent: 0.2,
            importance_exponent: 0.6,
            target_entropy_ratio: 0.6,
            entropy_form: EntropyForm::Log,
            eval_every: 1,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self, net: &NetConfig) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma {} outside (0, 1)", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau {} outside (0, 1]", self.tau));
        }
        if self.initial_alpha <= 0.0 || self.lr <= 0.0 {
            return bad("initial alpha and learning rate must be positive".into());
        }
        if self.gradient_steps_per_episode == 0 || self.per_k_batch == 0 || self.buffer_capacity == 0 {
            return bad("step, batch and buffer counts must be positive".into());
        }
        if self.train_sizes.is_empty() || self.train_sizes.contains(&0) {
            return bad("train sizes must be a non-empty set of positive sizes".into());
        }
        if let Some(&k) = self.train_sizes.iter().chain(&self.eval_sizes).find(|&&k| k > net.k_max) {
            return bad(format!("size {k} exceeds k_max {}", net.k_max));
        }
        Ok(())
    }
}

/// Actor, twin critics with targets, and the temperature.
#[derive(Debug, Clone)]
pub struct Agent {
    pub net: NetConfig,
    pub actor: ParameterSet,
    pub critics: [ParameterSet; 2],
    pub targets: [ParameterSet; 2],
    /// Single `1 x 1` entry named `log_alpha`.
    pub temperature: ParameterSet,
}

impl Agent {
    pub fn new(net: NetConfig, initial_alpha: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = init_actor(&net, &mut rng)?;
        let critics = [init_critic(&net, &mut rng)?, init_critic(&net, &mut rng)?];
        let targets = critics.clone();
        let mut temperature = ParameterSet::new();
        temperature.insert("log_alpha", Tensor::scalar(initial_alpha.ln() as f32))?;
        Ok(Self {
            net,
            actor,
            critics,
            targets,
            temperature,
        })
    }

    pub fn alpha(&self) -> f64 {
        let t = self.temperature.get("log_alpha").expect("registered at construction");
        f64::from(t.at(0, 0)).exp()
    }

    pub fn greedy(&self, g: &LabeledGraph, k: usize) -> Result<crate::infer::GreedyOutcome> {
        greedy_infer(&self.net, &self.actor, g, k)
    }
}

#[derive(Debug, Clone)]
pub struct Experience {
    /// Position in the trainer's graph list.
    pub graph: usize,
    pub transition: Transition,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub graph_id: Option<usize>,
    pub k: Option<usize>,
    pub episode_return: Option<f64>,
    pub critic1_loss: Option<f64>,
    pub critic2_loss: Option<f64>,
    pub actor_loss: Option<f64>,
    pub alpha: f64,
    pub eval_ratio: Option<f64>,
}

pub const LOG_HEADER: &str =
    "epoch,graph_id,k,episode_return,critic1_loss,critic2_loss,actor_loss,alpha,eval_ratio";

impl LogRow {
    pub fn to_csv(&self) -> String {
        fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.epoch,
            opt(self.graph_id),
            opt(self.k),
            opt(self.episode_return),
            opt(self.critic1_loss),
            opt(self.critic2_loss),
            opt(self.actor_loss),
            self.alpha,
            opt(self.eval_ratio)
        )
    }
}

pub fn log_to_csv(rows: &[LogRow]) -> String {
    let mut out = String::from(LOG_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.to_csv());
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub critic_losses: [f64; 2],
    pub actor_loss: f64,
    /// Transitions drawn for this step.
    pub batch_size: usize,
}

pub struct Trainer<'g> {
    cfg: TrainerConfig,
    agent: Agent,
    opt_actor: Adam,
    opt_critics: [Adam; 2],
    opt_alpha: Adam,
    graphs: &'g [(usize, LabeledGraph)],
    oracle: Option<&'g OracleCache>,
    pairs: Vec<(usize, usize)>,
    buffers: BTreeMap<usize, PrioritizedReplay<Experience>>,
    rng: ChaCha8Rng,
    /// One memo per graph; codes are only comparable within a target.
    memos: Vec<FrequencyMemo>,
    epoch: usize,
    warmed_up: bool,
    log: Vec<LogRow>,
}

impl<'g> Trainer<'g> {
    /// `graphs` holds `(graph id, graph)`; ids are only used for logging and
    /// oracle lookups.
    pub fn new(
        agent: Agent,
        cfg: TrainerConfig,
        graphs: &'g [(usize, LabeledGraph)],
        oracle: Option<&'g OracleCache>,
    ) -> Result<Self> {
        cfg.validate(&agent.net)?;
        let mut pairs = Vec::new();
        for (gi, (id, g)) in graphs.iter().enumerate() {
            if !g.is_connected() {
                log::warn!("graph {id} is disconnected; skipped");
                continue;
            }
            for &k in &cfg.train_sizes {
                if k > g.node_count() {
                    log::warn!("graph {id} has {} nodes; k={k} skipped", g.node_count());
                    continue;
                }
                if cfg.reward_mode.needs_oracle() && oracle.and_then(|o| o.get(*id, k)).is_none() {
                    return Err(Error::Config(format!("no oracle entry for graph {id}, k={k}")));
                }
                pairs.push((gi, k));
            }
        }
        if pairs.is_empty() {
            return Err(Error::Config("no trainable (graph, k) pair".into()));
        }
        let mut buffers = BTreeMap::new();
        for &k in &cfg.train_sizes {
            buffers.insert(
                k,
                PrioritizedReplay::new(cfg.buffer_capacity, cfg.priority_exponent, cfg.importance_exponent)?,
            );
        }
        Ok(Self {
            opt_actor: Adam::new(&agent.actor, cfg.lr),
            opt_critics: [Adam::new(&agent.critics[0], cfg.lr), Adam::new(&agent.critics[1], cfg.lr)],
            opt_alpha: Adam::new(&agent.temperature, cfg.lr),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_7a1e),
            cfg,
            agent,
            graphs,
            oracle,
            pairs,
            buffers,
            memos: vec![FrequencyMemo::new(); graphs.len()],
            epoch: 0,
            warmed_up: false,
            log: Vec::new(),
        })
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    pub fn into_agent(self) -> Agent {
        self.agent
    }

    pub fn log(&self) -> &[LogRow] {
        &self.log
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Continues epoch numbering after a restored checkpoint.
    pub fn set_epoch(&mut self, epoch: usize) {
        self.epoch = epoch;
    }

    pub fn buffer_lengths(&self) -> BTreeMap<usize, usize> {
        self.buffers.iter().map(|(&k, b)| (k, b.len())).collect()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    fn oracle_entry(&self, gi: usize, k: usize) -> Option<&kminer_core::OracleEntry> {
        self.oracle.and_then(|o| o.get(self.graphs[gi].0, k))
    }

    fn roll(&mut self, gi: usize, k: usize, sample_policy: bool) -> Result<Episode> {
        let g = &self.graphs[gi].1;
        let oracle = self.oracle_entry(gi, k).cloned();
        let mut failure = None;
        let rng = &mut self.rng;
        let agent = &self.agent;
        let episode = run_episode(
            g,
            k,
            |s: &EpisodeState<'_>| {
                let valid = s.valid_action_list().expect("non-terminal");
                if !sample_policy {
                    return valid[rng.random_range(0..valid.len())];
                }
                match policy(&agent.net, &agent.actor, s) {
                    Ok(p) => sample_from(&p, &valid, rng),
                    Err(e) => {
                        failure.get_or_insert(e);
                        valid[0]
                    }
                }
            },
            self.cfg.reward_mode,
            oracle.as_ref(),
            &mut self.memos[gi],
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        let buffer = self.buffers.get_mut(&k).expect("one buffer per train size");
        for t in &episode.transitions {
            buffer.push(Experience {
                graph: gi,
                transition: t.clone(),
            });
        }
        Ok(episode)
    }

    /// Fills the buffers with uniformly random episodes.
    pub fn warmup(&mut self) -> Result<()> {
        for _ in 0..self.cfg.warmup_epochs {
            for i in 0..self.pairs.len() {
                let (gi, k) = self.pairs[i];
                self.roll(gi, k, false)?;
            }
        }
        self.warmed_up = true;
        Ok(())
    }

    /// One update of both critics, the actor and the temperature.
    pub fn gradient_step(&mut self) -> Result<StepStats> {
        let mut drawn: Vec<(usize, usize, f64)> = Vec::new();
        for (&k, buffer) in &self.buffers {
            if buffer.is_empty() {
                continue;
            }
            for s in buffer.sample(self.cfg.per_k_batch, &mut self.rng)? {
                drawn.push((k, s.index, s.weight));
            }
        }
        if drawn.is_empty() {
            return Err(Error::Contract("gradient step with empty replay buffers".into()));
        }
        let experiences: Vec<&Experience> = drawn
            .iter()
            .map(|&(k, i, _)| self.buffers[&k].get(i).expect("sampled index"))
            .collect();
        let samples: Vec<Sample<'_>> = experiences
            .iter()
            .map(|e| Sample {
                graph: &self.graphs[e.graph].1,
                transition: &e.transition,
            })
            .collect();
        let weights: Vec<f64> = drawn.iter().map(|d| d.2).collect();
        let net = &self.agent.net;
        let alpha = self.agent.alpha();
        let y = critic_targets(
            net,
            &self.agent.actor,
            [&self.agent.targets[0], &self.agent.targets[1]],
            alpha,
            self.cfg.gamma,
            &samples,
        )?;
        let batch = state_batch(&samples, net)?;
        action_rows(&batch, &samples)?;

        let mut stats = StepStats {
            batch_size: samples.len(),
            ..StepStats::default()
        };
        let mut td = vec![0.0; samples.len()];
        for i in 0..2 {
            let tape = Tape::new();
            let bound = self.agent.critics[i].bind(&tape);
            let out = critic_loss(net, &bound, &batch, &samples, &y, &weights)?;
            stats.critic_losses[i] = f64::from(out.loss.item()?);
            for (d, (q, t)) in td.iter_mut().zip(out.q_taken.iter().zip(&y)) {
                *d += 0.5 * (q - t).abs();
            }
            let grads = bound.gradients(&tape.backward(out.loss)?);
            drop(bound);
            self.agent.critics[i].set_grads(grads)?;
            self.opt_critics[i].step(&mut self.agent.critics[i])?;
        }

        let q_min = min_q(net, [&self.agent.critics[0], &self.agent.critics[1]], &batch)?;
        let (probs, log_probs) = {
            let tape = Tape::new();
            let bound = self.agent.actor.bind(&tape);
            let out = actor_loss(net, &bound, &batch, &q_min, alpha)?;
            stats.actor_loss = f64::from(out.loss.item()?);
            let grads = bound.gradients(&tape.backward(out.loss)?);
            drop(bound);
            self.agent.actor.set_grads(grads)?;
            self.opt_actor.step(&mut self.agent.actor)?;
            (out.probs, out.log_probs)
        };

        let gaps = entropy_gaps(&batch, &probs, &log_probs, self.cfg.target_entropy_ratio, self.cfg.entropy_form);
        {
            let tape = Tape::new();
            let bound = self.agent.temperature.bind(&tape);
            let loss = alpha_loss(bound.var("log_alpha")?, &gaps)?;
            let grads = bound.gradients(&tape.backward(loss)?);
            drop(bound);
            self.agent.temperature.set_grads(grads)?;
            self.opt_alpha.step(&mut self.agent.temperature)?;
        }

        for (&(k, index, _), &d) in drawn.iter().zip(&td) {
            self.buffers.get_mut(&k).expect("drawn from it").update(index, d)?;
        }
        let tau = self.cfg.tau as f32;
        for i in 0..2 {
            self.agent.targets[i].soft_update_from(&self.agent.critics[i], tau)?;
        }
        Ok(stats)
    }

    /// Mean greedy-to-optimal frequency ratio over the evaluation pairs that
    /// have oracle entries.
    pub fn evaluate(&mut self) -> Result<Option<f64>> {
        let mut ratios = Vec::new();
        for (gi, (id, g)) in self.graphs.iter().enumerate() {
            if !g.is_connected() {
                continue;
            }
            for &k in &self.cfg.eval_sizes {
                let Some(best) = self.oracle.and_then(|o| o.get(*id, k)) else { continue };
                if k > g.node_count() {
                    continue;
                }
                let found = greedy_infer(&self.agent.net, &self.agent.actor, g, k)?;
                let f = self.memos[gi].frequency_of_set(g, &found.nodes)?;
                ratios.push(f as f64 / best.best_frequency as f64);
            }
        }
        Ok((!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64))
    }

    pub fn run_epoch(&mut self) -> Result<()> {
        if !self.warmed_up {
            self.warmup()?;
        }
        for i in 0..self.pairs.len() {
            let (gi, k) = self.pairs[i];
            let episode = self.roll(gi, k, true)?;
            let mut sums = StepStats::default();
            for _ in 0..self.cfg.gradient_steps_per_episode {
                let s = self.gradient_step()?;
                sums.critic_losses[0] += s.critic_losses[0];
                sums.critic_losses[1] += s.critic_losses[1];
                sums.actor_loss += s.actor_loss;
            }
            let n = self.cfg.gradient_steps_per_episode as f64;
            self.log.push(LogRow {
                epoch: self.epoch,
                graph_id: Some(self.graphs[gi].0),
                k: Some(k),
                episode_return: Some(episode.episode_return()),
                critic1_loss: Some(sums.critic_losses[0] / n),
                critic2_loss: Some(sums.critic_losses[1] / n),
                actor_loss: Some(sums.actor_loss / n),
                alpha: self.agent.alpha(),
                eval_ratio: None,
            });
        }
        for i in 0..2 {
            self.agent.targets[i].copy_from(&self.agent.critics[i])?;
        }
        if self.cfg.eval_every > 0 && (self.epoch + 1) % self.cfg.eval_every == 0 {
            if let Some(ratio) = self.evaluate()? {
                self.log.push(LogRow {
                    epoch: self.epoch,
                    alpha: self.agent.alpha(),
                    eval_ratio: Some(ratio),
                    ..LogRow::default()
                });
            }
        }
        self.epoch += 1;
        Ok(())
    }

    /// Warmup, then epochs until `cfg.epochs` have run in total.
    pub fn train(&mut self) -> Result<()> {
        while self.epoch < self.cfg.epochs {
            self.run_epoch()?;
        }
        Ok(())
    }

    /// Stored transitions for size `k`.
    pub fn buffer_items(&self, k: usize) -> Vec<&Experience> {
        self.buffers
            .get(&k)
            .map(|b| (0..b.len()).filter_map(|i| b.get(i)).collect())
            .unwrap_or_default()
    }
}

/// Draws a valid node with probability proportional to `probs`.
pub fn sample_from<R: Rng + ?Sized>(probs: &[f64], valid: &[usize], rng: &mut R) -> usize {
    let total: f64 = valid.iter().map(|&v| probs[v]).sum();
    let mut u = rng.random::<f64>() * total;
    for &v in valid {
        u -= probs[v];
        if u < 0.0 {
            return v;
        }
    }
    *valid.last().expect("non-empty valid set")
}
