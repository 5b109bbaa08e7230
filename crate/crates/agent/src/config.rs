use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture variants used for ablations. All off is the full model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ablations {
    /// Task embedding ignores the remaining-step count.
    pub no_step_count: bool,
    /// Final skip connection without the task gate.
    pub skip_without_gate: bool,
    /// Selection state enters as an extra input feature instead of scaling messages.
    pub state_concat: bool,
    /// Critics have no reward prediction head.
    pub no_reward_head: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub k_max: usize,
    pub label_vocab_size: usize,
    pub ablations: Ablations,
    /// Scale neighbor messages by the receiving node's state instead of the
    /// neighbor's own state.
    #[serde(default)]
    pub literal_state_onehot: bool,
}

impl NetConfig {
    pub fn new(label_vocab_size: usize) -> Self {
        Self {
            hidden_dim: 256,
            num_layers: 9,
            num_heads: 4,
            k_max: 10,
            label_vocab_size,
            ablations: Ablations::default(),
            literal_state_onehot: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.num_heads == 0 || self.hidden_dim % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "hidden_dim {} is not a positive multiple of num_heads {}",
                self.hidden_dim, self.num_heads
            )));
        }
        if self.num_layers == 0 {
            return Err(Error::Config("num_layers must be at least 1".into()));
        }
        if self.k_max == 0 {
            return Err(Error::Config("k_max must be at least 1".into()));
        }
        if self.label_vocab_size == 0 {
            return Err(Error::Config("empty label vocabulary".into()));
        }
        Ok(())
    }
}
