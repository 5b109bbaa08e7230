//! Graph networks and the soft actor-critic agent that selects a connected
//! node set of size `k` one node at a time.

pub mod batch;
pub mod config;
pub mod error;
pub mod infer;
pub mod losses;
pub mod nets;
pub mod replay;
pub mod sac;

pub use batch::GraphBatch;
pub use config::{Ablations, NetConfig};
pub use error::{Error, Result};
pub use infer::{greedy_infer, GreedyOutcome};
pub use sac::{Agent, LogRow, Trainer, TrainerConfig};
