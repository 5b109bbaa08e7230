//! Frequent induced-subgraph mining primitives.
//!
//! * [`graph`]: node-labeled undirected graphs and label vocabularies.
//! * [`io`]: TU benchmark and fixture text formats.
//! * [`split`]: target filtering and the train/test split.
//! * [`canon`]: canonical codes, induced embeddings, frequency and MNI.
//! * [`enumerator`]: exact enumeration, the oracle and reference baselines.
//! * [`mdp`]: the node-selection episode model and its rewards.

pub mod canon;
pub mod enumerator;
pub mod error;
pub mod graph;
pub mod io;
pub mod mdp;
pub mod split;

pub use canon::{CanonicalCode, Embedding, FrequencyMemo};
pub use enumerator::{OracleCache, OracleEntry, PatternHistogram};
pub use error::{Error, Result};
pub use graph::{Label, LabelVocabulary, LabeledGraph};
pub use mdp::{EpisodeState, RewardMode, StateSnapshot, TaskDescriptor, Transition};
