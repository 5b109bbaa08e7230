//! Target-graph filtering and the train/test split.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::LabeledGraph;

/// Graphs with `MIN_NODES < |V| < MAX_NODES` (strict) qualify as targets.
pub const MIN_NODES: usize = 10;
pub const MAX_NODES: usize = 500;
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

pub fn qualifies(g: &LabeledGraph) -> bool {
    let n = g.node_count();
    n > MIN_NODES && n < MAX_NODES && g.is_connected()
}

/// Keeps connected graphs with `10 < |V| < 500`, shuffles their ids with a
/// ChaCha8 generator seeded from `seed`, and assigns the first
/// `round(0.8 * total)` to training.
pub fn filter_and_split(graphs: &[LabeledGraph], seed: u64) -> Result<DatasetSplit> {
    let mut ids: Vec<usize> = (0..graphs.len()).filter(|&i| qualifies(&graphs[i])).collect();
    if ids.is_empty() {
        return Err(Error::EmptySplit);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n_train = (TRAIN_FRACTION * ids.len() as f64).round() as usize;
    let test = ids.split_off(n_train);
    Ok(DatasetSplit {
        train: ids,
        test,
        seed,
    })
}
