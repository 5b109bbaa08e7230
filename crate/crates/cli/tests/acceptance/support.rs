use kminer_core::LabeledGraph;
use kminer_testkit as brute;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `Ok(detail)` on pass, `Err(detail)` on failure.
pub type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}
pub(crate) use ensure;

pub const EIGHT_NODE: &str = include_str!("../../../../fixtures/eight_node.graph");

/// Random connected graphs with at most 14 nodes and two labels.
pub fn small_corpus() -> Vec<LabeledGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0_2B05);
    (0..50)
        .map(|_| {
            let n = rng.random_range(5..=14);
            let p = rng.random_range(0.05..0.3);
            brute::random_connected_graph(&mut rng, n, &[1.0, 1.0], p)
        })
        .collect()
}

/// Every label- and adjacency-preserving injective map from `pattern` into
/// `target`, by trying each ordered node tuple.
pub fn brute_embeddings(pattern: &LabeledGraph, target: &LabeledGraph) -> Vec<Vec<usize>> {
    let k = pattern.node_count();
    let mut out = Vec::new();
    for set in brute::combinations(target.node_count(), k) {
        for perm in brute::permutations(k) {
            let image: Vec<usize> = perm.iter().map(|&i| set[i]).collect();
            let ok = (0..k).all(|i| pattern.label(i) == target.label(image[i]))
                && (0..k).all(|i| {
                    (i + 1..k).all(|j| brute::adjacent(pattern, i, j) == brute::adjacent(target, image[i], image[j]))
                });
            if ok {
                out.push(image);
            }
        }
    }
    out
}

/// Smallest number of distinct images over pattern nodes.
pub fn brute_mni(pattern: &LabeledGraph, target: &LabeledGraph) -> usize {
    let emb = brute_embeddings(pattern, target);
    (0..pattern.node_count())
        .map(|i| {
            let mut images: Vec<usize> = emb.iter().map(|e| e[i]).collect();
            images.sort_unstable();
            images.dedup();
            images.len()
        })
        .min()
        .unwrap_or(0)
}
