//! Criteria with exact answers: the worked example, enumeration against
//! brute force, masking, episode structure and inference cost.

use std::collections::BTreeSet;

use kminer_agent::nets::{actor_forward, critic_forward, init_actor, init_critic};
use kminer_agent::{Agent, GraphBatch, NetConfig};
use kminer_autograd::{ParameterSet, Tape};
use kminer_cli::{commands, Checkpoint, RunConfig};
use kminer_core::canon::{self, probe as canon_probe};
use kminer_core::enumerator::{most_frequent, pattern_histogram};
use kminer_core::io::parse_fixture;
use kminer_core::mdp::{run_episode, RewardMode};
use kminer_core::{FrequencyMemo, LabeledGraph, StateSnapshot};
use kminer_testkit as brute;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::support::{brute_embeddings, brute_mni, ensure, small_corpus, Outcome, EIGHT_NODE};

pub fn worked_example() -> Outcome {
    let f = parse_fixture(EIGHT_NODE).map_err(|e| e.to_string())?;
    let g = &f.graph;
    let id = |t: &str| f.vocab.id(t).expect("fixture label");
    let b = LabeledGraph::new(vec![id("A"), id("B"), id("A")], &[(0, 1), (1, 2)]).unwrap();
    let c = LabeledGraph::new(vec![id("A"); 3], &[(0, 1), (1, 2), (0, 2)]).unwrap();

    // The fixture is checked against brute force before the library.
    let brute_b = (brute::frequency(&b, g), brute_mni(&b, g));
    let brute_c = (brute::frequency(&c, g), brute_mni(&c, g), brute_embeddings(&c, g).len());
    ensure!(brute_b == (4, 2), "fixture: pattern b (frequency, MNI) = {brute_b:?}");
    ensure!(brute_c == (1, 3, 6), "fixture: pattern c (frequency, MNI, embeddings) = {brute_c:?}");

    let lib_b = (canon::frequency(&b, g), canon::mni(&b, g));
    let lib_c = (canon::frequency(&c, g), canon::mni(&c, g), canon::enumerate_embeddings(&c, g).len());
    ensure!(lib_b == (4, 2), "pattern b (frequency, MNI) = {lib_b:?}");
    ensure!(lib_c == (1, 3, 6), "pattern c (frequency, MNI, embeddings) = {lib_c:?}");

    let best = most_frequent(g, 3).map_err(|e| e.to_string())?;
    let found = g.induced_subgraph(&best.witness).unwrap();
    ensure!(
        best.best_frequency == 4 && brute::isomorphic(&found, &b),
        "most frequent 3-pattern has frequency {} on {:?}",
        best.best_frequency,
        best.witness
    );
    Ok("b: frequency 4, MNI 2; c: frequency 1, MNI 3, 6 embeddings; best A-B-A at 4".into())
}

pub fn oracle_equivalence() -> Outcome {
    let mut classes = 0;
    for (i, g) in small_corpus().iter().enumerate() {
        for k in 3..=5 {
            let hist = pattern_histogram(g, k).map_err(|e| e.to_string())?;
            let truth = brute::histogram(g, k);
            ensure!(
                hist.len() == truth.len(),
                "graph {i}, k={k}: {} classes, brute force finds {}",
                hist.len(),
                truth.len()
            );
            for entry in hist.entries.values() {
                let pattern = brute::induced(g, &entry.witness);
                let matched = truth.iter().find(|(p, _)| brute::isomorphic(p, &pattern));
                ensure!(
                    matched.map(|(_, n)| *n) == Some(entry.frequency),
                    "graph {i}, k={k}: witness {:?} counted {} times, brute force {:?}",
                    entry.witness,
                    entry.frequency,
                    matched.map(|(_, n)| *n)
                );
            }
            ensure!(
                hist.total() == brute::connected_k_subsets(g, k).len(),
                "graph {i}, k={k}: totals differ"
            );
            classes += hist.len();
        }
    }
    Ok(format!("50 graphs x k 3..=5, {classes} classes matched entry for entry"))
}

pub fn matcher_consistency() -> Outcome {
    let corpus = small_corpus();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut pairs = 0;
    while pairs < 20 {
        let source = corpus.choose(&mut rng).unwrap();
        let target = corpus.choose(&mut rng).unwrap();
        let k = rng.random_range(3..=5);
        let sets = brute::connected_k_subsets(source, k);
        let Some(set) = sets.choose(&mut rng) else { continue };
        let pattern = source.induced_subgraph(set).unwrap();
        let hist = pattern_histogram(target, k).map_err(|e| e.to_string())?;
        let code = canon::canonical_code(&pattern).map_err(|e| e.to_string())?;
        let expected = hist.get(&code).map_or(0, |e| e.frequency);
        let got = canon::frequency(&pattern, target);
        ensure!(got == expected, "pair {pairs}: frequency {got}, histogram {expected}");
        pairs += 1;
    }
    Ok("20 pairs agree".into())
}

/// State after a random connected prefix of length `0..k`.
fn random_state(g: &LabeledGraph, k: usize, rng: &mut ChaCha8Rng) -> StateSnapshot {
    let t = rng.random_range(0..k);
    let mut state = kminer_core::EpisodeState::reset(g, k).unwrap();
    for _ in 0..t {
        let valid = state.valid_action_list().unwrap();
        state = state.step(*valid.choose(rng).unwrap()).unwrap().0;
    }
    state.snapshot()
}

pub fn masking_and_normalization() -> Outcome {
    let corpus = small_corpus();
    let cfg = NetConfig {
        hidden_dim: 16,
        num_layers: 2,
        num_heads: 2,
        k_max: 5,
        ..NetConfig::new(2)
    };
    let (mut worst_invalid, mut worst_sum, mut worst_adv) = (0.0f64, 0.0f64, 0.0f64);
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    for draw in 0..10u64 {
        let actor: ParameterSet<f64> = init_actor(&cfg, &mut ChaCha8Rng::seed_from_u64(draw)).unwrap();
        let critic: ParameterSet<f64> = init_critic(&cfg, &mut ChaCha8Rng::seed_from_u64(100 + draw)).unwrap();
        let members: Vec<(&LabeledGraph, StateSnapshot)> = (0..4)
            .map(|_| {
                let g = corpus.choose(&mut rng).unwrap();
                let k = rng.random_range(3..=5);
                (g, random_state(g, k, &mut rng))
            })
            .collect();
        let items: Vec<_> = members.iter().map(|(g, s)| (*g, s)).collect();
        let batch = GraphBatch::new(&items, &cfg).unwrap();
        let tape = Tape::<f64>::no_grad();
        let pol = actor_forward(&cfg, &actor.bind(&tape), &batch).unwrap();
        let probs = pol.probs.tensor();
        let out = critic_forward(&cfg, &critic.bind(&tape), &batch).unwrap();
        let (q, v) = (out.q.tensor(), out.value.tensor());
        for (gi, group) in batch.groups.iter().enumerate() {
            let mut sum = 0.0;
            let mut adv = Vec::new();
            for r in group.clone() {
                let p = probs.data()[r];
                if batch.mask[r] {
                    sum += p;
                    adv.push(q.data()[r] - v.data()[gi]);
                } else {
                    worst_invalid = worst_invalid.max(p.abs());
                }
            }
            worst_sum = worst_sum.max((sum - 1.0).abs());
            worst_adv = worst_adv.max((adv.iter().sum::<f64>() / adv.len() as f64).abs());
        }
    }
    ensure!(worst_invalid <= 1e-12, "invalid-action probability {worst_invalid:e}");
    ensure!(worst_sum <= 1e-6, "valid probabilities off one by {worst_sum:e}");
    ensure!(worst_adv <= 1e-5, "mean advantage {worst_adv:e}");

    let oracles: Vec<Vec<_>> = corpus
        .iter()
        .map(|g| (3..=5).map(|k| most_frequent(g, k).unwrap()).collect())
        .collect();
    let mut memos = vec![FrequencyMemo::new(); corpus.len()];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..1000 {
        let gi = rng.random_range(0..corpus.len());
        let k = rng.random_range(3..=5);
        let mut pick = ChaCha8Rng::seed_from_u64(rng.random());
        let ep = run_episode(
            &corpus[gi],
            k,
            |s| *s.valid_action_list().unwrap().choose(&mut pick).unwrap(),
            RewardMode::OracleNormalized,
            Some(&oracles[gi][k - 3]),
            &mut memos[gi],
        )
        .map_err(|e| e.to_string())?;
        let r = ep.episode_return();
        lo = lo.min(r);
        hi = hi.max(r);
    }
    ensure!(lo > 0.0 && hi <= 1.0, "rewards span [{lo}, {hi}]");
    Ok(format!(
        "invalid <= {worst_invalid:.1e}, |sum-1| <= {worst_sum:.1e}, |mean adv| <= {worst_adv:.1e}, rewards in [{lo:.3}, {hi:.3}]"
    ))
}

pub fn episode_structure() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let mut episodes = 0;
    for (i, g) in small_corpus().iter().enumerate() {
        let mut memo = FrequencyMemo::new();
        for k in 3..=5 {
            for _ in 0..10 {
                let mut pick = ChaCha8Rng::seed_from_u64(rng.random());
                let ep = run_episode(
                    g,
                    k,
                    |s| *s.valid_action_list().unwrap().choose(&mut pick).unwrap(),
                    RewardMode::Raw,
                    None,
                    &mut memo,
                )
                .map_err(|e| e.to_string())?;
                ensure!(ep.transitions.len() == k && ep.nodes.len() == k, "graph {i}, k={k}: length {}", ep.transitions.len());
                for (t, tr) in ep.transitions.iter().enumerate() {
                    let prefix = &ep.nodes[..=t];
                    ensure!(brute::subset_connected(g, prefix), "graph {i}: prefix {prefix:?} disconnected");
                    let last = t + 1 == k;
                    ensure!(tr.done == last, "graph {i}: done flag at step {t}");
                    ensure!(last || tr.reward == 0.0, "graph {i}: reward {} at step {t}", tr.reward);
                }
                let distinct: BTreeSet<_> = ep.nodes.iter().collect();
                ensure!(distinct.len() == k, "graph {i}: repeated node in {:?}", ep.nodes);
                episodes += 1;
            }
        }
    }
    Ok(format!("{episodes} episodes"))
}

pub fn inference_cost() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("ring.graph");
    let mut text = String::new();
    for v in 1..=12 {
        text += &format!("v {v} {}\n", if v % 3 == 0 { "B" } else { "A" });
    }
    for v in 1..=12 {
        text += &format!("e {v} {}\n", v % 12 + 1);
    }
    text += "e 1 7\ne 3 9\n";
    std::fs::write(&graph, &text).unwrap();
    let vocab = parse_fixture(&text).unwrap().vocab;
    let net = NetConfig { k_max: 9, ..NetConfig::new(vocab.len()) };
    let agent = Agent::new(net, 1.0, 4).map_err(|e| e.to_string())?;
    let out = dir.path().join("out");
    let cfg = RunConfig::parse(&format!("out = {}\nk_max = 9\n", out.display())).unwrap();
    Checkpoint { agent, vocab, epoch: 0 }.save(&cfg.checkpoint_path()).map_err(|e| e.to_string())?;

    for k in 3..=9 {
        canon_probe::reset();
        kminer_agent::nets::probe::reset();
        let found = commands::infer(&cfg, Some(&graph), None, k, false).map_err(|e| e.to_string())?;
        let (actor, canon) = (kminer_agent::nets::probe::calls(), canon_probe::calls());
        ensure!(
            actor == k as u64 && found.actor_passes == k && canon == 0 && found.nodes.len() == k,
            "k={k}: {actor} actor passes ({} reported), {canon} frequency calls",
            found.actor_passes
        );
    }
    Ok("k passes and zero frequency calls for k = 3..=9".into())
}
