#![allow(dead_code)]

use kminer_agent::NetConfig;
use kminer_autograd::{ParameterSet, Tape, Tensor, Var};
use kminer_core::{LabeledGraph, StateSnapshot, TaskDescriptor};
use kminer_testkit::{max_relative_error, numeric_gradient};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn small_config(vocab: usize) -> NetConfig {
    NetConfig {
        hidden_dim: 4,
        num_layers: 2,
        num_heads: 2,
        k_max: 6,
        ..NetConfig::new(vocab)
    }
}

/// Standard-normal draws by Box-Muller.
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random::<f64>().max(1e-300);
    let v: f64 = rng.random();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

/// Every parameter redrawn from N(0, scale^2).
pub fn redraw(set: &ParameterSet<f64>, seed: u64, scale: f64) -> ParameterSet<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ParameterSet::new();
    for (name, t) in set.iter() {
        let data = (0..t.len()).map(|_| scale * normal(&mut rng)).collect();
        out.insert(name, Tensor::from_vec(t.rows(), t.cols(), data).unwrap()).unwrap();
    }
    out
}

/// Biases start at zero, which puts every pre-activation fed by an all-zero
/// row exactly on the ReLU kink. Gradient checks move them off it.
pub fn jitter_biases(set: &mut ParameterSet<f64>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB1A5);
    let names: Vec<String> = set.names().iter().filter(|n| n.ends_with(".b")).cloned().collect();
    for name in names {
        for x in set.get_mut(&name).unwrap().data_mut() {
            *x = 0.1 * normal(&mut rng);
        }
    }
}

pub fn with_flat(set: &ParameterSet<f64>, flat: &[f64]) -> ParameterSet<f64> {
    let mut out = set.clone();
    let mut at = 0;
    for t in out.values_mut() {
        let n = t.len();
        t.data_mut().copy_from_slice(&flat[at..at + n]);
        at += n;
    }
    out
}

pub fn flatten(set: &ParameterSet<f64>) -> Vec<f64> {
    set.values().iter().flat_map(|t| t.data().to_vec()).collect()
}

pub type Build<'a> = dyn for<'t, 'p> Fn(&'t Tape<f64>, &kminer_autograd::Bound<'t, 'p, f64>) -> Var<'t, f64> + 'a;

/// Max relative error between backprop and central differences of a scalar
/// loss over every parameter.
pub fn fd_error(set: &ParameterSet<f64>, build: &Build<'_>) -> f64 {
    let tape = Tape::new();
    let bound = set.bind(&tape);
    let loss = build(&tape, &bound);
    let grads = bound.gradients(&tape.backward(loss).unwrap());
    let analytic: Vec<f64> = grads.iter().flat_map(|t| t.data().to_vec()).collect();
    let numeric = numeric_gradient(
        |flat| {
            let p = with_flat(set, flat);
            let tape = Tape::no_grad();
            let bound = p.bind(&tape);
            build(&tape, &bound).item().unwrap()
        },
        &flatten(set),
        1e-5,
    );
    max_relative_error(&analytic, &numeric, 1e-6)
}

/// Random fixed projection turning a matrix output into a scalar loss.
pub fn project<'t>(tape: &'t Tape<f64>, out: Var<'t, f64>, seed: u64) -> Var<'t, f64> {
    let [r, c] = out.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = Tensor::from_vec(r, c, (0..r * c).map(|_| normal(&mut rng)).collect()).unwrap();
    out.mul(tape.leaf(w)).unwrap().sum()
}

pub fn snapshot(selection: &[usize], n: usize, k: usize) -> StateSnapshot {
    let mut sel = vec![false; n];
    for &v in selection {
        sel[v] = true;
    }
    StateSnapshot {
        selection: sel,
        task: TaskDescriptor {
            remaining: k - selection.len(),
            k,
        },
    }
}

pub fn eight_node() -> LabeledGraph {
    kminer_core::io::parse_fixture(include_str!("../../../../fixtures/eight_node.graph"))
        .unwrap()
        .graph
}
