//! Analytic gradients against central finite differences on a small random model.

use cedc_nn::{Graph, ParameterStore, PosMode, TokenBatch, Transformer, TransformerConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-4;
const TOLERANCE: f64 = 1e-3;

fn loss(
    model: &Transformer<f64>,
    store: &ParameterStore<f64>,
    batch: &TokenBatch,
    targets: &[usize],
    mask: &[bool],
) -> f64 {
    let mut g = Graph::new(store);
    let logits = model.forward(&mut g, batch, None).unwrap();
    let l = g
        .cross_entropy(logits, targets.to_vec(), mask.to_vec())
        .unwrap();
    g.value(l).data()[0]
}

/// Per tensor: |analytic - fd| / (|fd| + 1e-8), norms taken over the whole tensor.
fn check(pos_mode: PosMode, seed: u64) -> Vec<(String, f64)> {
    let cfg = TransformerConfig {
        n_layers: 2,
        n_heads: 2,
        d_model: 16,
        d_ff: 64,
        vocab_size: 12,
        max_seq_len: 8,
        pos_mode,
        dropout: 0.0,
    };
    let (model, mut store) = Transformer::<f64>::init(cfg, seed).unwrap();
    // Non-trivial biases and gains so their gradients are exercised too.
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    let names: Vec<String> = store.names().map(String::from).collect();
    for name in &names {
        if name.ends_with("bias") || name.ends_with(".b") || name.contains(".b") {
            for v in store.get_mut(name).unwrap().data_mut() {
                *v += rng.gen_range(-0.1..0.1);
            }
        }
    }
    let (batch, seq) = (4, 8);
    let tokens: Vec<u32> = (0..batch * seq).map(|_| rng.gen_range(0..12)).collect();
    let targets: Vec<usize> = (0..batch * seq).map(|_| rng.gen_range(0..12)).collect();
    let mask: Vec<bool> = (0..batch * seq).map(|i| i % 8 != 0).collect();
    let tb = TokenBatch::new(tokens, batch, seq).unwrap();

    let (_, grads) = model
        .loss_and_gradients(&store, &tb, targets.clone(), mask.clone(), None)
        .unwrap();
    store.accumulate(grads).unwrap();

    let mut report = Vec::new();
    for name in names {
        let analytic = store.get(&name).unwrap().grad().unwrap().to_vec();
        let mut fd = vec![0.0; analytic.len()];
        for i in 0..analytic.len() {
            let orig = store.get(&name).unwrap().data()[i];
            store.get_mut(&name).unwrap().data_mut()[i] = orig + STEP;
            let up = loss(&model, &store, &tb, &targets, &mask);
            store.get_mut(&name).unwrap().data_mut()[i] = orig - STEP;
            let down = loss(&model, &store, &tb, &targets, &mask);
            store.get_mut(&name).unwrap().data_mut()[i] = orig;
            fd[i] = (up - down) / (2.0 * STEP);
        }
        let diff = analytic
            .iter()
            .zip(&fd)
            .map(|(a, f)| (a - f).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm = fd.iter().map(|f| f * f).sum::<f64>().sqrt();
        report.push((name, diff / (norm + 1e-8)));
    }
    report
}

#[test]
fn sinusoidal_model_gradients_match_finite_differences() {
    for (name, err) in check(PosMode::Sinusoidal, 1) {
        assert!(err < TOLERANCE, "{name}: relative error {err:e}");
    }
}

#[test]
fn alibi_and_learnable_gradients_match_finite_differences() {
    for mode in [PosMode::Alibi, PosMode::Learnable] {
        for (name, err) in check(mode, 2) {
            assert!(err < TOLERANCE, "{mode:?} {name}: relative error {err:e}");
        }
    }
}
