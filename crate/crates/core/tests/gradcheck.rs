//! Finite-difference oracles for the analytic backward passes.
//!
//! Central differences with h = 1e-4 in double precision, compared per
//! parameter. The relative error uses `|a - b| / max(|a| + |b|, 1e-6)` so
//! that parameters with genuinely zero gradient (dead ReLU paths) do not
//! divide by zero.

#![allow(clippy::needless_range_loop)]

use rand::Rng;

use decnn_core::corpus::Label;
use decnn_core::embeddings::{DualEmbedder, EmbMode, EmbeddingTable};
use decnn_core::layers::{
    conv1d_same, conv1d_same_backward, linear_positionwise, linear_positionwise_backward,
    ConvLayerParams, LinearParams,
};
use decnn_core::model::{DeCnn, FilterGroup, ModelConfig};
use decnn_core::rng::seeded;
use decnn_core::tensor::SeqTensor;

const H: f64 = 1e-4;
const TOL: f64 = 1e-4;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-6)
}

// Scalar objective for layer-level checks: sum of squares of the output.
fn sum_sq(t: &SeqTensor<f64>) -> f64 {
    t.data().iter().map(|v| v * v).sum()
}

#[test]
fn conv_gradients_match_finite_differences() {
    let mut rng = seeded(21, "conv-fd");
    let (n, d_in, d_out, k) = (5, 3, 4, 3);
    let mut input = SeqTensor::<f64>::zeros(n, d_in);
    for v in input.data_mut().iter_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    let mut params = ConvLayerParams::<f64>::glorot(d_out, k, d_in, &mut rng).unwrap();

    // Analytic: dL/dw for L = sum(y^2) is backward with grad_out = 2y.
    let y = conv1d_same(&input, &params).unwrap();
    let grad_out = y.map(|v| 2.0 * v);
    let d_input = conv1d_same_backward(&input, &mut params, &grad_out).unwrap();

    let analytic_w = params.grad_weights.clone();
    let analytic_b = params.grad_bias.clone();
    for i in 0..params.weights.len() {
        let orig = params.weights[i];
        params.weights[i] = orig + H;
        let up = sum_sq(&conv1d_same(&input, &params).unwrap());
        params.weights[i] = orig - H;
        let down = sum_sq(&conv1d_same(&input, &params).unwrap());
        params.weights[i] = orig;
        let fd = (up - down) / (2.0 * H);
        assert!(
            rel_err(analytic_w[i], fd) < TOL,
            "weight {i}: analytic {} vs fd {fd}",
            analytic_w[i]
        );
    }
    for i in 0..params.bias.len() {
        let orig = params.bias[i];
        params.bias[i] = orig + H;
        let up = sum_sq(&conv1d_same(&input, &params).unwrap());
        params.bias[i] = orig - H;
        let down = sum_sq(&conv1d_same(&input, &params).unwrap());
        params.bias[i] = orig;
        let fd = (up - down) / (2.0 * H);
        assert!(rel_err(analytic_b[i], fd) < TOL, "bias {i}");
    }
    // Input gradient too.
    for i in 0..input.data().len() {
        let orig = input.data()[i];
        input.data_mut()[i] = orig + H;
        let up = sum_sq(&conv1d_same(&input, &params).unwrap());
        input.data_mut()[i] = orig - H;
        let down = sum_sq(&conv1d_same(&input, &params).unwrap());
        input.data_mut()[i] = orig;
        let fd = (up - down) / (2.0 * H);
        assert!(rel_err(d_input.data()[i], fd) < TOL, "input {i}");
    }
}

#[test]
fn linear_gradients_match_finite_differences() {
    let mut rng = seeded(22, "lin-fd");
    let (n, d_in, d_out) = (4, 5, 3);
    let mut input = SeqTensor::<f64>::zeros(n, d_in);
    for v in input.data_mut().iter_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    let mut params = LinearParams::<f64>::glorot(d_in, d_out, &mut rng).unwrap();
    let y = linear_positionwise(&input, &params).unwrap();
    let grad_out = y.map(|v| 2.0 * v);
    linear_positionwise_backward(&input, &mut params, &grad_out).unwrap();

    let analytic_w = params.grad_weights.clone();
    for i in 0..params.weights.len() {
        let orig = params.weights[i];
        params.weights[i] = orig + H;
        let up = sum_sq(&linear_positionwise(&input, &params).unwrap());
        params.weights[i] = orig - H;
        let down = sum_sq(&linear_positionwise(&input, &params).unwrap());
        params.weights[i] = orig;
        let fd = (up - down) / (2.0 * H);
        assert!(rel_err(analytic_w[i], fd) < TOL, "weight {i}");
    }
}

fn random_tiny_model(seed: u64, maxpool: bool) -> (DeCnn<f64>, Vec<String>, Vec<Label>) {
    let words: Vec<String> = (0..5).map(|i| format!("tok{i}")).collect();
    let word_refs: Vec<&str> = words.iter().map(|s| s.as_str()).collect();
    let mut rng = seeded(seed, "fd-embed");
    let general = EmbeddingTable::<f64>::random(&word_refs, 4, &mut rng).unwrap();
    let domain = EmbeddingTable::<f64>::random(&word_refs, 3, &mut rng).unwrap();
    let embedder = DualEmbedder::new(general, domain, EmbMode::Dual);
    let config = ModelConfig {
        emb_mode: EmbMode::Dual,
        layer1_groups: vec![
            FilterGroup {
                filters: 4,
                kernel: 3,
            },
            FilterGroup {
                filters: 4,
                kernel: 5,
            },
        ],
        deep_layers: vec![FilterGroup {
            filters: 8,
            kernel: 3,
        }],
        dropout_rate: 0.0,
        num_labels: 3,
        maxpool_ablation: maxpool,
        seed,
    };
    let model = DeCnn::init(config, embedder).unwrap();
    let labels = vec![Label::O, Label::B, Label::I, Label::O, Label::B];
    (model, words, labels)
}

fn model_loss(model: &DeCnn<f64>, tokens: &[String], labels: &[Label]) -> f64 {
    let mut rng = seeded(0, "fd-loss");
    let trace = model.forward_traced(tokens, true, &mut rng).unwrap();
    decnn_core::loss::cross_entropy_loss(&trace.probs, labels)
        .unwrap()
        .0
}

fn check_full_model(seed: u64, maxpool: bool) -> f64 {
    let (mut model, tokens, labels) = random_tiny_model(seed, maxpool);

    model.zero_grads();
    let mut rng = seeded(0, "fd-loss");
    let trace = model.forward_traced(&tokens, true, &mut rng).unwrap();
    model.backward(&trace, &labels).unwrap();
    let analytic: Vec<Vec<f64>> = model
        .param_pairs_mut()
        .iter()
        .map(|(_, g)| g.to_vec())
        .collect();

    let mut max_rel = 0.0f64;
    let tensor_count = analytic.len();
    for t in 0..tensor_count {
        let len = analytic[t].len();
        for i in 0..len {
            let orig = model.param_pairs_mut()[t].0[i];
            model.param_pairs_mut()[t].0[i] = orig + H;
            let up = model_loss(&model, &tokens, &labels);
            model.param_pairs_mut()[t].0[i] = orig - H;
            let down = model_loss(&model, &tokens, &labels);
            model.param_pairs_mut()[t].0[i] = orig;
            let fd = (up - down) / (2.0 * H);
            let rel = rel_err(analytic[t][i], fd);
            if rel > max_rel {
                max_rel = rel;
            }
            assert!(
                rel < TOL,
                "tensor {t} value {i}: analytic {} vs fd {fd} (rel {rel})",
                analytic[t][i]
            );
        }
    }
    max_rel
}

#[test]
fn full_model_gradients_match_finite_differences() {
    let max_rel = check_full_model(31, false);
    assert!(max_rel < TOL);
}

#[test]
fn full_model_gradients_with_maxpool_match_finite_differences() {
    let max_rel = check_full_model(33, true);
    assert!(max_rel < TOL);
}
