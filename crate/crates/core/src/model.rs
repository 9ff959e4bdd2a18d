//! The dual-embedding CNN tagger: frozen embedding concatenation, dropout,
//! a first convolution layer with two kernel widths applied side by side,
//! three more convolution layers, and a position-shared linear + softmax
//! head over `{B, I, O}`.
//!
//! Every convolution is same-padded with stride 1, so each intermediate
//! representation keeps exactly one row per input token.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::embeddings::{DualEmbedder, EmbMode};
use crate::error::{Error, Result};
use crate::layers::{
    conv1d_same, conv1d_same_backward, dropout, linear_positionwise, linear_positionwise_backward,
    maxpool_broadcast, maxpool_broadcast_backward, relu, relu_backward, softmax_rows,
    ConvLayerParams, DropoutMask, LinearParams,
};
use crate::loss::cross_entropy_loss;
use crate::rng::seeded;
use crate::scalar::Scalar;
use crate::tensor::SeqTensor;

/// One group of convolution filters sharing a kernel width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterGroup {
    pub filters: usize,
    pub kernel: usize,
}

/// Architecture and regularization settings, including the ablation
/// switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub emb_mode: EmbMode,
    /// Filter groups of the first convolution layer, each applied to the
    /// embedding output and concatenated channel-wise.
    pub layer1_groups: Vec<FilterGroup>,
    /// The remaining convolution layers, one group each.
    pub deep_layers: Vec<FilterGroup>,
    pub dropout_rate: f64,
    pub num_labels: usize,
    /// Replace every position's layer-4 features with the channel maximum
    /// before the output layer (ablation).
    pub maxpool_ablation: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            emb_mode: EmbMode::Dual,
            layer1_groups: vec![
                FilterGroup {
                    filters: 128,
                    kernel: 3,
                },
                FilterGroup {
                    filters: 128,
                    kernel: 5,
                },
            ],
            deep_layers: vec![
                FilterGroup {
                    filters: 256,
                    kernel: 5,
                };
                3
            ],
            dropout_rate: 0.55,
            num_labels: 3,
            maxpool_ablation: false,
            seed: 1,
        }
    }
}

impl ModelConfig {
    /// Small architecture for tests and toy data.
    pub fn tiny(emb_mode: EmbMode, seed: u64) -> Self {
        ModelConfig {
            emb_mode,
            layer1_groups: vec![
                FilterGroup {
                    filters: 8,
                    kernel: 3,
                },
                FilterGroup {
                    filters: 8,
                    kernel: 5,
                },
            ],
            deep_layers: vec![
                FilterGroup {
                    filters: 16,
                    kernel: 5
                };
                3
            ],
            dropout_rate: 0.2,
            num_labels: 3,
            maxpool_ablation: false,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_labels != Label::COUNT {
            return Err(Error::parameter(
                "num_labels",
                format!(
                    "label space is fixed at {}, got {}",
                    Label::COUNT,
                    self.num_labels
                ),
            ));
        }
        if self.layer1_groups.is_empty() {
            return Err(Error::parameter(
                "layer1_groups",
                "need at least one filter group",
            ));
        }
        for g in self.layer1_groups.iter().chain(self.deep_layers.iter()) {
            if g.kernel % 2 == 0 || g.kernel == 0 {
                return Err(Error::parameter(
                    "kernel",
                    format!("kernel widths must be odd, got {}", g.kernel),
                ));
            }
            if g.filters == 0 {
                return Err(Error::parameter("filters", "filter counts must be >= 1"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::parameter(
                "dropout_rate",
                format!("dropout rate must be in [0, 1), got {}", self.dropout_rate),
            ));
        }
        Ok(())
    }
}

/// Retained intermediates from one training-mode forward pass, consumed by
/// [`DeCnn::backward`]. Stage 0 is the first (grouped) convolution layer.
#[derive(Debug, Clone)]
pub struct ForwardTrace<S> {
    /// Input to each conv stage; `inputs[0]` is the dropped-out embedding.
    inputs: Vec<SeqTensor<S>>,
    /// Pre-activation of each conv stage (layer 1 already concatenated).
    pres: Vec<SeqTensor<S>>,
    /// Dropout mask applied after each stage's ReLU.
    masks: Vec<DropoutMask<S>>,
    /// Input to the output layer (after optional max-pooling).
    lin_input: SeqTensor<S>,
    maxpool_argmax: Option<Vec<usize>>,
    /// Final per-position label distributions.
    pub probs: SeqTensor<S>,
}

impl<S: Scalar> ForwardTrace<S> {
    /// Position counts of every intermediate representation, in order:
    /// embedding input, each conv pre-activation, output-layer input, probs.
    pub fn stage_position_counts(&self) -> Vec<usize> {
        let mut counts = vec![self.inputs[0].rows()];
        counts.extend(self.pres.iter().map(|t| t.rows()));
        counts.push(self.lin_input.rows());
        counts.push(self.probs.rows());
        counts
    }
}

/// The assembled tagger. Embedding tables are frozen: they are never touched
/// by the backward pass or the optimizer.
#[derive(Debug, Clone)]
pub struct DeCnn<S> {
    pub config: ModelConfig,
    embedder: Arc<DualEmbedder<S>>,
    layer1: Vec<ConvLayerParams<S>>,
    deep: Vec<ConvLayerParams<S>>,
    output: LinearParams<S>,
}

impl<S: Scalar> DeCnn<S> {
    /// Builds the model with Glorot-initialized weights. All shape
    /// consistency is checked here, not at forward time.
    pub fn init(config: ModelConfig, embedder: Arc<DualEmbedder<S>>) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded(config.seed, "init");
        let input_dim = embedder.output_dim();
        if input_dim == 0 {
            return Err(Error::parameter(
                "embedder",
                "embedding output dim must be > 0",
            ));
        }
        let mut layer1 = Vec::with_capacity(config.layer1_groups.len());
        for g in &config.layer1_groups {
            layer1.push(ConvLayerParams::glorot(
                g.filters, g.kernel, input_dim, &mut rng,
            )?);
        }
        let mut width: usize = config.layer1_groups.iter().map(|g| g.filters).sum();
        let mut deep = Vec::with_capacity(config.deep_layers.len());
        for g in &config.deep_layers {
            deep.push(ConvLayerParams::glorot(
                g.filters, g.kernel, width, &mut rng,
            )?);
            width = g.filters;
        }
        let output = LinearParams::glorot(width, config.num_labels, &mut rng)?;
        Ok(DeCnn {
            config,
            embedder,
            layer1,
            deep,
            output,
        })
    }

    pub fn embedder(&self) -> &Arc<DualEmbedder<S>> {
        &self.embedder
    }

    /// Parameter tensors by name with their shapes, in a fixed order (used
    /// by the checkpoint writer).
    pub(crate) fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[S])> {
        let mut out: Vec<(String, Vec<usize>, &[S])> = Vec::new();
        let layer1 = self
            .layer1
            .iter()
            .enumerate()
            .map(|(i, p)| (format!("layer1.{i}"), p));
        let deep = self
            .deep
            .iter()
            .enumerate()
            .map(|(i, p)| (format!("deep.{i}"), p));
        for (name, p) in layer1.chain(deep) {
            out.push((
                format!("{name}.weights"),
                vec![p.out_channels(), p.kernel(), p.in_channels()],
                p.weights.as_slice(),
            ));
            out.push((
                format!("{name}.bias"),
                vec![p.out_channels()],
                p.bias.as_slice(),
            ));
        }
        out.push((
            "output.weights".into(),
            vec![self.output.in_channels(), self.output.out_channels()],
            &self.output.weights,
        ));
        out.push((
            "output.bias".into(),
            vec![self.output.out_channels()],
            &self.output.bias,
        ));
        out
    }

    /// Mutable view of the same tensors, for the checkpoint reader.
    pub(crate) fn named_tensors_mut(&mut self) -> Vec<(String, &mut Vec<S>)> {
        let mut out: Vec<(String, &mut Vec<S>)> = Vec::new();
        for (i, p) in self.layer1.iter_mut().enumerate() {
            out.push((format!("layer1.{i}.weights"), &mut p.weights));
            out.push((format!("layer1.{i}.bias"), &mut p.bias));
        }
        for (i, p) in self.deep.iter_mut().enumerate() {
            out.push((format!("deep.{i}.weights"), &mut p.weights));
            out.push((format!("deep.{i}.bias"), &mut p.bias));
        }
        out.push(("output.weights".into(), &mut self.output.weights));
        out.push(("output.bias".into(), &mut self.output.bias));
        out
    }

    /// Inference forward pass: dropout off, deterministic.
    pub fn forward(&self, tokens: &[String]) -> Result<SeqTensor<S>> {
        let mut rng = seeded(0, "inference-unused");
        Ok(self.forward_traced(tokens, false, &mut rng)?.probs)
    }

    /// The max-pooling ablation entry point; errors unless the config
    /// enables the ablation.
    pub fn forward_maxpool_ablation(
        &self,
        tokens: &[String],
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<SeqTensor<S>> {
        if !self.config.maxpool_ablation {
            return Err(Error::State(
                "maxpool ablation is disabled in this model's config".into(),
            ));
        }
        Ok(self.forward_traced(tokens, training, rng)?.probs)
    }

    /// Forward pass retaining every intermediate needed for backward.
    pub fn forward_traced(
        &self,
        tokens: &[String],
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<ForwardTrace<S>> {
        let rate = self.config.dropout_rate;
        let embedded = self.embedder.lookup(tokens)?;
        let (x0, _emb_mask) = dropout(&embedded, rate, rng, training)?;

        let mut inputs = Vec::with_capacity(1 + self.deep.len());
        let mut pres = Vec::with_capacity(1 + self.deep.len());
        let mut masks = Vec::with_capacity(1 + self.deep.len());

        // Stage 0: the grouped first layer, concatenated channel-wise.
        let group_pres: Vec<SeqTensor<S>> = self
            .layer1
            .iter()
            .map(|p| conv1d_same(&x0, p))
            .collect::<Result<_>>()?;
        let pre = SeqTensor::concat_cols(&group_pres);
        inputs.push(x0);
        let (mut current, mask) = dropout(&relu(&pre), rate, rng, training)?;
        pres.push(pre);
        masks.push(mask);

        for params in &self.deep {
            let pre = conv1d_same(&current, params)?;
            let (next, mask) = dropout(&relu(&pre), rate, rng, training)?;
            inputs.push(current);
            pres.push(pre);
            masks.push(mask);
            current = next;
        }

        let (lin_input, maxpool_argmax) = if self.config.maxpool_ablation {
            let (pooled, argmax) = maxpool_broadcast(&current);
            (pooled, Some(argmax))
        } else {
            (current, None)
        };
        let logits = linear_positionwise(&lin_input, &self.output)?;
        let probs = softmax_rows(&logits);
        Ok(ForwardTrace {
            inputs,
            pres,
            masks,
            lin_input,
            maxpool_argmax,
            probs,
        })
    }

    /// Backpropagates one sentence's loss through the trace, accumulating
    /// parameter gradients. The embedding input receives no gradient.
    /// Returns the loss.
    pub fn backward(&mut self, trace: &ForwardTrace<S>, labels: &[Label]) -> Result<S> {
        let (loss, d_logits) = cross_entropy_loss(&trace.probs, labels)?;
        let d_lin_in = linear_positionwise_backward(&trace.lin_input, &mut self.output, &d_logits)?;
        let mut grad = match &trace.maxpool_argmax {
            Some(argmax) => maxpool_broadcast_backward(argmax, &d_lin_in),
            None => d_lin_in,
        };
        for stage in (0..trace.pres.len()).rev() {
            grad = trace.masks[stage].apply(&grad);
            grad = relu_backward(&trace.pres[stage], &grad);
            if stage == 0 {
                // Split the concatenated layer-1 gradient back into groups;
                // the summed input gradient would flow to the (frozen)
                // embeddings and is discarded.
                let mut offset = 0;
                for params in self.layer1.iter_mut() {
                    let slice = grad.slice_cols(offset, params.out_channels());
                    offset += params.out_channels();
                    let _ = conv1d_same_backward(&trace.inputs[0], params, &slice)?;
                }
            } else {
                grad =
                    conv1d_same_backward(&trace.inputs[stage], &mut self.deep[stage - 1], &grad)?;
            }
        }
        Ok(loss)
    }

    /// Per-position argmax over the label distribution; ties break to the
    /// smallest label index.
    pub fn predict_labels(&self, tokens: &[String]) -> Result<Vec<Label>> {
        let probs = self.forward(tokens)?;
        let mut labels = Vec::with_capacity(probs.rows());
        for pos in 0..probs.rows() {
            let row = probs.row(pos);
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            labels.push(Label::from_index(best)?);
        }
        Ok(labels)
    }

    /// All trainable tensors as `(values, gradients)` pairs, in a fixed
    /// order. Embedding tables are not included: they are frozen.
    pub fn param_pairs_mut(&mut self) -> Vec<(&mut Vec<S>, &mut Vec<S>)> {
        let mut out = Vec::new();
        for p in self.layer1.iter_mut().chain(self.deep.iter_mut()) {
            out.push((&mut p.weights, &mut p.grad_weights));
            out.push((&mut p.bias, &mut p.grad_bias));
        }
        out.push((&mut self.output.weights, &mut self.output.grad_weights));
        out.push((&mut self.output.bias, &mut self.output.grad_bias));
        out
    }

    pub fn num_param_values(&self) -> usize {
        let conv: usize = self
            .layer1
            .iter()
            .chain(self.deep.iter())
            .map(|p| p.weights.len() + p.bias.len())
            .sum();
        conv + self.output.weights.len() + self.output.bias.len()
    }

    pub fn zero_grads(&mut self) {
        for p in self.layer1.iter_mut().chain(self.deep.iter_mut()) {
            p.zero_grads();
        }
        self.output.zero_grads();
    }

    pub fn scale_grads(&mut self, factor: f64) {
        let f = S::from_f64(factor);
        for (_, grads) in self.param_pairs_mut() {
            for g in grads.iter_mut() {
                *g *= f;
            }
        }
    }
}
