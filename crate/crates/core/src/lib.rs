//! From-scratch sequence labeling toolkit for aspect term extraction.
//!
//! The centerpiece is a dual-embedding CNN tagger: a frozen concatenation of
//! general-purpose and domain-specific word vectors feeds a stack of
//! same-padded 1D convolutions and a position-shared linear/softmax head that
//! labels every token with `{B, I, O}`. Around the model sit the pieces needed
//! to run the whole pipeline on real review data: a word2vec-text embedding
//! loader with subword OOV composition, a skip-gram trainer for domain
//! embeddings, span/BIO corpus handling, mini-batch Adam training with
//! validation-based model selection, and exact-span-match F1 evaluation.

// The kernels index several parallel buffers per loop; iterator rewrites
// obscure the stencil arithmetic.
#![allow(clippy::needless_range_loop)]
#![allow(clippy::manual_is_multiple_of)]

pub mod checkpoint;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod layers;
pub mod loss;
pub mod model;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod skipgram;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Single-precision aliases used by the training/inference path.
pub type SeqTensorF32 = tensor::SeqTensor<f32>;
pub type EmbeddingTableF32 = embeddings::EmbeddingTable<f32>;
pub type DualEmbedderF32 = embeddings::DualEmbedder<f32>;
pub type DeCnnF32 = model::DeCnn<f32>;

/// Double-precision aliases, used by gradient-check oracles.
pub type SeqTensorF64 = tensor::SeqTensor<f64>;
pub type DeCnnF64 = model::DeCnn<f64>;
