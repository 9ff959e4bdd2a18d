//! Skip-gram negative-sampling trainer with subword n-grams, for building
//! domain embeddings from a raw in-domain review corpus.
//!
//! Input is one sentence per line, whitespace-tokenized. A word's input
//! representation is the mean of its own vector and its character n-gram
//! bucket vectors; training maximizes `log s(u_ctx . h) + sum_neg
//! log s(-u_neg . h)` by SGD with a linearly decaying learning rate.
//! Exported tables carry only the buckets reachable from the training
//! vocabulary; n-grams outside that set read as zero vectors after a
//! round trip.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::embeddings::{bucket_of, char_ngrams, EmbeddingTable, SubwordStore};
use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub dim: usize,
    pub epochs: usize,
    pub window: usize,
    pub negatives: usize,
    pub min_count: usize,
    pub initial_lr: f64,
    /// Subsampling threshold for frequent words; `0` disables subsampling.
    pub subsample_t: f64,
    pub min_n: usize,
    pub max_n: usize,
    pub buckets: usize,
    pub seed: u64,
    /// `1` is the deterministic sequential mode; more threads switch to
    /// lock-free racy updates (fast, nondeterministic).
    pub threads: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            dim: 100,
            epochs: 30,
            window: 5,
            negatives: 5,
            min_count: 5,
            initial_lr: 0.05,
            subsample_t: 1e-4,
            min_n: 3,
            max_n: 6,
            buckets: 2_000_000,
            seed: 1,
            threads: 1,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::parameter("dim", "embedding dimension must be >= 1"));
        }
        if self.epochs == 0 {
            return Err(Error::parameter("epochs", "epoch count must be >= 1"));
        }
        if self.window == 0 {
            return Err(Error::parameter("window", "context window must be >= 1"));
        }
        if self.negatives == 0 {
            return Err(Error::parameter(
                "negatives",
                "negative sample count must be >= 1",
            ));
        }
        if self.min_n == 0 || self.min_n > self.max_n {
            return Err(Error::parameter("ngram_range", "need 1 <= min_n <= max_n"));
        }
        if self.buckets == 0 {
            return Err(Error::parameter("buckets", "bucket count must be >= 1"));
        }
        if self.threads == 0 {
            return Err(Error::parameter("threads", "thread count must be >= 1"));
        }
        if self.initial_lr.is_nan() || self.initial_lr <= 0.0 {
            return Err(Error::parameter("initial_lr", "learning rate must be > 0"));
        }
        Ok(())
    }
}

/// Vocabulary statistics: retained words sorted by count (ties broken
/// lexicographically), and the cumulative `count^0.75` table driving
/// negative sampling.
#[derive(Debug, Clone)]
pub struct CorpusStats {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
    /// All whitespace tokens seen, including ones below min_count.
    pub total_tokens: u64,
    /// Token instances covered by the retained vocabulary.
    pub retained_tokens: u64,
    cdf: Vec<f64>,
}

impl CorpusStats {
    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }

    pub fn word(&self, idx: usize) -> &str {
        &self.words[idx]
    }

    pub fn count(&self, word: &str) -> u64 {
        self.index.get(word).map_or(0, |&i| self.counts[i])
    }

    pub fn word_index(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Negative-sampling distribution: `count^0.75`, normalized.
    pub fn sampling_probs(&self) -> Vec<f64> {
        let weights: Vec<f64> = self.counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
        let total: f64 = weights.iter().sum();
        weights.into_iter().map(|w| w / total).collect()
    }

    /// Draws one word index from the `count^0.75` distribution.
    pub fn sample_negative(&self, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.gen();
        match self
            .cdf
            .binary_search_by(|p| p.partial_cmp(&u).expect("finite"))
        {
            Ok(i) => i,
            Err(i) => i.min(self.cdf.len() - 1),
        }
    }

    /// Probability of keeping one occurrence of word `idx` under frequency
    /// subsampling with threshold `t`.
    pub fn keep_probability(&self, idx: usize, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        let f = self.counts[idx] as f64 / self.retained_tokens as f64;
        (((f / t).sqrt() + 1.0) * (t / f)).min(1.0)
    }
}

/// Single pass over the corpus: counts words, retains those with
/// `count >= min_count`, builds the sampling table.
pub fn build_vocab<'a>(
    lines: impl IntoIterator<Item = &'a str>,
    cfg: &TrainerConfig,
) -> Result<CorpusStats> {
    cfg.validate()?;
    let mut counts: HashMap<String, u64> = HashMap::new();
    let mut total_tokens = 0u64;
    for line in lines {
        for token in line.split_whitespace() {
            total_tokens += 1;
            *counts.entry(token.to_string()).or_insert(0) += 1;
        }
    }
    if total_tokens == 0 {
        return Err(Error::data("empty corpus: no tokens found"));
    }
    let mut retained: Vec<(String, u64)> = counts
        .into_iter()
        .filter(|(_, c)| *c >= cfg.min_count as u64)
        .collect();
    if retained.is_empty() {
        return Err(Error::data(format!(
            "no words reach min_count {}; corpus too small",
            cfg.min_count
        )));
    }
    retained.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let words: Vec<String> = retained.iter().map(|(w, _)| w.clone()).collect();
    let counts: Vec<u64> = retained.iter().map(|(_, c)| *c).collect();
    let index: HashMap<String, usize> = words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.clone(), i))
        .collect();
    let retained_tokens: u64 = counts.iter().sum();
    let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
    let total_weight: f64 = weights.iter().sum();
    let mut cdf = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in &weights {
        acc += w / total_weight;
        cdf.push(acc);
    }
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    Ok(CorpusStats {
        words,
        counts,
        index,
        total_tokens,
        retained_tokens,
        cdf,
    })
}

/// Per-epoch training statistics.
#[derive(Debug, Clone, Default)]
pub struct SkipgramLog {
    /// Mean per-pair loss for each epoch.
    pub epoch_mean_loss: Vec<f64>,
    /// Training pairs processed per epoch.
    pub epoch_pairs: Vec<u64>,
}

// Raw shared view of a parameter matrix for the lock-free parallel mode.
// With one worker no rows alias; with several workers the updates race on
// purpose (hogwild-style SGD) and the run is documented nondeterministic.
#[derive(Clone, Copy)]
struct SharedBuf<S> {
    ptr: *mut S,
    len: usize,
}

unsafe impl<S: Send> Send for SharedBuf<S> {}
unsafe impl<S: Send> Sync for SharedBuf<S> {}

impl<S> SharedBuf<S> {
    fn new(buf: &mut [S]) -> Self {
        SharedBuf {
            ptr: buf.as_mut_ptr(),
            len: buf.len(),
        }
    }

    #[allow(clippy::mut_from_ref)]
    unsafe fn row(&self, idx: usize, dim: usize) -> &mut [S] {
        debug_assert!((idx + 1) * dim <= self.len);
        std::slice::from_raw_parts_mut(self.ptr.add(idx * dim), dim)
    }
}

struct WorkerOutcome {
    loss_sum: f64,
    pairs: u64,
}

/// Trains on in-memory sentences. See [`train_corpus`] for the file variant.
pub fn train_sentences<S: Scalar>(
    sentences: &[String],
    cfg: &TrainerConfig,
) -> Result<(EmbeddingTable<S>, SkipgramLog)> {
    cfg.validate()?;
    let stats = build_vocab(sentences.iter().map(|s| s.as_str()), cfg)?;

    // Token ids per sentence, resolved once.
    let encoded: Vec<Vec<u32>> = sentences
        .iter()
        .map(|line| {
            line.split_whitespace()
                .filter_map(|t| stats.word_index(t).map(|i| i as u32))
                .collect()
        })
        .collect();

    // Precomputed n-gram buckets per vocab word.
    let word_buckets: Vec<Vec<u32>> = (0..stats.vocab_size())
        .map(|i| {
            char_ngrams(stats.word(i), cfg.min_n, cfg.max_n)
                .iter()
                .map(|g| bucket_of(g, cfg.buckets))
                .collect()
        })
        .collect();

    // Input vectors (words and n-gram buckets) start uniform in [-1/dim,
    // 1/dim]; context vectors start at zero.
    let dim = cfg.dim;
    let mut rng = seeded(cfg.seed, "init");
    let limit = 1.0 / dim as f64;
    let mut word_in: Vec<S> = (0..stats.vocab_size() * dim)
        .map(|_| crate::rng::uniform(&mut rng, -limit, limit))
        .collect();
    let mut bucket_in: Vec<S> = (0..cfg.buckets * dim)
        .map(|_| crate::rng::uniform(&mut rng, -limit, limit))
        .collect();
    let mut output: Vec<S> = vec![S::zero(); stats.vocab_size() * dim];

    let total_scheduled = (cfg.epochs as u64) * stats.retained_tokens;
    let processed = AtomicU64::new(0);
    let mut log = SkipgramLog::default();

    for epoch in 0..cfg.epochs {
        let words_buf = SharedBuf::new(&mut word_in);
        let buckets_buf = SharedBuf::new(&mut bucket_in);
        let output_buf = SharedBuf::new(&mut output);
        let outcomes: Vec<WorkerOutcome> = if cfg.threads == 1 {
            vec![run_worker(
                0,
                1,
                epoch,
                cfg,
                &stats,
                &encoded,
                &word_buckets,
                words_buf,
                buckets_buf,
                output_buf,
                &processed,
                total_scheduled,
            )]
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = (0..cfg.threads)
                    .map(|w| {
                        let processed = &processed;
                        let stats = &stats;
                        let encoded = &encoded;
                        let word_buckets = &word_buckets;
                        scope.spawn(move || {
                            run_worker(
                                w,
                                cfg.threads,
                                epoch,
                                cfg,
                                stats,
                                encoded,
                                word_buckets,
                                words_buf,
                                buckets_buf,
                                output_buf,
                                processed,
                                total_scheduled,
                            )
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("worker"))
                    .collect()
            })
        };
        let loss_sum: f64 = outcomes.iter().map(|o| o.loss_sum).sum();
        let pairs: u64 = outcomes.iter().map(|o| o.pairs).sum();
        log.epoch_mean_loss.push(if pairs > 0 {
            loss_sum / pairs as f64
        } else {
            0.0
        });
        log.epoch_pairs.push(pairs);
    }

    // Compose final word vectors: (own vector + n-gram bucket vectors),
    // normalized by component count.
    let mut entries: Vec<(String, Vec<S>)> = Vec::with_capacity(stats.vocab_size());
    for i in 0..stats.vocab_size() {
        let mut v: Vec<S> = word_in[i * dim..(i + 1) * dim].to_vec();
        for &b in &word_buckets[i] {
            let row = &bucket_in[b as usize * dim..(b as usize + 1) * dim];
            for (a, &x) in v.iter_mut().zip(row.iter()) {
                *a += x;
            }
        }
        let inv = S::from_f64(1.0 / (1 + word_buckets[i].len()) as f64);
        for a in v.iter_mut() {
            *a *= inv;
        }
        entries.push((stats.word(i).to_string(), v));
    }
    let mut table = EmbeddingTable::from_entries(entries)?;

    // Attach every bucket reachable from the vocabulary.
    let mut store = SubwordStore::new(cfg.buckets, cfg.min_n, cfg.max_n, dim);
    let mut seen: Vec<u32> = word_buckets.iter().flatten().copied().collect();
    seen.sort_unstable();
    seen.dedup();
    for b in seen {
        store.insert(b, &bucket_in[b as usize * dim..(b as usize + 1) * dim]);
    }
    table.attach_subwords(store);
    Ok((table, log))
}

/// Trains from a one-sentence-per-line corpus file. The file is read into
/// memory once; see the README for corpus-size guidance.
pub fn train_corpus<S: Scalar>(
    path: &Path,
    cfg: &TrainerConfig,
) -> Result<(EmbeddingTable<S>, SkipgramLog)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(path, e))?;
    train_sentences(&lines, cfg)
}

/// Writes a trained table (with its bucket lines) to `path`; the result is
/// loadable by the embedding loader.
pub fn export_table<S: Scalar>(table: &EmbeddingTable<S>, path: &Path) -> Result<()> {
    table.save(path)
}

#[allow(clippy::too_many_arguments)]
fn run_worker<S: Scalar>(
    worker: usize,
    stride: usize,
    epoch: usize,
    cfg: &TrainerConfig,
    stats: &CorpusStats,
    encoded: &[Vec<u32>],
    word_buckets: &[Vec<u32>],
    words_buf: SharedBuf<S>,
    buckets_buf: SharedBuf<S>,
    output_buf: SharedBuf<S>,
    processed: &AtomicU64,
    total_scheduled: u64,
) -> WorkerOutcome {
    let dim = cfg.dim;
    let label = |name: &str| format!("{name}-w{worker}-e{epoch}");
    let mut subsample_rng = seeded(cfg.seed, &label("subsample"));
    let mut window_rng = seeded(cfg.seed, &label("window"));
    let mut negative_rng = seeded(cfg.seed, &label("negative"));

    let mut h: Vec<S> = vec![S::zero(); dim];
    let mut grad_h: Vec<S> = vec![S::zero(); dim];
    let mut kept: Vec<u32> = Vec::new();
    let mut loss_sum = 0.0f64;
    let mut pairs = 0u64;

    let mut sentence_idx = worker;
    while sentence_idx < encoded.len() {
        let ids = &encoded[sentence_idx];
        sentence_idx += stride;
        if ids.is_empty() {
            continue;
        }
        let done = processed.fetch_add(ids.len() as u64, Ordering::Relaxed);
        let progress = 1.0 - done as f64 / total_scheduled as f64;
        let lr = cfg.initial_lr * progress.max(1e-4);

        kept.clear();
        for &id in ids {
            if stats.keep_probability(id as usize, cfg.subsample_t) > subsample_rng.gen::<f64>() {
                kept.push(id);
            }
        }
        if kept.len() < 2 {
            continue;
        }

        for center_pos in 0..kept.len() {
            let center = kept[center_pos] as usize;
            let eff = window_rng.gen_range(1..=cfg.window);
            let lo = center_pos.saturating_sub(eff);
            let hi = (center_pos + eff).min(kept.len() - 1);

            // Compose the input representation of the center word.
            let grams = &word_buckets[center];
            let inv = S::from_f64(1.0 / (1 + grams.len()) as f64);
            let w_row = unsafe { words_buf.row(center, dim) };
            h.copy_from_slice(w_row);
            for &b in grams {
                let b_row = unsafe { buckets_buf.row(b as usize, dim) };
                for d in 0..dim {
                    h[d] += b_row[d];
                }
            }
            for v in h.iter_mut() {
                *v *= inv;
            }

            for ctx_pos in lo..=hi {
                if ctx_pos == center_pos {
                    continue;
                }
                let context = kept[ctx_pos] as usize;
                for g in grad_h.iter_mut() {
                    *g = S::zero();
                }
                let mut pair_loss = 0.0f64;
                for neg in 0..=cfg.negatives {
                    let (target, positive) = if neg == 0 {
                        (context, true)
                    } else {
                        let mut cand = stats.sample_negative(&mut negative_rng);
                        if stats.vocab_size() > 1 {
                            let mut retries = 0;
                            while cand == context && retries < 32 {
                                cand = stats.sample_negative(&mut negative_rng);
                                retries += 1;
                            }
                            if cand == context {
                                continue;
                            }
                        } else {
                            continue;
                        }
                        (cand, false)
                    };
                    let u_row = unsafe { output_buf.row(target, dim) };
                    let mut dot = S::zero();
                    for d in 0..dim {
                        dot += u_row[d] * h[d];
                    }
                    let s = S::one() / (S::one() + (-dot).exp());
                    let p = if positive { s } else { S::one() - s };
                    pair_loss -= p.max(S::min_positive_value()).to_f64_lossy().ln();
                    let label_val = if positive { S::one() } else { S::zero() };
                    let g = (label_val - s) * S::from_f64(lr);
                    for d in 0..dim {
                        grad_h[d] += g * u_row[d];
                        u_row[d] += g * h[d];
                    }
                }
                // Distribute the input gradient over the word and its
                // n-gram buckets.
                let w_row = unsafe { words_buf.row(center, dim) };
                for d in 0..dim {
                    w_row[d] += grad_h[d] * inv;
                }
                for &b in grams {
                    let b_row = unsafe { buckets_buf.row(b as usize, dim) };
                    for d in 0..dim {
                        b_row[d] += grad_h[d] * inv;
                    }
                }
                loss_sum += pair_loss;
                pairs += 1;
            }
        }
    }
    WorkerOutcome { loss_sum, pairs }
}
