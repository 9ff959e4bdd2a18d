//! Pre-trained embedding tables and the frozen dual-embedding input layer.
//!
//! Word vectors load from word2vec text files (one `word v1 .. vdim` line per
//! entry, optional `count dim` header). Domain tables may carry hashed
//! subword n-gram vectors on `bucket:<index>` lines, used to compose vectors
//! for out-of-vocabulary words; a `bucket:meta <buckets> <min_n> <max_n>`
//! line records the hashing scheme. Tables are immutable after load.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;
use crate::tensor::SeqTensor;

/// Default subword hashing scheme: character 3- to 6-grams into 2M buckets.
pub const DEFAULT_BUCKETS: usize = 2_000_000;
pub const DEFAULT_MIN_N: usize = 3;
pub const DEFAULT_MAX_N: usize = 6;

/// Hashed subword n-gram vectors attached to a table. Only buckets that were
/// actually trained are stored; absent buckets contribute zero vectors.
#[derive(Debug, Clone)]
pub struct SubwordStore<S> {
    pub bucket_count: usize,
    pub min_n: usize,
    pub max_n: usize,
    index: HashMap<u32, usize>,
    vectors: Vec<S>,
    dim: usize,
}

impl<S: Scalar> SubwordStore<S> {
    pub fn new(bucket_count: usize, min_n: usize, max_n: usize, dim: usize) -> Self {
        SubwordStore {
            bucket_count,
            min_n,
            max_n,
            index: HashMap::new(),
            vectors: Vec::new(),
            dim,
        }
    }

    pub fn insert(&mut self, bucket: u32, vector: &[S]) {
        debug_assert_eq!(vector.len(), self.dim);
        let row = self.vectors.len() / self.dim;
        self.index.insert(bucket, row);
        self.vectors.extend_from_slice(vector);
    }

    pub fn get(&self, bucket: u32) -> Option<&[S]> {
        self.index
            .get(&bucket)
            .map(|&row| &self.vectors[row * self.dim..(row + 1) * self.dim])
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }
}

/// FNV-1a 32-bit hash, the bucket hash for subword n-grams.
pub fn fnv1a(bytes: &[u8]) -> u32 {
    let mut h: u32 = 0x811c_9dc5;
    for &b in bytes {
        h ^= u32::from(b);
        h = h.wrapping_mul(0x0100_0193);
    }
    h
}

/// Character n-grams of `word` wrapped in boundary markers `<` and `>`.
pub fn char_ngrams(word: &str, min_n: usize, max_n: usize) -> Vec<String> {
    let wrapped: Vec<char> = format!("<{word}>").chars().collect();
    let mut grams = Vec::new();
    for start in 0..wrapped.len() {
        for len in min_n..=max_n {
            if start + len > wrapped.len() {
                break;
            }
            grams.push(wrapped[start..start + len].iter().collect());
        }
    }
    grams
}

/// Bucket index of one n-gram.
pub fn bucket_of(ngram: &str, bucket_count: usize) -> u32 {
    (fnv1a(ngram.as_bytes()) as usize % bucket_count) as u32
}

/// Provenance of a loaded table: file path, content hash of the file bytes,
/// and the vocabulary filter the load applied (if any).
#[derive(Debug, Clone)]
pub struct TableSource {
    pub path: PathBuf,
    pub file_sha256: [u8; 32],
    pub retained_vocab: Option<Vec<String>>,
}

/// An immutable vocabulary -> dense vector table.
#[derive(Debug, Clone)]
pub struct EmbeddingTable<S> {
    words: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Vec<S>,
    dim: usize,
    subwords: Option<SubwordStore<S>>,
    source: Option<TableSource>,
}

/// Options for [`load_table_with`]: restrict the vocabulary to words in
/// `vocab_filter` and/or cap the number of word rows loaded. Large general
/// embedding files only need the rows the task corpus can ever look up.
#[derive(Debug, Default, Clone)]
pub struct LoadOptions<'a> {
    pub vocab_filter: Option<&'a BTreeSet<String>>,
    pub max_words: Option<usize>,
}

impl<S: Scalar> EmbeddingTable<S> {
    /// Builds a table from in-memory entries (mainly for tests and synthetic
    /// data). Duplicate words keep the first occurrence.
    pub fn from_entries(entries: Vec<(String, Vec<S>)>) -> Result<Self> {
        let mut it = entries.into_iter();
        let (first_word, first_vec) = it
            .next()
            .ok_or_else(|| Error::data("embedding table needs at least one entry"))?;
        let dim = first_vec.len();
        if dim == 0 {
            return Err(Error::data("embedding dimension must be > 0"));
        }
        let mut table = EmbeddingTable {
            words: Vec::new(),
            index: HashMap::new(),
            vectors: Vec::new(),
            dim,
            subwords: None,
            source: None,
        };
        table.push_word(first_word, &first_vec)?;
        for (word, vec) in it {
            if table.index.contains_key(&word) {
                continue;
            }
            table.push_word(word, &vec)?;
        }
        Ok(table)
    }

    /// Random table over `words` with values uniform in [-1, 1].
    pub fn random(words: &[&str], dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let entries = words
            .iter()
            .map(|w| {
                let v: Vec<S> = (0..dim).map(|_| rng::uniform(rng, -1.0, 1.0)).collect();
                (w.to_string(), v)
            })
            .collect();
        Self::from_entries(entries)
    }

    fn push_word(&mut self, word: String, vector: &[S]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::data(format!(
                "vector for `{word}` has {} values, table dim is {}",
                vector.len(),
                self.dim
            )));
        }
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.vectors.extend_from_slice(vector);
        Ok(())
    }

    pub fn attach_subwords(&mut self, subwords: SubwordStore<S>) {
        debug_assert_eq!(subwords.dim, self.dim);
        self.subwords = Some(subwords);
    }

    pub(crate) fn set_source(&mut self, source: TableSource) {
        self.source = Some(source);
    }

    pub fn source(&self) -> Option<&TableSource> {
        self.source.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn subwords(&self) -> Option<&SubwordStore<S>> {
        self.subwords.as_ref()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn row(&self, idx: usize) -> &[S] {
        &self.vectors[idx * self.dim..(idx + 1) * self.dim]
    }

    /// Exact-match lookup.
    pub fn vector(&self, word: &str) -> Option<&[S]> {
        self.index.get(word).map(|&i| self.row(i))
    }

    /// Vector for an out-of-vocabulary word: the mean of the bucket vectors
    /// of all its character n-grams, or the zero vector when the table has
    /// no subword store.
    pub fn oov_vector(&self, word: &str) -> Vec<S> {
        let Some(sub) = &self.subwords else {
            return vec![S::zero(); self.dim];
        };
        let grams = char_ngrams(word, sub.min_n, sub.max_n);
        let mut acc = vec![S::zero(); self.dim];
        if grams.is_empty() {
            return acc;
        }
        for g in &grams {
            if let Some(v) = sub.get(bucket_of(g, sub.bucket_count)) {
                for (a, &x) in acc.iter_mut().zip(v.iter()) {
                    *a += x;
                }
            }
        }
        let inv = S::from_f64(1.0 / grams.len() as f64);
        for a in acc.iter_mut() {
            *a *= inv;
        }
        acc
    }

    /// Lookup with the fallback chain: exact match, lowercase match, OOV
    /// composition.
    pub fn lookup_word(&self, word: &str) -> Vec<S> {
        if let Some(v) = self.vector(word) {
            return v.to_vec();
        }
        let lower = word.to_lowercase();
        if lower != word {
            if let Some(v) = self.vector(&lower) {
                return v.to_vec();
            }
        }
        self.oov_vector(word)
    }

    /// Digest of the table contents (vocab, vectors, subwords). Training
    /// must never change it: embeddings are frozen.
    pub fn digest(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update((self.dim as u64).to_le_bytes());
        hasher.update((self.words.len() as u64).to_le_bytes());
        for (i, word) in self.words.iter().enumerate() {
            hasher.update(word.as_bytes());
            hasher.update([0u8]);
            for &v in self.row(i) {
                hasher.update(v.to_bits_u64().to_le_bytes());
            }
        }
        if let Some(sub) = &self.subwords {
            hasher.update((sub.bucket_count as u64).to_le_bytes());
            hasher.update((sub.min_n as u64).to_le_bytes());
            hasher.update((sub.max_n as u64).to_le_bytes());
            let mut buckets: Vec<u32> = sub.index.keys().copied().collect();
            buckets.sort_unstable();
            for b in buckets {
                hasher.update(b.to_le_bytes());
                for &v in sub.get(b).expect("indexed bucket") {
                    hasher.update(v.to_bits_u64().to_le_bytes());
                }
            }
        }
        hasher.finalize().into()
    }

    /// Writes the table in word2vec text format: `count dim` header, one
    /// word line per entry, then `bucket:meta` and `bucket:<index>` lines if
    /// a subword store is attached.
    pub fn save(&self, path: &Path) -> Result<()> {
        if self.words.is_empty() {
            return Err(Error::data("refusing to save an empty embedding table"));
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e| Error::io(path, e);
        writeln!(w, "{} {}", self.words.len(), self.dim).map_err(io_err)?;
        for (i, word) in self.words.iter().enumerate() {
            write!(w, "{word}").map_err(io_err)?;
            for &v in self.row(i) {
                write!(w, " {v}").map_err(io_err)?;
            }
            writeln!(w).map_err(io_err)?;
        }
        if let Some(sub) = &self.subwords {
            writeln!(
                w,
                "bucket:meta {} {} {}",
                sub.bucket_count, sub.min_n, sub.max_n
            )
            .map_err(io_err)?;
            let mut buckets: Vec<u32> = sub.index.keys().copied().collect();
            buckets.sort_unstable();
            for b in buckets {
                write!(w, "bucket:{b}").map_err(io_err)?;
                for &v in sub.get(b).expect("indexed bucket") {
                    write!(w, " {v}").map_err(io_err)?;
                }
                writeln!(w).map_err(io_err)?;
            }
        }
        w.flush().map_err(io_err)?;
        Ok(())
    }
}

/// Loads a word2vec text file.
pub fn load_table<S: Scalar>(path: &Path) -> Result<EmbeddingTable<S>> {
    load_table_with(path, LoadOptions::default())
}

/// Loads a word2vec text file, optionally pruning the vocabulary.
pub fn load_table_with<S: Scalar>(path: &Path, opts: LoadOptions<'_>) -> Result<EmbeddingTable<S>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let file_sha256: [u8; 32] = Sha256::digest(&bytes).into();
    let reader = BufReader::new(bytes.as_slice());

    let mut dim: Option<usize> = None;
    let mut header_dim: Option<usize> = None;
    let mut words: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut vectors: Vec<S> = Vec::new();
    let mut bucket_meta: Option<(usize, usize, usize)> = None;
    let mut bucket_rows: Vec<(u32, Vec<S>)> = Vec::new();
    let mut saw_data = false;

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        let key = parts.next().expect("nonempty line has a first token");
        let rest: Vec<&str> = parts.collect();

        // Optional numeric header: `count dim`.
        if !saw_data && key.parse::<u64>().is_ok() && rest.len() == 1 {
            if let Ok(d) = rest[0].parse::<usize>() {
                header_dim = Some(d);
                continue;
            }
        }
        saw_data = true;

        if key == "bucket:meta" {
            if rest.len() != 3 {
                return Err(Error::format(
                    lineno,
                    "bucket:meta needs `buckets min_n max_n`",
                ));
            }
            let nums: Vec<usize> = rest
                .iter()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::format(lineno, format!("bad bucket:meta value: {e}")))?;
            bucket_meta = Some((nums[0], nums[1], nums[2]));
            continue;
        }

        let line_dim = rest.len();
        match dim {
            None => {
                if line_dim == 0 {
                    return Err(Error::format(lineno, "entry has no values"));
                }
                if let Some(hd) = header_dim {
                    if hd != line_dim {
                        return Err(Error::format(
                            lineno,
                            format!("line has {line_dim} values but header declares dim {hd}"),
                        ));
                    }
                }
                dim = Some(line_dim);
            }
            Some(d) if d != line_dim => {
                return Err(Error::format(
                    lineno,
                    format!("line has {line_dim} values but table dim is {d}"),
                ));
            }
            _ => {}
        }

        let parse_values = |rest: &[&str]| -> Result<Vec<S>> {
            rest.iter()
                .map(|t| {
                    t.parse::<f64>()
                        .map(S::from_f64)
                        .map_err(|e| Error::format(lineno, format!("bad number `{t}`: {e}")))
                })
                .collect()
        };

        if let Some(idx_str) = key.strip_prefix("bucket:") {
            let bucket: u32 = idx_str
                .parse()
                .map_err(|e| Error::format(lineno, format!("bad bucket index `{idx_str}`: {e}")))?;
            bucket_rows.push((bucket, parse_values(&rest)?));
            continue;
        }

        if index.contains_key(key) {
            continue; // duplicate words keep the first occurrence
        }
        if let Some(filter) = opts.vocab_filter {
            if !filter.contains(key) {
                continue;
            }
        }
        if let Some(cap) = opts.max_words {
            if words.len() >= cap {
                continue;
            }
        }
        let values = parse_values(&rest)?;
        index.insert(key.to_string(), words.len());
        words.push(key.to_string());
        vectors.extend_from_slice(&values);
    }

    let dim = match dim.or(header_dim) {
        Some(d) => d,
        None => {
            return Err(Error::format(
                0,
                format!("{}: empty embedding file", path.display()),
            ))
        }
    };

    let mut table = EmbeddingTable {
        words,
        index,
        vectors,
        dim,
        subwords: None,
        source: None,
    };
    if !bucket_rows.is_empty() || bucket_meta.is_some() {
        let (buckets, min_n, max_n) =
            bucket_meta.unwrap_or((DEFAULT_BUCKETS, DEFAULT_MIN_N, DEFAULT_MAX_N));
        let mut store = SubwordStore::new(buckets, min_n, max_n, dim);
        for (bucket, values) in bucket_rows {
            store.insert(bucket, &values);
        }
        table.subwords = Some(store);
    }
    table.source = Some(TableSource {
        path: path.to_path_buf(),
        file_sha256,
        retained_vocab: opts
            .vocab_filter
            .map(|_| table.words.clone())
            .or_else(|| opts.max_words.map(|_| table.words.clone())),
    });
    log::info!(
        "loaded embedding table {}: {} words, dim {}, {} subword buckets",
        path.display(),
        table.vocab_size(),
        table.dim,
        table.subwords.as_ref().map_or(0, |s| s.len()),
    );
    Ok(table)
}

/// Which embedding tables feed the model input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbMode {
    /// General ++ domain concatenation.
    Dual,
    GeneralOnly,
    DomainOnly,
}

/// The frozen input layer: general and domain tables plus the concatenation
/// mode. Lookup order in dual mode is always `[general | domain]`.
#[derive(Debug, Clone)]
pub struct DualEmbedder<S> {
    pub general: EmbeddingTable<S>,
    pub domain: EmbeddingTable<S>,
    pub mode: EmbMode,
}

impl<S: Scalar> DualEmbedder<S> {
    pub fn new(general: EmbeddingTable<S>, domain: EmbeddingTable<S>, mode: EmbMode) -> Arc<Self> {
        Arc::new(DualEmbedder {
            general,
            domain,
            mode,
        })
    }

    pub fn output_dim(&self) -> usize {
        match self.mode {
            EmbMode::Dual => self.general.dim() + self.domain.dim(),
            EmbMode::GeneralOnly => self.general.dim(),
            EmbMode::DomainOnly => self.domain.dim(),
        }
    }

    /// One row per token: the concatenated (or single-table) representation.
    pub fn lookup(&self, tokens: &[String]) -> Result<SeqTensor<S>> {
        if tokens.is_empty() {
            return Err(Error::data("cannot embed an empty token sequence"));
        }
        let d = self.output_dim();
        let mut out = SeqTensor::zeros(tokens.len(), d);
        for (i, token) in tokens.iter().enumerate() {
            let row = out.row_mut(i);
            match self.mode {
                EmbMode::Dual => {
                    let g = self.general.lookup_word(token);
                    let dm = self.domain.lookup_word(token);
                    row[..g.len()].copy_from_slice(&g);
                    row[g.len()..].copy_from_slice(&dm);
                }
                EmbMode::GeneralOnly => row.copy_from_slice(&self.general.lookup_word(token)),
                EmbMode::DomainOnly => row.copy_from_slice(&self.domain.lookup_word(token)),
            }
        }
        Ok(out)
    }

    /// Combined digest of both tables, for the frozen-embedding invariant.
    pub fn digest(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(self.general.digest());
        hasher.update(self.domain.digest());
        hasher.finalize().into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn write_file(dir: &tempfile::TempDir, name: &str, contents: &str) -> PathBuf {
        let path = dir.path().join(name);
        std::fs::write(&path, contents).unwrap();
        path
    }

    #[test]
    fn load_three_words_dim_four() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "t.vec",
            "alpha 1 2 3 4\nbeta 0.5 -0.5 0 1\ngamma -1 -2 -3 -4\n",
        );
        let t: EmbeddingTable<f32> = load_table(&path).unwrap();
        assert_eq!(t.vocab_size(), 3);
        assert_eq!(t.dim(), 4);
        assert_eq!(t.vector("beta").unwrap(), &[0.5, -0.5, 0.0, 1.0]);
    }

    #[test]
    fn load_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "t.vec", "2 3\na 1 2 3\nb 4 5 6\n");
        let t: EmbeddingTable<f64> = load_table(&path).unwrap();
        assert_eq!(t.vocab_size(), 2);
        assert_eq!(t.dim(), 3);
    }

    #[test]
    fn inconsistent_dim_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "t.vec", "a 1 2 3\nb 4 5\n");
        let err = load_table::<f32>(&path).unwrap_err();
        match err {
            Error::Format { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "t.vec", "");
        assert!(matches!(
            load_table::<f32>(&path),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn duplicate_words_keep_first() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "t.vec", "a 1 1\na 2 2\n");
        let t: EmbeddingTable<f32> = load_table(&path).unwrap();
        assert_eq!(t.vocab_size(), 1);
        assert_eq!(t.vector("a").unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn vocab_filter_prunes_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "t.vec", "a 1 1\nb 2 2\nc 3 3\n");
        let filter: BTreeSet<String> = ["a", "c"].iter().map(|s| s.to_string()).collect();
        let t: EmbeddingTable<f32> = load_table_with(
            &path,
            LoadOptions {
                vocab_filter: Some(&filter),
                max_words: None,
            },
        )
        .unwrap();
        assert_eq!(t.vocab_size(), 2);
        assert!(t.vector("b").is_none());
        assert_eq!(
            t.source().unwrap().retained_vocab.as_deref().unwrap(),
            &["a".to_string(), "c".to_string()]
        );
    }

    #[test]
    fn dual_lookup_concatenates_general_first() {
        let general =
            EmbeddingTable::from_entries(vec![("speed".into(), vec![1.0f32, 2.0, 3.0])]).unwrap();
        let domain = EmbeddingTable::from_entries(vec![("speed".into(), vec![9.0f32])]).unwrap();
        let emb = DualEmbedder::new(general, domain, EmbMode::Dual);
        assert_eq!(emb.output_dim(), 4);
        let out = emb.lookup(&["speed".to_string()]).unwrap();
        assert_eq!(out.row(0), &[1.0, 2.0, 3.0, 9.0]);
    }

    #[test]
    fn general_only_ignores_domain_dim() {
        let general = EmbeddingTable::from_entries(vec![("a".into(), vec![1.0f32, 2.0])]).unwrap();
        let domain = EmbeddingTable::from_entries(vec![("a".into(), vec![5.0f32; 7])]).unwrap();
        let emb = DualEmbedder::new(general, domain, EmbMode::GeneralOnly);
        let out = emb.lookup(&["a".to_string()]).unwrap();
        assert_eq!(out.cols(), 2);
        assert_eq!(out.row(0), &[1.0, 2.0]);
    }

    #[test]
    fn lookup_row_count_matches_tokens() {
        let general = EmbeddingTable::from_entries(vec![("a".into(), vec![1.0f32])]).unwrap();
        let domain = EmbeddingTable::from_entries(vec![("a".into(), vec![2.0f32])]).unwrap();
        let emb = DualEmbedder::new(general, domain, EmbMode::Dual);
        let tokens: Vec<String> = ["a", "b", "a", "zzz"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let out = emb.lookup(&tokens).unwrap();
        assert_eq!(out.rows(), 4);
    }

    #[test]
    fn lookup_empty_tokens_is_error() {
        let general = EmbeddingTable::from_entries(vec![("a".into(), vec![1.0f32])]).unwrap();
        let domain = EmbeddingTable::from_entries(vec![("a".into(), vec![2.0f32])]).unwrap();
        let emb = DualEmbedder::new(general, domain, EmbMode::Dual);
        assert!(emb.lookup(&[]).is_err());
    }

    #[test]
    fn oov_without_subwords_is_zero() {
        let t = EmbeddingTable::from_entries(vec![("a".into(), vec![1.0f32; 300])]).unwrap();
        let v = t.oov_vector("never-seen");
        assert_eq!(v.len(), 300);
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn oov_single_bucket_returns_bucket_vector() {
        // bucket_count = 1 forces every n-gram into bucket 0, so the mean of
        // identical vectors is that vector.
        let mut t = EmbeddingTable::from_entries(vec![("a".into(), vec![0.0f32, 0.0])]).unwrap();
        let mut store = SubwordStore::new(1, 3, 6, 2);
        store.insert(0, &[0.25, -0.75]);
        t.attach_subwords(store);
        assert_eq!(t.oov_vector("anything"), vec![0.25, -0.75]);
    }

    #[test]
    fn case_fallback_uses_lowercase_row() {
        let t = EmbeddingTable::from_entries(vec![("speed".into(), vec![3.0f32])]).unwrap();
        assert_eq!(t.lookup_word("Speed"), vec![3.0]);
        assert_eq!(t.lookup_word("speed"), vec![3.0]);
        assert_eq!(t.lookup_word("SPEED"), vec![3.0]);
    }

    #[test]
    fn save_load_round_trip_exact_for_f32() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = seeded(3, "emb-roundtrip");
        let t = EmbeddingTable::<f32>::random(&["one", "two", "three"], 5, &mut rng).unwrap();
        let path = dir.path().join("rt.vec");
        t.save(&path).unwrap();
        let contents = std::fs::read_to_string(&path).unwrap();
        assert!(contents.starts_with("3 5\n"), "header line expected");
        assert_eq!(contents.lines().count(), 4, "header + one line per word");
        let loaded: EmbeddingTable<f32> = load_table(&path).unwrap();
        assert_eq!(loaded.vocab_size(), 3);
        for w in ["one", "two", "three"] {
            assert_eq!(loaded.vector(w).unwrap(), t.vector(w).unwrap());
        }
    }

    #[test]
    fn save_load_round_trip_with_buckets() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = EmbeddingTable::from_entries(vec![("w".into(), vec![1.0f32, 2.0])]).unwrap();
        let mut store = SubwordStore::new(1000, 3, 6, 2);
        store.insert(17, &[0.5, -0.5]);
        store.insert(901, &[1.5, 2.5]);
        t.attach_subwords(store);
        let path = dir.path().join("b.vec");
        t.save(&path).unwrap();
        let loaded: EmbeddingTable<f32> = load_table(&path).unwrap();
        let sub = loaded.subwords().unwrap();
        assert_eq!(sub.bucket_count, 1000);
        assert_eq!(sub.min_n, 3);
        assert_eq!(sub.max_n, 6);
        assert_eq!(sub.get(17).unwrap(), &[0.5, -0.5]);
        assert_eq!(sub.get(901).unwrap(), &[1.5, 2.5]);
        assert!(sub.get(3).is_none());
    }

    #[test]
    fn digest_changes_with_contents() {
        let a = EmbeddingTable::from_entries(vec![("w".into(), vec![1.0f32])]).unwrap();
        let b = EmbeddingTable::from_entries(vec![("w".into(), vec![2.0f32])]).unwrap();
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest(), a.digest());
    }

    #[test]
    fn char_ngrams_cover_boundary_markers() {
        let grams = char_ngrams("ab", 3, 4);
        // "<ab>" has 4 chars: 3-grams "<ab", "ab>", 4-gram "<ab>".
        assert!(grams.contains(&"<ab".to_string()));
        assert!(grams.contains(&"ab>".to_string()));
        assert!(grams.contains(&"<ab>".to_string()));
        assert_eq!(grams.len(), 3);
    }
}
