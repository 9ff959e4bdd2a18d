//! Model persistence: a self-describing binary container with the config,
//! all parameter tensors in little-endian layout, and references to the
//! embedding files by path and content hash (tables are never duplicated
//! into the model file).
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "DECNNv1\n" | u8 scalar width (4|8)
//! u32 config length | config JSON
//! 2 x embedding ref:
//!     u32 path length | path bytes | 32-byte file sha256
//!     u8 has_filter | [u32 word count | (u32 len | word bytes)*]
//! u32 tensor count | per tensor:
//!     u32 name length | name | u32 rank | u64 dims* | values
//! 32-byte sha256 of everything above
//! ```

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::embeddings::{load_table_with, DualEmbedder, EmbeddingTable, LoadOptions, TableSource};
use crate::error::{Error, Result};
use crate::model::{DeCnn, ModelConfig};
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"DECNNv1\n";

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }

    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.bytes(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Integrity("model file truncated".into()));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn str(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|e| Error::Integrity(format!("bad utf-8 in model file: {e}")))
    }
}

fn write_embedding_ref<S: Scalar>(w: &mut Writer, table: &EmbeddingTable<S>) -> Result<()> {
    let source = table.source().ok_or_else(|| {
        Error::parameter(
            "model",
            "embeddings lack file provenance; load tables from files before saving a model",
        )
    })?;
    w.str(&source.path.to_string_lossy());
    w.bytes(&source.file_sha256);
    match &source.retained_vocab {
        Some(words) => {
            w.u8(1);
            w.u32(words.len() as u32);
            for word in words {
                w.str(word);
            }
        }
        None => w.u8(0),
    }
    Ok(())
}

struct EmbeddingRef {
    path: PathBuf,
    file_sha256: [u8; 32],
    retained_vocab: Option<Vec<String>>,
}

fn read_embedding_ref(r: &mut Reader<'_>) -> Result<EmbeddingRef> {
    let path = PathBuf::from(r.str()?);
    let file_sha256: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
    let retained_vocab = if r.u8()? == 1 {
        let count = r.u32()? as usize;
        let mut words = Vec::with_capacity(count);
        for _ in 0..count {
            words.push(r.str()?);
        }
        Some(words)
    } else {
        None
    };
    Ok(EmbeddingRef {
        path,
        file_sha256,
        retained_vocab,
    })
}

fn write_tensor<S: Scalar>(w: &mut Writer, name: &str, dims: &[usize], values: &[S]) {
    debug_assert_eq!(dims.iter().product::<usize>(), values.len());
    w.str(name);
    w.u32(dims.len() as u32);
    for &d in dims {
        w.u64(d as u64);
    }
    for &v in values {
        v.write_le(&mut w.buf);
    }
}

/// Serializes a model to `path`. The embedder must have been loaded from
/// files (so it can be referenced by path + hash).
pub fn save_model<S: Scalar>(model: &DeCnn<S>, path: &Path) -> Result<()> {
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u8(S::BYTE_WIDTH as u8);

    let config_json = serde_json::to_string(&model.config)
        .map_err(|e| Error::Data(format!("config serialization: {e}")))?;
    w.str(&config_json);

    let embedder = model.embedder();
    write_embedding_ref(&mut w, &embedder.general)?;
    write_embedding_ref(&mut w, &embedder.domain)?;

    let tensors = model.named_tensors();
    w.u32(tensors.len() as u32);
    for (name, dims, values) in tensors {
        write_tensor(&mut w, &name, &dims, values);
    }

    let digest: [u8; 32] = Sha256::digest(&w.buf).into();
    w.bytes(&digest);
    std::fs::write(path, &w.buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn load_embedding_table<S: Scalar>(eref: &EmbeddingRef) -> Result<EmbeddingTable<S>> {
    let bytes = std::fs::read(&eref.path).map_err(|e| Error::io(&eref.path, e))?;
    let actual: [u8; 32] = Sha256::digest(&bytes).into();
    if actual != eref.file_sha256 {
        return Err(Error::Integrity(format!(
            "embedding file {} does not match the hash recorded in the model",
            eref.path.display()
        )));
    }
    match &eref.retained_vocab {
        Some(words) => {
            let filter: std::collections::BTreeSet<String> = words.iter().cloned().collect();
            let table = load_table_with(
                &eref.path,
                LoadOptions {
                    vocab_filter: Some(&filter),
                    max_words: None,
                },
            )?;
            if table.words() != words.as_slice() {
                return Err(Error::Integrity(format!(
                    "embedding file {} no longer yields the recorded vocabulary",
                    eref.path.display()
                )));
            }
            Ok(table)
        }
        None => load_table_with(&eref.path, LoadOptions::default()),
    }
}

/// Loads a model saved by [`save_model`]. Re-reads the referenced embedding
/// files and verifies their content hashes.
pub fn load_model<S: Scalar>(path: &Path) -> Result<DeCnn<S>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < MAGIC.len() + 32 {
        return Err(Error::Integrity("model file too short".into()));
    }
    let (payload, trailer) = bytes.split_at(bytes.len() - 32);
    let digest: [u8; 32] = Sha256::digest(payload).into();
    if digest != trailer {
        return Err(Error::Integrity(
            "model file checksum mismatch (file corrupt or tampered)".into(),
        ));
    }

    let mut r = Reader::new(payload);
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Integrity("not a model file (bad magic)".into()));
    }
    let width = r.u8()? as usize;
    if width != S::BYTE_WIDTH {
        return Err(Error::Integrity(format!(
            "model stores {width}-byte scalars but {} bytes were requested",
            S::BYTE_WIDTH
        )));
    }
    let config: ModelConfig = serde_json::from_str(&r.str()?)
        .map_err(|e| Error::Integrity(format!("bad config in model file: {e}")))?;

    let general_ref = read_embedding_ref(&mut r)?;
    let domain_ref = read_embedding_ref(&mut r)?;
    let mut general: EmbeddingTable<S> = load_embedding_table(&general_ref)?;
    let mut domain: EmbeddingTable<S> = load_embedding_table(&domain_ref)?;
    general.set_source(TableSource {
        path: general_ref.path,
        file_sha256: general_ref.file_sha256,
        retained_vocab: general_ref.retained_vocab,
    });
    domain.set_source(TableSource {
        path: domain_ref.path,
        file_sha256: domain_ref.file_sha256,
        retained_vocab: domain_ref.retained_vocab,
    });
    let embedder = DualEmbedder::new(general, domain, config.emb_mode);
    let mut model = DeCnn::init(config, embedder)?;
    let tensor_count = r.u32()? as usize;
    {
        let mut expected = model.named_tensors_mut();
        if tensor_count != expected.len() {
            return Err(Error::Integrity(format!(
                "model file has {tensor_count} tensors, architecture expects {}",
                expected.len()
            )));
        }
        for _ in 0..tensor_count {
            let name = r.str()?;
            let rank = r.u32()? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u64()? as usize);
            }
            let len: usize = dims.iter().product();
            let values = r.take(len * S::BYTE_WIDTH)?;
            let target = expected
                .iter_mut()
                .find(|(n, _)| *n == name)
                .ok_or_else(|| {
                    Error::Integrity(format!("unexpected tensor `{name}` in model file"))
                })?;
            if target.1.len() != len {
                return Err(Error::Integrity(format!(
                    "tensor `{name}` has {len} values, architecture expects {}",
                    target.1.len()
                )));
            }
            for (i, slot) in target.1.iter_mut().enumerate() {
                *slot = S::read_le(&values[i * S::BYTE_WIDTH..]);
            }
        }
    }
    if r.pos != payload.len() {
        return Err(Error::Integrity("trailing bytes in model file".into()));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::{load_table, EmbMode};
    use crate::model::ModelConfig;
    use crate::rng::seeded;
    use rand::Rng;

    fn write_vec_file(dir: &Path, name: &str, words: &[&str], dim: usize, seed: u64) -> PathBuf {
        let mut rng = seeded(seed, "ckpt-fixture");
        let mut out = String::new();
        for w in words {
            out.push_str(w);
            for _ in 0..dim {
                out.push_str(&format!(" {:.4}", rng.gen_range(-1.0..1.0f64)));
            }
            out.push('\n');
        }
        let path = dir.join(name);
        std::fs::write(&path, out).unwrap();
        path
    }

    fn file_backed_model(dir: &Path) -> DeCnn<f32> {
        let words = ["speed", "is", "good", "the", "screen"];
        let gpath = write_vec_file(dir, "general.vec", &words, 6, 1);
        let dpath = write_vec_file(dir, "domain.vec", &words, 4, 2);
        let general = load_table::<f32>(&gpath).unwrap();
        let domain = load_table::<f32>(&dpath).unwrap();
        let embedder = DualEmbedder::new(general, domain, EmbMode::Dual);
        DeCnn::init(ModelConfig::tiny(EmbMode::Dual, 77), embedder).unwrap()
    }

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn save_load_forward_is_bitwise_identical() {
        let dir = tempfile::tempdir().unwrap();
        let model = file_backed_model(dir.path());
        let mpath = dir.path().join("model.bin");
        save_model(&model, &mpath).unwrap();
        let loaded: DeCnn<f32> = load_model(&mpath).unwrap();
        let t = toks(&["the", "speed", "is", "good"]);
        let a = model.forward(&t).unwrap();
        let b = loaded.forward(&t).unwrap();
        let bits = |t: &crate::tensor::SeqTensor<f32>| -> Vec<u32> {
            t.data().iter().map(|v| v.to_bits()).collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn tampered_file_is_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        let model = file_backed_model(dir.path());
        let mpath = dir.path().join("model.bin");
        save_model(&model, &mpath).unwrap();
        let mut bytes = std::fs::read(&mpath).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        std::fs::write(&mpath, &bytes).unwrap();
        assert!(matches!(
            load_model::<f32>(&mpath),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn missing_embedding_file_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let model = file_backed_model(dir.path());
        let mpath = dir.path().join("model.bin");
        save_model(&model, &mpath).unwrap();
        std::fs::remove_file(dir.path().join("general.vec")).unwrap();
        match load_model::<f32>(&mpath) {
            Err(Error::Io { path, .. }) => {
                assert!(path.to_string_lossy().contains("general.vec"));
            }
            other => panic!("expected io error, got {other:?}"),
        }
    }

    #[test]
    fn changed_embedding_file_is_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        let model = file_backed_model(dir.path());
        let mpath = dir.path().join("model.bin");
        save_model(&model, &mpath).unwrap();
        // Rewrite the domain file with different contents.
        write_vec_file(dir.path(), "domain.vec", &["speed"], 4, 99);
        assert!(matches!(
            load_model::<f32>(&mpath),
            Err(Error::Integrity(_))
        ));
    }

    #[test]
    fn in_memory_tables_cannot_be_saved() {
        let mut rng = seeded(5, "mem");
        let general =
            crate::embeddings::EmbeddingTable::<f32>::random(&["a"], 4, &mut rng).unwrap();
        let domain = crate::embeddings::EmbeddingTable::<f32>::random(&["a"], 4, &mut rng).unwrap();
        let embedder = DualEmbedder::new(general, domain, EmbMode::Dual);
        let model = DeCnn::init(ModelConfig::tiny(EmbMode::Dual, 1), embedder).unwrap();
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            save_model(&model, &dir.path().join("m.bin")),
            Err(Error::Parameter { .. })
        ));
    }

    #[test]
    fn wrong_precision_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let model = file_backed_model(dir.path());
        let mpath = dir.path().join("model.bin");
        save_model(&model, &mpath).unwrap();
        assert!(matches!(
            load_model::<f64>(&mpath),
            Err(Error::Integrity(_))
        ));
    }
}
