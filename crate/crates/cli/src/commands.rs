//! The four subcommands: embedding training, model training, evaluation,
//! and prediction.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use decnn_core::checkpoint::{load_model, save_model};
use decnn_core::corpus::{self, bio_to_spans, DataFormat, Dataset, Split};
use decnn_core::embeddings::{load_table_with, DualEmbedder, LoadOptions};
use decnn_core::eval::{evaluate, EvalReport};
use decnn_core::model::DeCnn;
use decnn_core::skipgram;
use decnn_core::train::{protocol_seeds, run_protocol, train};
use decnn_core::{Error, Result};

use crate::config::RunConfig;

pub fn cmd_train_embeddings(
    cfg: &RunConfig,
    corpus: Option<PathBuf>,
    out_file: Option<PathBuf>,
) -> Result<()> {
    let corpus_path = match corpus {
        Some(p) => {
            if !p.exists() {
                return Err(Error::parameter(
                    "corpus",
                    format!("path {} does not exist", p.display()),
                ));
            }
            p
        }
        None => cfg.require("embed_corpus")?,
    };
    let out_path = out_file.unwrap_or_else(|| cfg.out_dir().join("domain.vec"));
    if let Some(parent) = out_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let (table, log) = skipgram::train_corpus::<f32>(&corpus_path, &cfg.embed)?;
    skipgram::export_table(&table, &out_path)?;
    println!(
        "trained domain embeddings: {} words, dim {}, {} epochs",
        table.vocab_size(),
        table.dim(),
        cfg.embed.epochs
    );
    if let (Some(first), Some(last)) = (log.epoch_mean_loss.first(), log.epoch_mean_loss.last()) {
        println!("mean pair loss: {first:.4} (first epoch) -> {last:.4} (last epoch)");
    }
    println!("wrote {}", out_path.display());
    Ok(())
}

fn load_datasets(cfg: &RunConfig, need_test: bool) -> Result<(Dataset, Option<Dataset>)> {
    let train_path = cfg.require("train_data")?;
    let train_ds = corpus::load_dataset(
        &train_path,
        DataFormat::from_path(&train_path),
        Split::Train,
    )?;
    let test_ds = if need_test || cfg.paths.test_data.is_some() {
        let test_path = cfg.require("test_data")?;
        Some(corpus::load_dataset(
            &test_path,
            DataFormat::from_path(&test_path),
            Split::Test,
        )?)
    } else {
        None
    };
    Ok((train_ds, test_ds))
}

fn build_embedder(
    cfg: &RunConfig,
    train_ds: &Dataset,
    test_ds: Option<&Dataset>,
) -> Result<std::sync::Arc<DualEmbedder<f32>>> {
    let general_path = cfg.require("general_emb")?;
    let domain_path = cfg.require("domain_emb")?;
    let mut filter: Option<BTreeSet<String>> = None;
    if cfg.prune_vocab {
        let mut vocab = train_ds.token_vocabulary();
        if let Some(test) = test_ds {
            vocab.extend(test.token_vocabulary());
        }
        filter = Some(vocab);
    }
    let opts = LoadOptions {
        vocab_filter: filter.as_ref(),
        max_words: cfg.emb_max_words,
    };
    let general = load_table_with::<f32>(&general_path, opts.clone())?;
    let domain = load_table_with::<f32>(&domain_path, opts)?;
    println!(
        "embeddings: general {} words dim {}, domain {} words dim {} ({} buckets)",
        general.vocab_size(),
        general.dim(),
        domain.vocab_size(),
        domain.dim(),
        domain.subwords().map_or(0, |s| s.len()),
    );
    Ok(DualEmbedder::new(general, domain, cfg.model.emb_mode))
}

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let (train_ds, test_ds) = load_datasets(cfg, false)?;
    println!(
        "training data: {} sentences, {} aspect spans",
        train_ds.len(),
        train_ds.aspect_count()
    );
    let embedder = build_embedder(cfg, &train_ds, test_ds.as_ref())?;
    let out_dir = cfg.out_dir();
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;

    let mut model = DeCnn::init(cfg.model.clone(), embedder)?;
    let log = train(&mut model, &train_ds, &cfg.train)?;
    let model_path = out_dir.join("model.bin");
    save_model(&model, &model_path)?;
    let log_path = out_dir.join("train_log.jsonl");
    log.write_jsonl(&log_path)?;

    println!(
        "trained {} epochs; best epoch {} (validation F1 {:.4})",
        log.epochs.len(),
        log.best_epoch,
        log.best_val_f1()
    );
    println!("wrote {} and {}", model_path.display(), log_path.display());
    if let Some(test) = &test_ds {
        let score = evaluate(&model, test)?;
        println!(
            "test: P {:.4} R {:.4} F1 {:.4} ({} predicted / {} gold spans)",
            score.precision, score.recall, score.f1, score.predicted, score.gold
        );
    }
    Ok(())
}

fn write_report(report: &EvalReport, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let path = out_dir.join("eval_report.txt");
    std::fs::write(&path, report.render_text()).map_err(|e| Error::io(&path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn cmd_eval(
    cfg: &RunConfig,
    model_path: Option<PathBuf>,
    data: Option<PathBuf>,
    runs: Option<usize>,
) -> Result<()> {
    if let Some(runs) = runs {
        // Full protocol: train `runs` models from scratch and average.
        let (train_ds, test_ds) = load_datasets(cfg, true)?;
        let test_ds = test_ds.expect("need_test requested");
        let embedder = build_embedder(cfg, &train_ds, Some(&test_ds))?;
        let seeds = protocol_seeds(cfg.train.seed, runs);
        let outcome = run_protocol(
            &cfg.model, &embedder, &train_ds, &test_ds, &cfg.train, &seeds,
        )?;
        print!("{}", outcome.report.render_text());
        return write_report(&outcome.report, &cfg.out_dir());
    }

    let model_path = model_path
        .ok_or_else(|| Error::parameter("model", "eval needs --model PATH or --runs N"))?;
    let model: DeCnn<f32> = load_model(&model_path)?;
    let data_path = match data {
        Some(p) => {
            if !p.exists() {
                return Err(Error::parameter(
                    "data",
                    format!("path {} does not exist", p.display()),
                ));
            }
            p
        }
        None => cfg.require("test_data")?,
    };
    let ds = corpus::load_dataset(&data_path, DataFormat::from_path(&data_path), Split::Test)?;
    let score = evaluate(&model, &ds)?;
    let report = EvalReport::from_runs(vec![score]);
    print!("{}", report.render_text());
    write_report(&report, &cfg.out_dir())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictFormat {
    /// Decide from the file extension.
    Auto,
    /// One plain-text sentence per line.
    Plain,
    /// jsonl records with a `text` field.
    Jsonl,
}

#[derive(Serialize)]
struct Prediction {
    text: String,
    spans: Vec<(usize, usize)>,
    aspects: Vec<String>,
}

pub fn cmd_predict(
    model_path: &Path,
    input: &Path,
    out_file: Option<PathBuf>,
    format: PredictFormat,
) -> Result<()> {
    let model: DeCnn<f32> = load_model(model_path)?;
    let file = std::fs::File::open(input).map_err(|e| Error::io(input, e))?;
    let reader = BufReader::new(file);
    let jsonl = match format {
        PredictFormat::Jsonl => true,
        PredictFormat::Plain => false,
        PredictFormat::Auto => DataFormat::from_path(input) == DataFormat::JsonlSpans,
    };

    let mut out: Box<dyn Write> = match &out_file {
        Some(p) => Box::new(std::fs::File::create(p).map_err(|e| Error::io(p, e))?),
        None => Box::new(std::io::stdout()),
    };
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(input, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let text = if jsonl {
            let record: serde_json::Value = serde_json::from_str(&line)
                .map_err(|e| Error::format(lineno + 1, format!("bad jsonl record: {e}")))?;
            record
                .get("text")
                .and_then(|t| t.as_str())
                .ok_or_else(|| Error::format(lineno + 1, "record has no `text` field"))?
                .to_string()
        } else {
            line
        };
        let tokens = corpus::tokenize(&text);
        let spans = if tokens.is_empty() {
            Vec::new()
        } else {
            let surfaces: Vec<String> = tokens.iter().map(|t| t.surface.clone()).collect();
            let labels = model.predict_labels(&surfaces)?;
            bio_to_spans(&tokens, &labels)
        };
        let chars: Vec<char> = text.chars().collect();
        let aspects = spans
            .iter()
            .map(|&(s, e)| chars[s..e].iter().collect())
            .collect();
        let prediction = Prediction {
            text,
            spans,
            aspects,
        };
        let json = serde_json::to_string(&prediction)
            .map_err(|e| Error::data(format!("prediction serialization: {e}")))?;
        writeln!(out, "{json}").map_err(|e| Error::io(input, e))?;
    }
    Ok(())
}
