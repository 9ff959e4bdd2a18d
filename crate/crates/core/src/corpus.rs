//! Span-annotated review sentences: tokenization with character offsets,
//! char-span to BIO label alignment and back, and dataset file formats.
//!
//! All character offsets count Unicode scalar values, not bytes.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-token label: `B` begins an aspect phrase, `I` continues one, `O`
/// marks non-aspect tokens. Index mapping is fixed: B=0, I=1, O=2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    B,
    I,
    O,
}

impl Label {
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        match self {
            Label::B => 0,
            Label::I => 1,
            Label::O => 2,
        }
    }

    pub fn from_index(idx: usize) -> Result<Self> {
        match idx {
            0 => Ok(Label::B),
            1 => Ok(Label::I),
            2 => Ok(Label::O),
            _ => Err(Error::data(format!("label index {idx} out of range"))),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "B" => Ok(Label::B),
            "I" => Ok(Label::I),
            "O" => Ok(Label::O),
            _ => Err(Error::data(format!("unknown label `{s}`"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::B => "B",
            Label::I => "I",
            Label::O => "O",
        }
    }
}

/// One token with its character range in the original text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub start: usize,
    pub end: usize,
}

/// Character span `[start, end)`.
pub type Span = (usize, usize);

/// A tokenized sentence with aspect spans and aligned BIO labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    pub text: String,
    pub tokens: Vec<Token>,
    pub spans: Vec<Span>,
    pub labels: Vec<Label>,
}

impl Sentence {
    /// Tokenizes `text` and aligns `spans` to BIO labels.
    pub fn new(text: impl Into<String>, spans: Vec<Span>) -> Result<Self> {
        let text = text.into();
        let tokens = tokenize(&text);
        let char_len = text.chars().count();
        for &(s, e) in &spans {
            if s >= e || e > char_len {
                return Err(Error::data(format!(
                    "span [{s}, {e}) out of bounds for text of {char_len} chars"
                )));
            }
        }
        let labels = spans_to_bio(&tokens, &spans)?;
        Ok(Sentence {
            text,
            tokens,
            spans,
            labels,
        })
    }

    /// Builds from pre-tokenized token/label pairs (conll style). The text is
    /// the tokens joined by single spaces; spans are derived from the labels.
    /// Returns the sentence and the number of BIO repairs applied.
    pub fn from_token_labels(tokens: Vec<String>, labels: Vec<Label>) -> Result<(Self, usize)> {
        if tokens.len() != labels.len() {
            return Err(Error::data(format!(
                "{} tokens but {} labels",
                tokens.len(),
                labels.len()
            )));
        }
        let mut text = String::new();
        let mut toks = Vec::with_capacity(tokens.len());
        let mut offset = 0usize;
        for (i, t) in tokens.iter().enumerate() {
            if i > 0 {
                text.push(' ');
                offset += 1;
            }
            let len = t.chars().count();
            toks.push(Token {
                surface: t.clone(),
                start: offset,
                end: offset + len,
            });
            text.push_str(t);
            offset += len;
        }
        let (labels, repairs) = repair_bio(&labels);
        let spans = bio_to_spans(&toks, &labels);
        Ok((
            Sentence {
                text,
                tokens: toks,
                spans,
                labels,
            },
            repairs,
        ))
    }

    pub fn token_surfaces(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.surface.clone()).collect()
    }
}

/// Rule-based tokenizer with exact character offsets: alphanumeric runs are
/// tokens, hyphens/apostrophes flanked by alphanumerics stay inside a token,
/// every other non-whitespace character is a single-character token.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let is_word = |c: char| c.is_alphanumeric();
    let is_joiner = |i: usize| -> bool {
        (chars[i] == '-' || chars[i] == '\'' || chars[i] == '\u{2019}')
            && i > 0
            && is_word(chars[i - 1])
            && i + 1 < chars.len()
            && is_word(chars[i + 1])
    };
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if is_word(c) {
            let start = i;
            i += 1;
            while i < chars.len() && (is_word(chars[i]) || is_joiner(i)) {
                i += 1;
            }
            tokens.push(Token {
                surface: chars[start..i].iter().collect(),
                start,
                end: i,
            });
        } else {
            tokens.push(Token {
                surface: c.to_string(),
                start: i,
                end: i + 1,
            });
            i += 1;
        }
    }
    tokens
}

/// Aligns character spans to per-token BIO labels. A token is inside a span
/// if their character ranges overlap by at least one character; the first
/// overlapping token of each span gets `B`, the rest `I`.
pub fn spans_to_bio(tokens: &[Token], spans: &[Span]) -> Result<Vec<Label>> {
    let mut sorted: Vec<Span> = spans.to_vec();
    sorted.sort_unstable();
    for w in sorted.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b.0 < a.1 {
            return Err(Error::data(format!(
                "overlapping aspect spans [{}, {}) and [{}, {})",
                a.0, a.1, b.0, b.1
            )));
        }
    }
    let mut labels = vec![Label::O; tokens.len()];
    for &(s, e) in &sorted {
        let mut first = true;
        for (idx, tok) in tokens.iter().enumerate() {
            if tok.start < e && s < tok.end {
                labels[idx] = if first { Label::B } else { Label::I };
                first = false;
            }
        }
    }
    Ok(labels)
}

/// Decodes BIO labels back to character spans: maximal `B I*` runs map to
/// `(first token start, last token end)`. An `I` with no live run is treated
/// as `B` (repair rule), so every label sequence decodes.
pub fn bio_to_spans(tokens: &[Token], labels: &[Label]) -> Vec<Span> {
    assert_eq!(tokens.len(), labels.len(), "labels must align with tokens");
    let mut spans = Vec::new();
    let mut current: Option<Span> = None;
    for (tok, &label) in tokens.iter().zip(labels.iter()) {
        match label {
            Label::B => {
                if let Some(span) = current.take() {
                    spans.push(span);
                }
                current = Some((tok.start, tok.end));
            }
            Label::I => match current.as_mut() {
                Some(span) => span.1 = tok.end,
                None => current = Some((tok.start, tok.end)),
            },
            Label::O => {
                if let Some(span) = current.take() {
                    spans.push(span);
                }
            }
        }
    }
    if let Some(span) = current {
        spans.push(span);
    }
    spans
}

/// Rewrites an invalid BIO sequence to a valid one: a leading `I` or an `I`
/// after `O` becomes `B`. Returns the repaired labels and the repair count.
pub fn repair_bio(labels: &[Label]) -> (Vec<Label>, usize) {
    let mut out = labels.to_vec();
    let mut repairs = 0;
    for i in 0..out.len() {
        if out[i] == Label::I {
            let invalid = i == 0 || out[i - 1] == Label::O;
            if invalid {
                out[i] = Label::B;
                repairs += 1;
            }
        }
    }
    (out, repairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Dataset file formats understood by [`load_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    /// One JSON object per line: `{"text": ..., "spans": [[s, e], ...]}`.
    JsonlSpans,
    /// `token<TAB>label` lines, blank line between sentences.
    ConllTwoCol,
}

impl DataFormat {
    /// Guesses the format from a file extension (`.jsonl` vs anything else).
    pub fn from_path(path: &Path) -> DataFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => DataFormat::JsonlSpans,
            _ => DataFormat::ConllTwoCol,
        }
    }
}

/// One line of a jsonl_spans file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JsonlRecord {
    pub text: String,
    pub spans: Vec<(usize, usize)>,
}

/// An ordered list of sentences belonging to one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sentences: Vec<Sentence>,
    pub split: Split,
}

/// How validation sentences are carved out of a training set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoldoutStrategy {
    /// Last `n` sentences in file order.
    Tail,
    /// Seeded random sample of `n` sentences.
    Random,
}

impl Dataset {
    pub fn new(sentences: Vec<Sentence>, split: Split) -> Self {
        Dataset { sentences, split }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Total number of gold aspect spans.
    pub fn aspect_count(&self) -> usize {
        self.sentences.iter().map(|s| s.spans.len()).sum()
    }

    /// Every distinct token surface in the dataset, plus lowercased variants
    /// (used for embedding vocabulary pruning).
    pub fn token_vocabulary(&self) -> BTreeSet<String> {
        let mut vocab = BTreeSet::new();
        for sent in &self.sentences {
            for tok in &sent.tokens {
                vocab.insert(tok.surface.clone());
                vocab.insert(tok.surface.to_lowercase());
            }
        }
        vocab
    }

    /// Splits off `holdout` validation sentences. With `holdout == 0` the
    /// validation set is a copy of the full training set (model selection on
    /// training F1). `holdout` must be smaller than the dataset.
    pub fn carve_holdout(
        &self,
        holdout: usize,
        strategy: HoldoutStrategy,
        seed: u64,
    ) -> Result<(Dataset, Dataset)> {
        if holdout >= self.len() {
            return Err(Error::parameter(
                "holdout",
                format!(
                    "holdout {holdout} must be smaller than the training set ({} sentences)",
                    self.len()
                ),
            ));
        }
        if holdout == 0 {
            return Ok((
                Dataset::new(self.sentences.clone(), Split::Train),
                Dataset::new(self.sentences.clone(), Split::Validation),
            ));
        }
        let mut indices: Vec<usize> = (0..self.len()).collect();
        let val_idx: BTreeSet<usize> = match strategy {
            HoldoutStrategy::Tail => indices
                .split_off(self.len() - holdout)
                .into_iter()
                .collect(),
            HoldoutStrategy::Random => {
                use rand::seq::SliceRandom;
                let mut rng = crate::rng::seeded(seed, "holdout");
                indices.shuffle(&mut rng);
                indices[..holdout].iter().copied().collect()
            }
        };
        let mut train = Vec::with_capacity(self.len() - holdout);
        let mut val = Vec::with_capacity(holdout);
        for (i, sent) in self.sentences.iter().enumerate() {
            if val_idx.contains(&i) {
                val.push(sent.clone());
            } else {
                train.push(sent.clone());
            }
        }
        Ok((
            Dataset::new(train, Split::Train),
            Dataset::new(val, Split::Validation),
        ))
    }
}

/// Loads a dataset file. Errors carry the 1-based record (line) number;
/// BIO-invalid conll input is repaired with a logged warning.
pub fn load_dataset(path: &Path, format: DataFormat, split: Split) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    match format {
        DataFormat::JsonlSpans => load_jsonl(reader, path, split),
        DataFormat::ConllTwoCol => load_conll(reader, path, split),
    }
}

fn load_jsonl(reader: impl BufRead, path: &Path, split: Split) -> Result<Dataset> {
    let mut sentences = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: JsonlRecord = serde_json::from_str(&line)
            .map_err(|e| Error::format(lineno, format!("bad jsonl record: {e}")))?;
        let sentence = Sentence::new(record.text, record.spans)
            .map_err(|e| Error::format(lineno, e.to_string()))?;
        sentences.push(sentence);
    }
    Ok(Dataset::new(sentences, split))
}

fn load_conll(reader: impl BufRead, path: &Path, split: Split) -> Result<Dataset> {
    let mut sentences = Vec::new();
    let mut tokens: Vec<String> = Vec::new();
    let mut labels: Vec<Label> = Vec::new();
    let mut total_repairs = 0usize;
    let mut flush = |tokens: &mut Vec<String>, labels: &mut Vec<Label>| -> Result<()> {
        if tokens.is_empty() {
            return Ok(());
        }
        let (sentence, repairs) =
            Sentence::from_token_labels(std::mem::take(tokens), std::mem::take(labels))?;
        total_repairs += repairs;
        sentences.push(sentence);
        Ok(())
    };
    let mut last_line = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        last_line = lineno;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            flush(&mut tokens, &mut labels)?;
            continue;
        }
        let (token, label) = line.split_once('\t').ok_or_else(|| {
            Error::format(lineno, format!("expected `token<TAB>label`, got `{line}`"))
        })?;
        let label = Label::parse(label.trim()).map_err(|e| Error::format(lineno, e.to_string()))?;
        tokens.push(token.to_string());
        labels.push(label);
    }
    flush(&mut tokens, &mut labels)?;
    if total_repairs > 0 {
        log::warn!(
            "{}: repaired {total_repairs} BIO-invalid label(s) (I without preceding B)",
            path.display()
        );
    }
    if sentences.is_empty() {
        return Err(Error::format(last_line, "no sentences in file"));
    }
    Ok(Dataset::new(sentences, split))
}

/// Writes sentences as jsonl_spans records.
pub fn write_jsonl(path: &Path, sentences: &[Sentence]) -> Result<()> {
    use std::io::Write;
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    for s in sentences {
        let record = JsonlRecord {
            text: s.text.clone(),
            spans: s.spans.clone(),
        };
        let line = serde_json::to_string(&record)
            .map_err(|e| Error::data(format!("jsonl serialization: {e}")))?;
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
