//! Sharded JSONL corpora: reading, writing, manifests and score sidecars.
//!
//! A shard is a file with one JSON object per line (optionally gzip
//! compressed, detected by a `.gz` suffix). Recognised fields are `text`
//! (required), `id`, `score`, `dup_count` and `token_count`; anything else is
//! ignored. Readers are streaming: at most one line is held per open shard.

use std::collections::HashMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keyed;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const INCOMPLETE_MARKER: &str = "_INCOMPLETE";

/// Stable document identifier.
///
/// Supplied ids are kept verbatim; generated ids are the 32-digit hex form of
/// a 128-bit content hash salted with the shard and record index. Ordering is
/// lexicographic and is the tie-break used by every ranking.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DocId(String);

impl DocId {
    pub fn new(id: impl Into<String>) -> Self {
        DocId(id.into())
    }

    pub fn generated(text: &str, shard_index: usize, record_index: u64) -> Self {
        let salt = keyed::mix64((shard_index as u64) << 40 ^ record_index);
        DocId(format!("{:032x}", keyed::hash128(text.as_bytes(), salt)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DocId {
    fn from(s: &str) -> Self {
        DocId(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerMode {
    /// Whitespace-separated words.
    #[default]
    Whitespace,
    /// UTF-8 byte length divided by four, rounded up.
    #[serde(rename = "bytes_div_4")]
    BytesDiv4,
    /// Require a precomputed `token_count` field on every record.
    ExternalField,
}

impl TokenizerMode {
    pub fn count(self, text: &str) -> Option<u64> {
        match self {
            TokenizerMode::Whitespace => Some(text.split_whitespace().count() as u64),
            TokenizerMode::BytesDiv4 => Some((text.len() as u64).div_ceil(4)),
            TokenizerMode::ExternalField => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParsePolicy {
    /// Abort on the first malformed record.
    #[default]
    Strict,
    /// Skip malformed records and count them.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: DocId,
    pub text: String,
    pub token_count: u64,
    pub quality_score: Option<f64>,
    pub duplicate_count: Option<u64>,
    pub shard_index: usize,
}

impl Document {
    /// Convenience constructor using whitespace token counting.
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        Document {
            id: DocId::new(id),
            token_count: text.split_whitespace().count() as u64,
            text,
            quality_score: None,
            duplicate_count: None,
            shard_index: 0,
        }
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.quality_score = Some(score);
        self
    }

    pub fn with_dup_count(mut self, count: u64) -> Self {
        self.duplicate_count = Some(count);
        self
    }

    pub fn with_shard(mut self, shard_index: usize) -> Self {
        self.shard_index = shard_index;
        self
    }
}

#[derive(Debug, Deserialize)]
struct InRecord {
    id: Option<serde_json::Value>,
    text: Option<String>,
    score: Option<f64>,
    dup_count: Option<u64>,
    token_count: Option<u64>,
}

#[derive(Serialize)]
struct OutRecord<'a> {
    id: &'a DocId,
    text: &'a str,
    token_count: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dup_count: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    pub tokenizer: TokenizerMode,
    pub policy: ParsePolicy,
}

fn parse_record(
    line: &str,
    opts: &ReadOptions,
    shard_index: usize,
    record_index: u64,
) -> std::result::Result<Document, String> {
    let rec: InRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let text = rec.text.ok_or_else(|| "missing text field".to_owned())?;
    let id = match rec.id {
        None | Some(serde_json::Value::Null) => DocId::generated(&text, shard_index, record_index),
        Some(serde_json::Value::String(s)) => DocId(s),
        Some(serde_json::Value::Number(n)) => DocId(n.to_string()),
        Some(other) => return Err(format!("id must be a string or number, got {other}")),
    };
    let token_count = match rec.token_count {
        Some(t) => t,
        None => opts
            .tokenizer
            .count(&text)
            .ok_or_else(|| "missing token_count field".to_owned())?,
    };
    if rec.dup_count == Some(0) {
        return Err("dup_count must be >= 1".to_owned());
    }
    Ok(Document {
        id,
        text,
        token_count,
        quality_score: rec.score,
        duplicate_count: rec.dup_count,
        shard_index,
    })
}

fn open_lines(path: &Path) -> Result<Box<dyn BufRead + Send>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

/// Streaming reader over a single shard.
pub struct ShardReader {
    path: PathBuf,
    shard_index: usize,
    opts: ReadOptions,
    lines: Box<dyn BufRead + Send>,
    buf: String,
    line_no: u64,
    record_index: u64,
    skipped: u64,
    failed: bool,
}

impl ShardReader {
    pub fn open(path: impl Into<PathBuf>, shard_index: usize, opts: ReadOptions) -> Result<Self> {
        let path = path.into();
        let lines = open_lines(&path)?;
        Ok(ShardReader {
            path,
            shard_index,
            opts,
            lines,
            buf: String::new(),
            line_no: 0,
            record_index: 0,
            skipped: 0,
            failed: false,
        })
    }

    /// Records skipped under [`ParsePolicy::Lenient`].
    pub fn skipped(&self) -> u64 {
        self.skipped
    }
}

impl Iterator for ShardReader {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            self.buf.clear();
            match self.lines.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    self.failed = true;
                    return Some(Err(Error::io(&self.path, e)));
                }
            }
            self.line_no += 1;
            let line = self.buf.trim_end_matches(['\n', '\r']);
            if line.trim().is_empty() {
                continue;
            }
            let record_index = self.record_index;
            self.record_index += 1;
            match parse_record(line, &self.opts, self.shard_index, record_index) {
                Ok(doc) => return Some(Ok(doc)),
                Err(_) if self.opts.policy == ParsePolicy::Lenient => {
                    self.skipped += 1;
                }
                Err(reason) => {
                    self.failed = true;
                    return Some(Err(Error::Malformed {
                        path: self.path.clone(),
                        line: self.line_no,
                        reason,
                    }));
                }
            }
        }
    }
}

/// Sequential stream over every shard in order.
pub struct CorpusReader {
    shards: std::vec::IntoIter<(usize, PathBuf)>,
    current: Option<ShardReader>,
    opts: ReadOptions,
    skipped: u64,
}

impl CorpusReader {
    pub fn skipped(&self) -> u64 {
        self.skipped + self.current.as_ref().map_or(0, |r| r.skipped())
    }
}

impl Iterator for CorpusReader {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(reader) = self.current.as_mut() {
                if let Some(item) = reader.next() {
                    return Some(item);
                }
                self.skipped += reader.skipped();
                self.current = None;
            }
            let (idx, path) = self.shards.next()?;
            match ShardReader::open(path, idx, self.opts) {
                Ok(r) => self.current = Some(r),
                Err(e) => return Some(Err(e)),
            }
        }
    }
}

/// Stream documents from `shards` in shard order, then record order.
pub fn read_corpus(shards: &[PathBuf], opts: ReadOptions) -> CorpusReader {
    CorpusReader {
        shards: shards.to_vec().into_iter().enumerate().collect::<Vec<_>>().into_iter(),
        current: None,
        opts,
        skipped: 0,
    }
}

/// Load a whole corpus into memory.
pub fn load_corpus(shards: &[PathBuf], opts: ReadOptions) -> Result<Vec<Document>> {
    read_corpus(shards, opts).collect()
}

/// Apply `f` to each shard's documents, one worker per shard, returning
/// results in shard order.
pub fn map_shards<T, F>(shards: &[PathBuf], opts: ReadOptions, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, Vec<Document>) -> Result<T> + Sync,
{
    shards
        .par_iter()
        .enumerate()
        .map(|(idx, path)| {
            let docs = ShardReader::open(path, idx, opts)?.collect::<Result<Vec<_>>>()?;
            f(idx, docs)
        })
        .collect()
}

fn is_shard_file(path: &Path) -> bool {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    !name.starts_with('.')
        && !name.starts_with('_')
        && [".jsonl", ".jsonl.gz", ".json.gz", ".ndjson"]
            .iter()
            .any(|s| name.ends_with(s))
}

/// Expand manifests and directories into an ordered list of shard files.
///
/// A `.json` file is read as a manifest; a directory holding a manifest uses
/// it, otherwise its shard files are taken in lexicographic order.
pub fn resolve_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let manifest = input.join(MANIFEST_FILE);
            if manifest.is_file() {
                out.extend(CorpusManifest::load(&manifest)?.shard_files(input));
                continue;
            }
            let mut files: Vec<PathBuf> = fs::read_dir(input)
                .map_err(|e| Error::io(input, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && is_shard_file(p))
                .collect();
            files.sort();
            out.extend(files);
        } else if input.extension().is_some_and(|e| e == "json") {
            let base = input.parent().unwrap_or(Path::new("."));
            out.extend(CorpusManifest::load(input)?.shard_files(base));
        } else if input.is_file() {
            out.push(input.clone());
        } else {
            return Err(Error::io(
                input,
                std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
            ));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    /// Shard file names relative to the manifest's directory.
    pub shard_paths: Vec<String>,
    pub shard_doc_counts: Vec<u64>,
    pub doc_count: u64,
    pub token_count: u64,
    pub has_scores: bool,
    pub has_dup_counts: bool,
    pub tokenizer_mode: TokenizerMode,
}

impl CorpusManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn shard_files(&self, base: &Path) -> Vec<PathBuf> {
        self.shard_paths.iter().map(|p| base.join(p)).collect()
    }
}

/// Writes documents into numbered shards and a manifest.
///
/// An `_INCOMPLETE` marker exists in the output directory from creation
/// until [`CorpusWriter::finish`] succeeds.
pub struct CorpusWriter {
    out_dir: PathBuf,
    max_docs_per_shard: u64,
    compress: bool,
    current: Option<Box<dyn Write>>,
    in_current: u64,
    manifest: CorpusManifest,
    all_scored: bool,
    all_dup_counted: bool,
}

impl CorpusWriter {
    pub fn create(
        out_dir: impl Into<PathBuf>,
        max_docs_per_shard: u64,
        compress: bool,
        tokenizer_mode: TokenizerMode,
    ) -> Result<Self> {
        if max_docs_per_shard == 0 {
            return Err(Error::invalid("max_docs_per_shard must be >= 1"));
        }
        let out_dir = out_dir.into();
        fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
        let marker = out_dir.join(INCOMPLETE_MARKER);
        fs::write(&marker, b"").map_err(|e| Error::io(&marker, e))?;
        Ok(CorpusWriter {
            out_dir,
            max_docs_per_shard,
            compress,
            current: None,
            in_current: 0,
            manifest: CorpusManifest {
                shard_paths: Vec::new(),
                shard_doc_counts: Vec::new(),
                doc_count: 0,
                token_count: 0,
                has_scores: false,
                has_dup_counts: false,
                tokenizer_mode,
            },
            all_scored: true,
            all_dup_counted: true,
        })
    }

    fn roll_shard(&mut self) -> Result<()> {
        self.close_current()?;
        let idx = self.manifest.shard_paths.len();
        let name = if self.compress {
            format!("shard_{idx:05}.jsonl.gz")
        } else {
            format!("shard_{idx:05}.jsonl")
        };
        let path = self.out_dir.join(&name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let w: Box<dyn Write> = if self.compress {
            Box::new(BufWriter::new(GzEncoder::new(file, Compression::default())))
        } else {
            Box::new(BufWriter::new(file))
        };
        self.current = Some(w);
        self.in_current = 0;
        self.manifest.shard_paths.push(name);
        self.manifest.shard_doc_counts.push(0);
        Ok(())
    }

    fn close_current(&mut self) -> Result<()> {
        if let Some(mut w) = self.current.take() {
            w.flush().map_err(|e| Error::io(&self.out_dir, e))?;
        }
        Ok(())
    }

    pub fn push(&mut self, doc: &Document) -> Result<()> {
        if self.current.is_none() || self.in_current >= self.max_docs_per_shard {
            self.roll_shard()?;
        }
        let rec = OutRecord {
            id: &doc.id,
            text: &doc.text,
            token_count: doc.token_count,
            score: doc.quality_score,
            dup_count: doc.duplicate_count,
        };
        let w = self.current.as_mut().expect("shard open");
        serde_json::to_writer(&mut *w, &rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(&self.out_dir, e))?;
        self.in_current += 1;
        *self.manifest.shard_doc_counts.last_mut().expect("shard open") += 1;
        self.manifest.doc_count += 1;
        self.manifest.token_count += doc.token_count;
        self.all_scored &= doc.quality_score.is_some();
        self.all_dup_counted &= doc.duplicate_count.is_some();
        Ok(())
    }

    pub fn finish(mut self) -> Result<CorpusManifest> {
        self.close_current()?;
        let nonempty = self.manifest.doc_count > 0;
        self.manifest.has_scores = nonempty && self.all_scored;
        self.manifest.has_dup_counts = nonempty && self.all_dup_counted;
        self.manifest.save(&self.out_dir.join(MANIFEST_FILE))?;
        let marker = self.out_dir.join(INCOMPLETE_MARKER);
        fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
        Ok(self.manifest)
    }
}

/// Write a document stream as plain JSONL shards.
pub fn write_corpus<'a, I>(docs: I, out_dir: &Path, max_docs_per_shard: u64) -> Result<CorpusManifest>
where
    I: IntoIterator<Item = &'a Document>,
{
    let mut w = CorpusWriter::create(out_dir, max_docs_per_shard, false, TokenizerMode::default())?;
    for d in docs {
        w.push(d)?;
    }
    w.finish()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingScorePolicy {
    /// Every corpus document must appear in the sidecar.
    #[default]
    RequireAll,
    /// Unmatched documents stay unscored and rank last.
    AllowMissing,
}

#[derive(Deserialize)]
struct SidecarRecord {
    id: serde_json::Value,
    score: f64,
}

/// `(id, score)` pairs loaded from a JSONL sidecar.
#[derive(Debug, Clone, Default)]
pub struct ScoreSidecar {
    scores: HashMap<DocId, f64>,
}

impl ScoreSidecar {
    pub fn from_pairs<I: IntoIterator<Item = (DocId, f64)>>(pairs: I) -> Result<Self> {
        let mut scores = HashMap::new();
        for (id, s) in pairs {
            if scores.insert(id.clone(), s).is_some() {
                return Err(Error::DuplicateSidecarId(id.0));
            }
        }
        Ok(ScoreSidecar { scores })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in open_lines(path)?.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: SidecarRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
                path: path.to_owned(),
                line: i as u64 + 1,
                reason: e.to_string(),
            })?;
            let id = match rec.id {
                serde_json::Value::String(s) => DocId(s),
                other => DocId(other.to_string()),
            };
            pairs.push((id, rec.score));
        }
        Self::from_pairs(pairs)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn attach(&self, doc: &mut Document, policy: MissingScorePolicy) -> Result<()> {
        match (self.scores.get(&doc.id), policy) {
            (Some(&s), _) => doc.quality_score = Some(s),
            (None, MissingScorePolicy::RequireAll) => {
                return Err(Error::MissingField {
                    id: doc.id.0.clone(),
                    field: "score",
                })
            }
            (None, MissingScorePolicy::AllowMissing) => doc.quality_score = None,
        }
        Ok(())
    }
}

/// Join sidecar scores onto a document stream.
pub fn attach_scores<'a, I>(
    docs: I,
    sidecar: &'a ScoreSidecar,
    policy: MissingScorePolicy,
) -> impl Iterator<Item = Result<Document>> + 'a
where
    I: IntoIterator<Item = Result<Document>> + 'a,
{
    docs.into_iter().map(move |d| {
        let mut d = d?;
        sidecar.attach(&mut d, policy)?;
        Ok(d)
    })
}
