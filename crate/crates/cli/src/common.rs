//! Argument groups and helpers shared by the subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use dupcurate_core::corpus_io::{
    resolve_inputs, CorpusWriter, ReadOptions, ShardReader, INCOMPLETE_MARKER, MANIFEST_FILE,
};
use dupcurate_core::minhash_dedup::{cluster, exact_cluster_sketches, DocSketch, Sketcher};
use dupcurate_core::{ClusterKind, ClusterMode, Document, DuplicateClusterTable, LshParams, TokenizerMode};
use rayon::prelude::*;
use serde::Serialize;

use crate::{io_err, CliResult, GlobalArgs, EFFECTIVE_CONFIG, SUMMARY};

pub const CORPUS_DIR: &str = "corpus";
pub const CLUSTERS_FILE: &str = "clusters.jsonl";
pub const PROFILE_FILE: &str = "profile.json";
pub const SKETCH_FILE: &str = "sketches.bin";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Tokenizer {
    Whitespace,
    #[value(name = "bytes-div-4")]
    BytesDiv4,
    ExternalField,
}

impl From<Tokenizer> for TokenizerMode {
    fn from(t: Tokenizer) -> Self {
        match t {
            Tokenizer::Whitespace => TokenizerMode::Whitespace,
            Tokenizer::BytesDiv4 => TokenizerMode::BytesDiv4,
            Tokenizer::ExternalField => TokenizerMode::ExternalField,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct InputArgs {
    /// Shard files, corpus directories or manifest files, in order.
    #[arg(long, required = true, num_args = 1.., value_name = "PATH")]
    pub input: Vec<PathBuf>,
    /// Token counting for records without a token_count field.
    #[arg(long, value_enum, default_value_t = Tokenizer::Whitespace)]
    pub tokenizer: Tokenizer,
}

impl InputArgs {
    pub fn shards(&self) -> CliResult<Vec<PathBuf>> {
        Ok(resolve_inputs(&self.input)?)
    }

    pub fn read_options(&self, g: &GlobalArgs) -> ReadOptions {
        ReadOptions {
            tokenizer: self.tokenizer.into(),
            policy: g.policy(),
        }
    }
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Run directory for outputs; created if missing.
    #[arg(long, value_name = "DIR")]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CorpusOutArgs {
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_docs_per_shard: u64,
    /// Gzip the output shards.
    #[arg(long)]
    pub compress: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct LshArgs {
    /// Shingle width in words.
    #[arg(long, default_value_t = 5)]
    pub ngram: usize,
    #[arg(long, default_value_t = 14)]
    pub bands: usize,
    /// Minhash components per band.
    #[arg(long, default_value_t = 9)]
    pub rows: usize,
}

impl LshArgs {
    pub fn params(&self, seed: u64) -> LshParams {
        LshParams {
            ngram: self.ngram,
            bands: self.bands,
            rows: self.rows,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Fuzzy,
    Exact,
}

impl From<Kind> for ClusterKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Fuzzy => ClusterKind::Fuzzy,
            Kind::Exact => ClusterKind::Exact,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ClusterArgs {
    /// Cluster table written by `dedup`. Without it, documents are clustered
    /// globally here (fuzzy by default).
    #[arg(long, value_name = "FILE")]
    pub clusters: Option<PathBuf>,
    /// Which duplicate notion supplies cluster sizes.
    #[arg(long, value_enum, default_value_t = Kind::Fuzzy)]
    pub cluster_kind: Kind,
    #[command(flatten)]
    #[serde(flatten)]
    pub lsh: LshArgs,
}

impl ClusterArgs {
    pub fn table(&self, docs: &[Document], seed: u64) -> CliResult<DuplicateClusterTable> {
        if let Some(path) = &self.clusters {
            return Ok(DuplicateClusterTable::read_jsonl(path, self.cluster_kind.into())?);
        }
        let sk = Sketcher::new(self.lsh.params(seed))?;
        let sketches: Vec<DocSketch> = docs.par_iter().map(|d| sk.sketch_doc(d)).collect();
        Ok(match self.cluster_kind {
            Kind::Fuzzy => cluster(&sketches, ClusterMode::Global)?,
            Kind::Exact => exact_cluster_sketches(&sketches, ClusterMode::Global)?,
        })
    }
}

/// Read every shard, one worker per shard, keeping shard order. Returns the
/// documents and the number of skipped lines.
pub fn load_docs(shards: &[PathBuf], opts: ReadOptions, keep_text: bool) -> CliResult<(Vec<Document>, u64)> {
    let parts = shards
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let mut reader = ShardReader::open(path, i, opts)?;
            let mut docs = Vec::new();
            for d in reader.by_ref() {
                let mut d = d?;
                if !keep_text {
                    d.text = String::new();
                }
                docs.push(d);
            }
            Ok((docs, reader.skipped()))
        })
        .collect::<dupcurate_core::Result<Vec<_>>>()?;
    let skipped = parts.iter().map(|p| p.1).sum();
    Ok((parts.into_iter().flat_map(|p| p.0).collect(), skipped))
}

/// Sketch every shard without holding more than one shard's text per worker.
pub fn sketch_shards(shards: &[PathBuf], opts: ReadOptions, sk: &Sketcher) -> CliResult<(Vec<Vec<DocSketch>>, u64)> {
    let parts = shards
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let mut reader = ShardReader::open(path, i, opts)?;
            let docs = reader.by_ref().collect::<dupcurate_core::Result<Vec<_>>>()?;
            let sketches: Vec<DocSketch> = docs.par_iter().map(|d| sk.sketch_doc(d)).collect();
            Ok((sketches, reader.skipped()))
        })
        .collect::<dupcurate_core::Result<Vec<_>>>()?;
    let skipped = parts.iter().map(|p| p.1).sum();
    Ok((parts.into_iter().map(|p| p.0).collect(), skipped))
}

pub fn sum_tokens<'a>(docs: impl IntoIterator<Item = &'a Document>) -> u64 {
    docs.into_iter().map(|d| d.token_count).sum()
}

pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    pub fn create(path: &Path) -> CliResult<Self> {
        fs::create_dir_all(path).map_err(|e| io_err(path, e))?;
        Ok(RunDir { path: path.to_owned() })
    }

    pub fn join(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> CliResult<()> {
        let path = self.join(name);
        let mut bytes = serde_json::to_vec_pretty(value).map_err(dupcurate_core::Error::from)?;
        bytes.push(b'\n');
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))
    }

    /// The resolved configuration of this run. Worker count and output
    /// location are left out: neither may influence the results.
    pub fn write_config<T: Serialize>(&self, command: &str, g: &GlobalArgs, args: &T) -> CliResult<()> {
        let config = serde_json::json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": g.seed,
            "parse_policy": g.policy(),
            "log_level": g.log_level,
            "args": args,
        });
        self.write_json(EFFECTIVE_CONFIG, &config)
    }

    pub fn write_summary(&self, command: &str, fields: serde_json::Value) -> CliResult<()> {
        let mut summary = serde_json::json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
        });
        if let (Some(s), serde_json::Value::Object(f)) = (summary.as_object_mut(), fields) {
            s.extend(f);
        }
        self.write_json(SUMMARY, &summary)
    }

    /// Writer for `DIR/corpus`, clearing shards left by an earlier run.
    pub fn corpus_writer(&self, out: &CorpusOutArgs, mode: TokenizerMode) -> CliResult<CorpusWriter> {
        let dir = self.join(CORPUS_DIR);
        if dir.is_dir() {
            for entry in fs::read_dir(&dir).map_err(|e| io_err(&dir, e))? {
                let p = entry.map_err(|e| io_err(&dir, e))?.path();
                let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
                if name.starts_with("shard_") || name == MANIFEST_FILE || name == INCOMPLETE_MARKER {
                    fs::remove_file(&p).map_err(|e| io_err(&p, e))?;
                }
            }
        }
        Ok(CorpusWriter::create(dir, out.max_docs_per_shard, out.compress, mode)?)
    }

    pub fn write_corpus<'a>(
        &self,
        docs: impl IntoIterator<Item = &'a Document>,
        out: &CorpusOutArgs,
        mode: TokenizerMode,
    ) -> CliResult<dupcurate_core::CorpusManifest> {
        let mut w = self.corpus_writer(out, mode)?;
        for d in docs {
            w.push(d)?;
        }
        Ok(w.finish()?)
    }
}
