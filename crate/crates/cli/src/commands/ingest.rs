use std::path::PathBuf;

use clap::{Args, ValueEnum};
use dupcurate_core::corpus_io::{read_corpus, MissingScorePolicy, ScoreSidecar};
use serde::Serialize;
use serde_json::json;

use crate::common::{CorpusOutArgs, InputArgs, OutputArgs, RunDir};
use crate::{CliResult, GlobalArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingScores {
    /// Every document must have a sidecar score.
    RequireAll,
    /// Unmatched documents stay unscored and rank last.
    AllowMissing,
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    /// JSONL sidecar of {"id": ..., "score": ...} rows.
    #[arg(long, value_name = "FILE")]
    pub scores: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MissingScores::RequireAll)]
    pub missing_scores: MissingScores,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub corpus: CorpusOutArgs,
}

pub fn run(g: &GlobalArgs, a: &IngestArgs) -> CliResult<()> {
    let shards = a.input.shards()?;
    let run = RunDir::create(&a.output.output)?;
    run.write_config("ingest", g, a)?;
    let sidecar = a.scores.as_deref().map(ScoreSidecar::load).transpose()?;
    let policy = match a.missing_scores {
        MissingScores::RequireAll => MissingScorePolicy::RequireAll,
        MissingScores::AllowMissing => MissingScorePolicy::AllowMissing,
    };

    let mut writer = run.corpus_writer(&a.corpus, a.input.tokenizer.into())?;
    let mut reader = read_corpus(&shards, a.input.read_options(g));
    let mut scored = 0u64;
    for doc in reader.by_ref() {
        let mut doc = doc?;
        if let Some(s) = &sidecar {
            s.attach(&mut doc, policy)?;
        }
        scored += doc.quality_score.is_some() as u64;
        writer.push(&doc)?;
    }
    let skipped = reader.skipped();
    let manifest = writer.finish()?;
    log::info!(
        "ingested {} documents ({} tokens) into {} shards",
        manifest.doc_count,
        manifest.token_count,
        manifest.shard_paths.len()
    );
    if skipped > 0 {
        log::warn!("skipped {skipped} malformed lines");
    }
    run.write_summary(
        "ingest",
        json!({
            "input_shards": shards.len(),
            "output_docs": manifest.doc_count,
            "output_tokens": manifest.token_count,
            "output_shards": manifest.shard_paths.len(),
            "scored_docs": scored,
            "skipped_lines": skipped,
        }),
    )
}
