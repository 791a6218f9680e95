use std::path::PathBuf;

use clap::{Args, ValueEnum};
use dupcurate_core::corpus_io::read_corpus;
use dupcurate_core::minhash_dedup::{cluster, exact_cluster_sketches, SketchCacheWriter, Sketcher};
use dupcurate_core::stats_report::duplication_profile;
use dupcurate_core::ClusterMode;
use serde::Serialize;
use serde_json::json;

use crate::common::{
    sketch_shards, CorpusOutArgs, InputArgs, LshArgs, OutputArgs, RunDir, CLUSTERS_FILE, CORPUS_DIR, PROFILE_FILE,
    SKETCH_FILE,
};
use crate::{CliResult, GlobalArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DedupMode {
    /// Fuzzy clusters across the whole corpus.
    Global,
    /// Fuzzy clusters within each shard only.
    Sharded,
    /// Identical normalized text across the whole corpus.
    Exact,
    /// Identical normalized text within each shard.
    ExactSharded,
}

#[derive(Debug, Args, Serialize)]
pub struct DedupArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value_t = DedupMode::Global)]
    pub mode: DedupMode,
    #[command(flatten)]
    #[serde(flatten)]
    pub lsh: LshArgs,
    /// Where to stream document sketches (default: sketches.bin in the run directory).
    #[arg(long, value_name = "FILE")]
    pub signature_cache: Option<PathBuf>,
    /// Do not write the sketch cache.
    #[arg(long, conflicts_with = "signature_cache")]
    pub no_signature_cache: bool,
    /// Also write the corpus with dup_count set to each document's cluster size.
    #[arg(long)]
    pub annotate: bool,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub corpus: CorpusOutArgs,
}

pub fn run(g: &GlobalArgs, a: &DedupArgs) -> CliResult<()> {
    let shards = a.input.shards()?;
    let opts = a.input.read_options(g);
    let run = RunDir::create(&a.output.output)?;
    run.write_config("dedup", g, a)?;

    let params = a.lsh.params(g.seed);
    let sk = Sketcher::new(params)?;
    let (per_shard, skipped) = sketch_shards(&shards, opts, &sk)?;
    let sketches: Vec<_> = per_shard.into_iter().flatten().collect();
    log::info!("sketched {} documents from {} shards", sketches.len(), shards.len());

    if !a.no_signature_cache {
        let path = a.signature_cache.clone().unwrap_or_else(|| run.join(SKETCH_FILE));
        let mut w = SketchCacheWriter::create(&path, &params)?;
        for s in &sketches {
            w.push(s)?;
        }
        w.finish()?;
    }

    let table = match a.mode {
        DedupMode::Global => cluster(&sketches, ClusterMode::Global)?,
        DedupMode::Sharded => cluster(&sketches, ClusterMode::PerShard)?,
        DedupMode::Exact => exact_cluster_sketches(&sketches, ClusterMode::Global)?,
        DedupMode::ExactSharded => exact_cluster_sketches(&sketches, ClusterMode::PerShard)?,
    };
    drop(sketches);
    table.write_jsonl(&run.join(CLUSTERS_FILE))?;
    let profile = duplication_profile(&table);
    run.write_json(PROFILE_FILE, &profile)?;
    log::info!(
        "{} documents in {} clusters (removal rate {:.4})",
        profile.total_docs,
        profile.total_clusters,
        profile.removal_rate
    );

    let mut annotated = None;
    if a.annotate {
        let mut w = run.corpus_writer(&a.corpus, a.input.tokenizer.into())?;
        for doc in read_corpus(&shards, opts) {
            let mut doc = doc?;
            doc.duplicate_count = Some(table.count(&doc.id)?);
            w.push(&doc)?;
        }
        annotated = Some(w.finish()?);
    }

    run.write_summary(
        "dedup",
        json!({
            "input_shards": shards.len(),
            "input_docs": profile.total_docs,
            "clusters": profile.total_clusters,
            "removal_rate": profile.removal_rate,
            "lsh_params": params,
            "skipped_lines": skipped,
            "annotated_corpus": annotated.as_ref().map(|_| CORPUS_DIR),
            "output_docs": annotated.as_ref().map(|m| m.doc_count),
            "output_tokens": annotated.as_ref().map(|m| m.token_count),
        }),
    )
}
