use std::path::PathBuf;

use clap::Args;
use dupcurate_core::corpus_io::{resolve_inputs, ReadOptions};
use dupcurate_core::keyed::{self, Stream};
use dupcurate_core::minhash_dedup::{cluster, exact_cluster_sketches, read_sketch_cache, DocSketch, Sketcher};
use dupcurate_core::stats_report::{
    dup_by_score, duplication_growth_curve, duplication_profile, emit_report, score_distribution, BinEdges,
    OutOfRange, Report,
};
use dupcurate_core::{ClusterMode, DuplicateClusterTable, LshParams};
use serde::Serialize;
use serde_json::json;

use crate::common::{load_docs, sketch_shards, ClusterArgs, Kind, OutputArgs, RunDir, Tokenizer};
use crate::{CliError, CliResult, GlobalArgs};

const DEFAULT_SCORE_BINS: usize = 20;

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    /// Corpus shards, directories or manifests. Needed unless every
    /// requested statistic can come from --signature-cache/--clusters.
    #[arg(long, num_args = 1.., value_name = "PATH")]
    pub input: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Tokenizer::Whitespace)]
    pub tokenizer: Tokenizer,
    #[command(flatten)]
    #[serde(flatten)]
    pub clusters: ClusterArgs,
    /// Sketch cache written by `dedup`; avoids re-reading the corpus text.
    #[arg(long, value_name = "FILE")]
    pub signature_cache: Option<PathBuf>,
    /// Cluster-size histogram (the default when nothing else is requested).
    #[arg(long)]
    pub profile: bool,
    /// Removal rate of growing shard prefixes, at N evenly spaced points.
    #[arg(long, value_name = "N")]
    pub growth_steps: Option<usize>,
    /// Order shards randomly (with this seed) for the growth curve.
    #[arg(long, value_name = "SEED")]
    pub shuffle_shards: Option<u64>,
    /// Quality-score histogram with N bins.
    #[arg(long, value_name = "N", num_args = 0..=1, default_missing_value = "20")]
    pub score_bins: Option<usize>,
    /// Fixed score range for the bins instead of the observed one.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    pub score_range: Option<Vec<f64>>,
    /// Mean duplicate count per score bin.
    #[arg(long)]
    pub dup_by_score: bool,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

fn need_input(a: &StatsArgs, what: &str) -> CliResult<Vec<PathBuf>> {
    if a.input.is_empty() {
        return Err(CliError::Usage(format!("--input is required for {what}")));
    }
    Ok(resolve_inputs(&a.input)?)
}

/// Sketches grouped by shard, from the cache or by reading the corpus.
fn shard_sketches(a: &StatsArgs, g: &GlobalArgs, opts: ReadOptions) -> CliResult<(LshParams, Vec<Vec<DocSketch>>)> {
    if let Some(cache) = &a.signature_cache {
        let (params, sketches) = read_sketch_cache(cache)?;
        let declared = if a.input.is_empty() {
            None
        } else {
            Some(resolve_inputs(&a.input)?.len())
        };
        let seen = sketches.iter().map(|s| s.shard_index + 1).max().unwrap_or(0);
        let n = declared.unwrap_or(seen);
        if seen > n {
            return Err(CliError::Data(format!(
                "sketch cache references shard {} but the input has {n} shards",
                seen - 1
            )));
        }
        let mut by_shard = vec![Vec::new(); n];
        for s in sketches {
            by_shard[s.shard_index].push(s);
        }
        return Ok((params, by_shard));
    }
    let shards = need_input(a, "sketching")?;
    let params = a.clusters.lsh.params(g.seed);
    let (by_shard, _) = sketch_shards(&shards, opts, &Sketcher::new(params)?)?;
    Ok((params, by_shard))
}

pub fn run(g: &GlobalArgs, a: &StatsArgs) -> CliResult<()> {
    if a.growth_steps.is_some_and(|n| n < 2) {
        return Err(CliError::Usage("--growth-steps must be at least 2".into()));
    }
    if a.score_bins == Some(0) {
        return Err(CliError::Usage("--score-bins must be at least 1".into()));
    }
    let want_profile = a.profile || (a.growth_steps.is_none() && a.score_bins.is_none() && !a.dup_by_score);
    let want_scores = a.score_bins.is_some();
    let opts = ReadOptions {
        tokenizer: a.tokenizer.into(),
        policy: g.policy(),
    };
    let run = RunDir::create(&a.output.output)?;
    run.write_config("stats", g, a)?;

    let needs_sketches = a.growth_steps.is_some() || ((want_profile || a.dup_by_score) && a.clusters.clusters.is_none());
    let (params, mut by_shard) = if needs_sketches {
        let (p, s) = shard_sketches(a, g, opts)?;
        (Some(p), s)
    } else {
        (None, Vec::new())
    };

    let table: Option<DuplicateClusterTable> = if want_profile || a.dup_by_score {
        Some(match &a.clusters.clusters {
            Some(path) => DuplicateClusterTable::read_jsonl(path, a.clusters.cluster_kind.into())?,
            None => {
                let all: Vec<DocSketch> = by_shard.iter().flatten().cloned().collect();
                match a.clusters.cluster_kind {
                    Kind::Fuzzy => cluster(&all, ClusterMode::Global)?,
                    Kind::Exact => exact_cluster_sketches(&all, ClusterMode::Global)?,
                }
            }
        })
    } else {
        None
    };

    let mut report = Report {
        profile: table.as_ref().filter(|_| want_profile).map(duplication_profile),
        ..Report::default()
    };

    if let Some(steps) = a.growth_steps {
        let n = by_shard.len();
        if let Some(seed) = a.shuffle_shards {
            let mut order: Vec<(u64, usize)> = (0..n)
                .map(|i| (keyed::bits(seed, Stream::Shuffle, &i.to_string(), 0), i))
                .collect();
            order.sort_unstable();
            let mut slots: Vec<Option<Vec<DocSketch>>> = by_shard.into_iter().map(Some).collect();
            by_shard = order.into_iter().map(|(_, i)| slots[i].take().expect("permutation")).collect();
        }
        report.growth_curve = Some(duplication_growth_curve(by_shard.into_iter().map(Ok), n, steps)?);
    }

    if want_scores || a.dup_by_score {
        let shards = need_input(a, "score statistics")?;
        let (docs, _) = load_docs(&shards, opts, false)?;
        let bins = a.score_bins.unwrap_or(DEFAULT_SCORE_BINS);
        let (edges, oor) = match a.score_range.as_deref() {
            Some(&[lo, hi]) => (BinEdges::equal_width(lo, hi, bins)?, OutOfRange::Overflow),
            _ => (BinEdges::observed(&docs, bins)?, OutOfRange::Clamp),
        };
        if want_scores {
            report.score_histogram = Some(score_distribution(&docs, &edges, oor, false)?);
        }
        if a.dup_by_score {
            let table = table.as_ref().expect("table computed for dup-by-score");
            report.dup_by_score = Some(dup_by_score(&docs, table, &edges)?);
        }
    }

    let written = emit_report(&report, &run.path)?;
    let names: Vec<String> = written
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    run.write_summary(
        "stats",
        json!({
            "files": names,
            "lsh_params": params,
            "docs": table.as_ref().map(|t| t.len()),
            "clusters": table.as_ref().map(|t| t.num_clusters()),
            "removal_rate": report.profile.as_ref().map(|p| p.removal_rate),
            "growth_points": report.growth_curve.as_ref().map(|c| c.len()),
        }),
    )
}
