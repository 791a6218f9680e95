use clap::{ArgGroup, Args, ValueEnum};
use dupcurate_core::sampling::{
    dedup_then_subsample, duplicate_aware_subsample, epoch_stream, floor_ceil_filter, uniform_subsample,
    ClusterKeepRule, SampleTarget,
};
use dupcurate_core::Document;
use serde::Serialize;
use serde_json::json;

use crate::common::{load_docs, sum_tokens, ClusterArgs, CorpusOutArgs, InputArgs, OutputArgs, RunDir};
use crate::{CliError, CliResult, GlobalArgs};

pub const EPOCH_INDEX_FILE: &str = "epoch_index.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    /// Uniform over documents, duplicates included.
    Uniform,
    /// One representative per cluster, then uniform.
    DedupThenSubsample,
    /// Keep or drop whole clusters (needs --fraction).
    DuplicateAware,
    /// Drop clusters smaller than --floor, keep at most --ceil members of the rest.
    FloorCeil,
    /// Repeat the corpus with a fresh shuffle per pass up to --total-tokens.
    Epochs,
}

#[derive(Debug, Args, Serialize)]
#[command(group(ArgGroup::new("target").args(["docs", "tokens", "fraction"])))]
pub struct SampleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value_t = SampleMode::Uniform)]
    pub mode: SampleMode,
    /// Keep exactly N documents.
    #[arg(long, value_name = "N")]
    pub docs: Option<u64>,
    /// Keep whole documents until N tokens are reached.
    #[arg(long, value_name = "N")]
    pub tokens: Option<u64>,
    /// Keep each document (or cluster) with this probability.
    #[arg(long, value_name = "F")]
    pub fraction: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub floor: u64,
    #[arg(long)]
    pub ceil: Option<u64>,
    /// Duplicate-aware variant: keep probability grows with cluster size.
    #[arg(long)]
    pub count_weighted: bool,
    /// Token budget for --mode epochs.
    #[arg(long, value_name = "N")]
    pub total_tokens: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub clusters: ClusterArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub corpus: CorpusOutArgs,
}

impl SampleArgs {
    fn target(&self) -> CliResult<SampleTarget> {
        match (self.docs, self.tokens, self.fraction) {
            (Some(n), None, None) => Ok(SampleTarget::Docs(n)),
            (None, Some(n), None) => Ok(SampleTarget::Tokens(n)),
            (None, None, Some(f)) => Ok(SampleTarget::Fraction(f)),
            _ => Err(CliError::Usage(format!(
                "--mode {} needs one of --docs, --tokens or --fraction",
                self.mode.to_possible_value().expect("named").get_name()
            ))),
        }
    }
}

pub fn run(g: &GlobalArgs, a: &SampleArgs) -> CliResult<()> {
    let shards = a.input.shards()?;
    let run = RunDir::create(&a.output.output)?;
    run.write_config("sample", g, a)?;
    let (docs, skipped) = load_docs(&shards, a.input.read_options(g), true)?;
    let seed = g.seed;

    let mut extra = json!({});
    let (out, candidates): (Vec<Document>, u64) = match a.mode {
        SampleMode::Uniform => (uniform_subsample(&docs, a.target()?, seed)?, docs.len() as u64),
        SampleMode::DedupThenSubsample => {
            let table = a.clusters.table(&docs, seed)?;
            let n = table.num_clusters() as u64;
            (dedup_then_subsample(&docs, &table, a.target()?, seed)?, n)
        }
        SampleMode::DuplicateAware => {
            let SampleTarget::Fraction(f) = a.target()? else {
                return Err(CliError::Usage("--mode duplicate-aware needs --fraction".into()));
            };
            let rule = if a.count_weighted {
                ClusterKeepRule::CountWeighted
            } else {
                ClusterKeepRule::Fraction
            };
            let table = a.clusters.table(&docs, seed)?;
            (duplicate_aware_subsample(&docs, &table, f, seed, rule)?, docs.len() as u64)
        }
        SampleMode::FloorCeil => {
            let table = a.clusters.table(&docs, seed)?;
            (floor_ceil_filter(&docs, &table, a.floor, a.ceil, seed)?, docs.len() as u64)
        }
        SampleMode::Epochs => {
            let total = a
                .total_tokens
                .ok_or_else(|| CliError::Usage("--mode epochs needs --total-tokens".into()))?;
            let stream = epoch_stream(&docs, total, seed)?;
            run.write_json(EPOCH_INDEX_FILE, &stream.index)?;
            extra = json!({ "epochs": stream.index.epochs, "epoch_index": EPOCH_INDEX_FILE });
            let out = stream.order.iter().map(|&p| docs[p].clone()).collect();
            (out, docs.len() as u64)
        }
    };

    let manifest = run.write_corpus(&out, &a.corpus, a.input.tokenizer.into())?;
    log::info!("kept {} of {} documents", manifest.doc_count, docs.len());
    let target = match a.mode {
        SampleMode::FloorCeil | SampleMode::Epochs => None,
        _ => Some(a.target()?),
    };
    let mut summary = json!({
        "mode": a.mode,
        "target": target,
        "input_docs": docs.len(),
        "input_tokens": sum_tokens(&docs),
        "candidates": candidates,
        "output_docs": manifest.doc_count,
        "output_tokens": manifest.token_count,
        "max_output_doc_tokens": out.iter().map(|d| d.token_count).max().unwrap_or(0),
        "skipped_lines": skipped,
    });
    if let (Some(s), serde_json::Value::Object(e)) = (summary.as_object_mut(), extra) {
        s.extend(e);
    }
    run.write_summary("sample", summary)
}
