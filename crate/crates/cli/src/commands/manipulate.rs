use clap::{ArgGroup, Args, ValueEnum};
use dupcurate_core::count_manipulation::{
    apply_plan, plan_manipulation, CountStrategy, Goal, ManipulationConfig, ManipulationLevel, RankMetric,
};
use serde::Serialize;
use serde_json::json;

use crate::common::{load_docs, sum_tokens, ClusterArgs, CorpusOutArgs, InputArgs, OutputArgs, RunDir};
use crate::{CliError, CliResult, GlobalArgs};

pub const COUNT_FUNCTION_FILE: &str = "count_function.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Top documents get --max-copies copies, the rest none.
    Greedy,
    /// Equal buckets with --max-copies, ..., 1 copies.
    Linear,
    /// Equal buckets with the copy counts given by --steps.
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Worse of the score rank and the duplicate-count rank.
    Ensemble,
    Score,
    DupCount,
}

#[derive(Debug, Args, Serialize)]
#[command(group(ArgGroup::new("goal").args(["goal_docs", "token_budget"]).required(true)))]
pub struct ManipulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value_t = Strategy::Linear)]
    pub strategy: Strategy,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub max_copies: u32,
    /// Copy counts per bucket for --strategy custom, best bucket first.
    #[arg(long, value_delimiter = ',', num_args = 1.., value_name = "C1,C2,...")]
    pub steps: Vec<u32>,
    /// Output size in documents (expected).
    #[arg(long, value_name = "N")]
    pub goal_docs: Option<u64>,
    /// Output size in tokens (expected); the document goal is fitted to it.
    #[arg(long, value_name = "N")]
    pub token_budget: Option<u64>,
    #[arg(long, value_enum, default_value_t = Metric::Ensemble)]
    pub metric: Metric,
    /// Rank documents without a metric value last instead of failing.
    #[arg(long)]
    pub allow_missing_metric: bool,
    /// Emit exactly `target` copies of each content's representative instead
    /// of per-instance coin flips.
    #[arg(long)]
    pub unique_level: bool,
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

impl ManipulateArgs {
    fn config(&self) -> CliResult<ManipulationConfig> {
        let strategy = match self.strategy {
            Strategy::Greedy => CountStrategy::GreedyK {
                max_copies: self.max_copies,
            },
            Strategy::Linear => CountStrategy::LinearUpToK {
                max_copies: self.max_copies,
            },
            Strategy::Custom if self.steps.is_empty() => {
                return Err(CliError::Usage("--strategy custom needs --steps".into()))
            }
            Strategy::Custom => CountStrategy::CustomSteps {
                copies: self.steps.clone(),
            },
        };
        let goal = match (self.goal_docs, self.token_budget) {
            (Some(n), _) => Goal::Docs(n),
            (None, Some(t)) => Goal::Tokens(t),
            (None, None) => unreachable!("clap requires a goal"),
        };
        Ok(ManipulationConfig {
            strategy,
            goal,
            metric: match self.metric {
                Metric::Ensemble => RankMetric::Ensemble,
                Metric::Score => RankMetric::Score,
                Metric::DupCount => RankMetric::DupCount,
            },
            level: if self.unique_level {
                ManipulationLevel::Unique
            } else {
                ManipulationLevel::Instance
            },
            strict: !self.allow_missing_metric,
        })
    }
}

pub fn run(g: &GlobalArgs, a: &ManipulateArgs) -> CliResult<()> {
    let config = a.config()?;
    let shards = a.input.shards()?;
    let run = RunDir::create(&a.output.output)?;
    run.write_config("manipulate", g, a)?;
    let (docs, skipped) = load_docs(&shards, a.input.read_options(g), true)?;
    let table = a.clusters.table(&docs, g.seed)?;
    let plan = plan_manipulation(&docs, &table, &config)?;
    run.write_json(
        COUNT_FUNCTION_FILE,
        &json!({
            "count_function": plan.count_fn,
            "metric": config.metric,
            "level": config.level,
            "unique_docs": plan.ranked.len(),
            "expected_docs": plan.expected_docs,
            "expected_tokens": plan.expected_tokens,
        }),
    )?;
    let out = apply_plan(&docs, &plan, config.level, g.seed)?;
    let manifest = run.write_corpus(&out, &a.corpus, a.input.tokenizer.into())?;
    log::info!(
        "goal {} docs: emitted {} docs / {} tokens (expected {} / {})",
        plan.count_fn.goal_docs,
        manifest.doc_count,
        manifest.token_count,
        plan.expected_docs,
        plan.expected_tokens
    );
    run.write_summary(
        "manipulate",
        json!({
            "input_docs": docs.len(),
            "input_tokens": sum_tokens(&docs),
            "unique_docs": plan.ranked.len(),
            "goal_docs": plan.count_fn.goal_docs,
            "token_budget": a.token_budget,
            "expected_docs": plan.expected_docs,
            "expected_tokens": plan.expected_tokens,
            "output_docs": manifest.doc_count,
            "output_tokens": manifest.token_count,
            "level": config.level,
            "skipped_lines": skipped,
        }),
    )
}
