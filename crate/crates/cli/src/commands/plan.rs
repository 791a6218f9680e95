use std::path::PathBuf;

use clap::Args;
use dupcurate_core::budget_planner::{allocation_report, PlanInputs, WeightDecayMode};
use serde::Serialize;
use serde_json::json;

use crate::common::RunDir;
use crate::{CliError, CliResult, GlobalArgs};

pub const PLAN_FILE: &str = "plan.json";

/// Accepts integers and scientific notation such as `12.6e9`.
fn count(s: &str) -> Result<u64, String> {
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    let x: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if !x.is_finite() || x < 0.0 || x > u64::MAX as f64 {
        return Err(format!("out of range: {s}"));
    }
    Ok(x.round() as u64)
}

#[derive(Debug, Args, Serialize)]
pub struct PlanArgs {
    /// Model parameters.
    #[arg(long, value_parser = count)]
    pub params: u64,
    /// Unique tokens available.
    #[arg(long, value_parser = count)]
    pub unique_tokens: u64,
    /// Tokens seen during training.
    #[arg(long, value_parser = count)]
    pub total_tokens: u64,
    /// Weight decay tuned for a single pass.
    #[arg(long, default_value_t = 0.0316)]
    pub base_wd: f64,
    /// Chinchilla tokens per parameter.
    #[arg(long, default_value_t = 20.0)]
    pub ratio: f64,
    /// Snap the weight-decay multiplier to 1, 2 or 3 instead of sqrt(repeats).
    #[arg(long)]
    pub wd_grid: bool,
    /// Also write the plan and run records into this directory.
    #[arg(long, value_name = "DIR")]
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

pub fn run(g: &GlobalArgs, a: &PlanArgs) -> CliResult<()> {
    let inputs = PlanInputs {
        base_weight_decay: a.base_wd,
        chinchilla_ratio: a.ratio,
        weight_decay_mode: if a.wd_grid {
            WeightDecayMode::Grid
        } else {
            WeightDecayMode::Continuous
        },
        ..PlanInputs::new(a.params, a.unique_tokens, a.total_tokens)
    };
    let report = allocation_report(inputs).map_err(|e| CliError::Usage(e.to_string()))?;
    let text = serde_json::to_string_pretty(&report).map_err(dupcurate_core::Error::from)?;
    println!("{text}");
    if let Some(dir) = &a.output {
        let run = RunDir::create(dir)?;
        run.write_config("plan", g, a)?;
        run.write_json(PLAN_FILE, &report)?;
        run.write_summary(
            "plan",
            json!({
                "epochs": report.epochs,
                "recommended_weight_decay": report.recommended_weight_decay,
                "chinchilla_multiplier": report.chinchilla_multiplier,
            }),
        )?;
    }
    Ok(())
}
