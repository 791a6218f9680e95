//! Repetition arithmetic: epochs, tokens per parameter, Chinchilla
//! multipliers and the square-root weight-decay schedule for repeated data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_CHINCHILLA_RATIO: f64 = 20.0;
pub const DEFAULT_WEIGHT_DECAY: f64 = 0.0316;

/// Weight-decay multipliers that were actually tried at scale.
const WD_GRID: [f64; 3] = [1.0, 2.0, 3.0];

/// Compute-optimal token count: `round(ratio * params)`.
pub fn chinchilla_tokens(params: u64, ratio: f64) -> Result<u64> {
    if params == 0 || !(ratio > 0.0) {
        return Err(Error::invalid("params must be >= 1 and ratio > 0"));
    }
    Ok((ratio * params as f64).round() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Epochs {
    pub epochs: f64,
    pub full_passes: u64,
}

pub fn epochs(total_tokens: u64, unique_tokens: u64) -> Result<Epochs> {
    if unique_tokens == 0 {
        return Err(Error::invalid("unique token count must be >= 1"));
    }
    if total_tokens == 0 {
        return Err(Error::invalid("total token count must be >= 1"));
    }
    Ok(Epochs {
        epochs: total_tokens as f64 / unique_tokens as f64,
        full_passes: total_tokens.div_ceil(unique_tokens),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightDecayMode {
    /// `base * sqrt(repeats)`.
    #[default]
    Continuous,
    /// Multiplier `sqrt(repeats)` snapped to the nearest of 1, 2, 3.
    Grid,
}

pub fn weight_decay_multiplier(repeats: f64, mode: WeightDecayMode) -> Result<f64> {
    if !(repeats >= 1.0) || !repeats.is_finite() {
        return Err(Error::invalid(format!("repeats must be >= 1, got {repeats}")));
    }
    let m = repeats.sqrt();
    Ok(match mode {
        WeightDecayMode::Continuous => m,
        WeightDecayMode::Grid => WD_GRID
            .into_iter()
            .min_by(|a, b| (a - m).abs().total_cmp(&(b - m).abs()))
            .expect("non-empty grid"),
    })
}

/// Weight decay for training on data repeated `repeats` times.
pub fn weight_decay(base: f64, repeats: f64, mode: WeightDecayMode) -> Result<f64> {
    if !(base > 0.0) {
        return Err(Error::invalid("base weight decay must be > 0"));
    }
    Ok(base * weight_decay_multiplier(repeats, mode)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanInputs {
    pub params: u64,
    pub unique_tokens: u64,
    pub total_tokens: u64,
    pub base_weight_decay: f64,
    pub chinchilla_ratio: f64,
    pub weight_decay_mode: WeightDecayMode,
}

impl PlanInputs {
    pub fn new(params: u64, unique_tokens: u64, total_tokens: u64) -> Self {
        PlanInputs {
            params,
            unique_tokens,
            total_tokens,
            base_weight_decay: DEFAULT_WEIGHT_DECAY,
            chinchilla_ratio: DEFAULT_CHINCHILLA_RATIO,
            weight_decay_mode: WeightDecayMode::Continuous,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputeAllocation {
    pub inputs: PlanInputs,
    pub epochs: f64,
    pub full_passes: u64,
    pub tokens_per_param: f64,
    pub chinchilla_tokens: u64,
    pub chinchilla_multiplier: f64,
    pub weight_decay_multiplier: f64,
    pub recommended_weight_decay: f64,
}

pub fn allocation_report(inputs: PlanInputs) -> Result<ComputeAllocation> {
    let e = epochs(inputs.total_tokens, inputs.unique_tokens)?;
    let chin = chinchilla_tokens(inputs.params, inputs.chinchilla_ratio)?;
    // Fewer total than unique tokens means less than one pass: no repetition.
    let repeats = e.epochs.max(1.0);
    let mult = weight_decay_multiplier(repeats, inputs.weight_decay_mode)?;
    let wd = weight_decay(inputs.base_weight_decay, repeats, inputs.weight_decay_mode)?;
    Ok(ComputeAllocation {
        inputs,
        epochs: e.epochs,
        full_passes: e.full_passes,
        tokens_per_param: inputs.total_tokens as f64 / inputs.params as f64,
        chinchilla_tokens: chin,
        chinchilla_multiplier: inputs.total_tokens as f64 / (inputs.chinchilla_ratio * inputs.params as f64),
        weight_decay_multiplier: mult,
        recommended_weight_decay: wd,
    })
}
