//! Per-video suitability scoring: sub-scores from measured signals, sigmoid
//! smoothing, averaging, the staged cascade, and precision/recall evaluation.

mod cascade;
mod pr;
mod score;
mod signals;

pub use cascade::{cascade, CascadeOutcome, Stage, StageConfig, StageResult};
pub use pr::{average_precision, pr_curve, precision_at_recall, raw_average_precision, PrPoint};
pub use score::{
    aggregate, score_classifier, score_distortion, score_flow, score_focal, score_masking, score_signals,
    score_tracking, score_vlm, smooth_margin, FilterScore, FilterThresholds,
};
pub use signals::{Component, FilterSignals, LabeledVideo, VLM_QUESTIONS};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("series needs at least {needed} samples, got {got}")]
    SeriesTooShort { needed: usize, got: usize },
    #[error("signal for {0:?} is missing")]
    MissingSignal(Component),
    #[error("invalid signal {field}: {reason}")]
    InvalidSignal { field: &'static str, reason: String },
    #[error("labels contain no positive video")]
    NoPositives,
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },
}
