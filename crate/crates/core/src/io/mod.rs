//! On-disk formats and the pipeline configuration.
//!
//! Text formats print floats in their shortest round-tripping form
//! (exponent notation for very small or large magnitudes), so a
//! write followed by a read restores every value exactly. Parse errors carry
//! the line (text) or byte offset (binary) where the input went wrong.

mod config;
mod image;
mod jsonl;
mod report;
mod trajectory;

use thiserror::Error;

pub use config::{MaskingSection, PipelineConfig, SynthSection, TrackingSection};
pub use image::{read_flow, read_labelmap_pgm, read_mask_pgm, write_flow, write_labelmap_pgm, write_mask_pgm};
pub use jsonl::{
    read_intrinsics, read_labels, read_pairs, read_signals, read_tracklets, write_intrinsics, write_labels, write_pairs, write_signals,
    write_tracklets,
};
pub use report::{
    read_correspondences, read_report, sampson_report_table, trajectory_report_table, write_correspondences, write_report,
    ReportTable, AGGREGATE_ROW,
};
pub use trajectory::{read_scene_header, read_tum, write_scene_tum, write_tum, SceneHeader};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("byte {offset}: {message}")]
    Byte { offset: usize, message: String },
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch { expected: (u32, u32), got: (u32, u32) },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FormatError {
    fn line(line: usize, message: impl Into<String>) -> Self {
        Self::Line { line, message: message.into() }
    }

    fn byte(offset: usize, message: impl Into<String>) -> Self {
        Self::Byte { offset, message: message.into() }
    }
}

/// Parses one whitespace- or comma-separated float field.
fn parse_f64(field: &str, line: usize, what: &str) -> Result<f64, FormatError> {
    field.trim().parse().map_err(|_| FormatError::line(line, format!("{what}: cannot parse {field:?} as a number")))
}
