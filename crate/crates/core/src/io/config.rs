use serde::{Deserialize, Serialize};

use super::FormatError;
use crate::eval::EvalConfig;
use crate::filtering::{FilterThresholds, StageConfig};
use crate::masking::MotionConfig;
use crate::sfm::SfmConfig;
use crate::synth::{SceneConfig, TrackConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingSection {
    pub grid_rows: u32,
    pub grid_cols: u32,
    pub stride_seconds: f64,
    pub length_seconds: f64,
}

impl Default for TrackingSection {
    fn default() -> Self {
        Self { grid_rows: 42, grid_cols: 42, stride_seconds: 5.0 / 12.0, length_seconds: 2.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskingSection {
    /// Segment every this many frames when masking for pose estimation.
    pub keyframe_stride: u32,
    /// Frames each keyframe mask is held forward.
    pub propagate_frames: u32,
    /// Masking interval of the filtering pass.
    pub filter_interval_seconds: f64,
    pub motion: MotionConfig,
}

impl Default for MaskingSection {
    fn default() -> Self {
        Self { keyframe_stride: 6, propagate_frames: 6, filter_interval_seconds: 1.0, motion: MotionConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub scene: SceneConfig,
    pub tracks: TrackConfig,
}

/// Every tunable of the pipeline in one TOML document. Missing keys take
/// their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Frame rate of extracted videos; overrides `sfm.fps`.
    pub fps: f64,
    pub tracking: TrackingSection,
    pub masking: MaskingSection,
    pub filter: FilterThresholds,
    pub stages: StageConfig,
    pub sfm: SfmConfig,
    pub eval: EvalConfig,
    pub synth: SynthSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            fps: 12.0,
            tracking: TrackingSection::default(),
            masking: MaskingSection::default(),
            filter: FilterThresholds::default(),
            stages: StageConfig::default(),
            sfm: SfmConfig::default(),
            eval: EvalConfig::default(),
            synth: SynthSection::default(),
        }
    }
}

fn positive(name: &str, x: f64) -> Result<(), FormatError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(FormatError::Config(format!("{name} must be positive, got {x}")))
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, FormatError> {
        let config: Self = toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(0, |s| text[..s.start].matches('\n').count() + 1);
            FormatError::line(line, e.message().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration always serializes")
    }

    /// SfM settings with the video frame rate applied.
    pub fn sfm_config(&self) -> SfmConfig {
        SfmConfig { fps: self.fps, ..self.sfm.clone() }
    }

    pub fn validate(&self) -> Result<(), FormatError> {
        positive("fps", self.fps)?;
        let t = &self.tracking;
        positive("tracking.grid_rows", t.grid_rows as f64)?;
        positive("tracking.grid_cols", t.grid_cols as f64)?;
        positive("tracking.stride_seconds", t.stride_seconds)?;
        positive("tracking.length_seconds", t.length_seconds)?;
        let m = &self.masking;
        positive("masking.keyframe_stride", m.keyframe_stride as f64)?;
        positive("masking.filter_interval_seconds", m.filter_interval_seconds)?;
        positive("masking.motion.threshold_divisor", m.motion.threshold_divisor)?;
        positive("masking.motion.sample_stride", m.motion.sample_stride as f64)?;
        positive("masking.motion.ransac.threshold_px", m.motion.ransac.threshold_px)?;
        let f = &self.filter;
        for (name, x) in [
            ("filter.classifier_acceptable_min", f.classifier_acceptable_min),
            ("filter.classifier_interaction_min", f.classifier_interaction_min),
            ("filter.distortion_alpha_max", f.distortion_alpha_max),
            ("filter.focal_spread_max", f.focal_spread_max),
            ("filter.focal_window_change_max", f.focal_window_change_max),
            ("filter.focal_p80_max", f.focal_p80_max),
            ("filter.mask_p90_max", f.mask_p90_max),
            ("filter.flow_mean_min", f.flow_mean_min),
            ("filter.flow_spike_sigmas", f.flow_spike_sigmas),
            ("filter.flow_window_mean_max", f.flow_window_mean_max),
            ("filter.track_loss_max", f.track_loss_max),
            ("filter.track_move_min", f.track_move_min),
            ("filter.sigmoid_slope", f.sigmoid_slope),
            ("filter.final_threshold", f.final_threshold),
        ] {
            positive(name, x)?;
        }
        let s = &self.sfm;
        positive("sfm.view_graph.min_matches", s.view_graph.min_matches as f64)?;
        positive("sfm.view_graph.essential.threshold_px", s.view_graph.essential.threshold_px)?;
        positive("sfm.landmarks.max_reprojection_px", s.landmarks.max_reprojection_px)?;
        positive("sfm.bundle.huber_delta", s.bundle.huber_delta)?;
        positive("sfm.min_registered_fraction", s.min_registered_fraction)?;
        positive("sfm.max_attempts", s.max_attempts as f64)?;
        let e = &self.eval;
        if e.thresholds_px.is_empty() {
            return Err(FormatError::Config("eval.thresholds_px must not be empty".into()));
        }
        for &x in &e.thresholds_px {
            positive("eval.thresholds_px", x)?;
        }
        positive("eval.gate_radius_px", e.gate_radius_px)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_survive_toml() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        assert_eq!(PipelineConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(PipelineConfig::from_toml("").unwrap(), c);
    }

    #[test]
    fn quoted_operating_values() {
        let c = PipelineConfig::default();
        assert_eq!(c.fps, 12.0);
        assert_eq!(c.tracking.grid_rows * c.tracking.grid_cols, 1764);
        assert_eq!((c.tracking.stride_seconds * c.fps).round(), 5.0);
        assert_eq!(c.tracking.length_seconds * c.fps, 30.0);
        assert_eq!((c.masking.keyframe_stride, c.masking.propagate_frames), (6, 6));
        assert_eq!(c.masking.motion.threshold_divisor, 8100.0);
        assert_eq!(c.filter.final_threshold, 0.910);
        assert_eq!(c.eval.thresholds_px, vec![5.0, 10.0, 30.0]);
        assert_eq!(c.sfm.min_registered_fraction, 0.8);
    }

    #[test]
    fn partial_documents_and_errors() {
        let c = PipelineConfig::from_toml("fps = 30.0\n[eval]\nthresholds_px = [15.0, 30.0, 60.0]\n").unwrap();
        assert_eq!(c.fps, 30.0);
        assert_eq!(c.eval.thresholds_px.len(), 3);
        assert_eq!(c.sfm_config().fps, 30.0);
        assert!(matches!(PipelineConfig::from_toml("fps = 12.0\n\n[tracking]\ngrid_rowz = 3\n"), Err(FormatError::Line { line: 4, .. })));
        assert!(matches!(PipelineConfig::from_toml("fps = -1.0\n"), Err(FormatError::Config(_))));
        assert!(matches!(PipelineConfig::from_toml("[eval]\nthresholds_px = []\n"), Err(FormatError::Config(_))));
    }
}
