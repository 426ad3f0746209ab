use serde::{Deserialize, Serialize};

use super::FilterError;

/// Filter components, in the order they are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Classifier,
    Distortion,
    Focal,
    Masking,
    Flow,
    Tracking,
    Vlm,
}

impl Component {
    pub const ALL: [Component; 7] = [
        Component::Classifier,
        Component::Distortion,
        Component::Focal,
        Component::Masking,
        Component::Flow,
        Component::Tracking,
        Component::Vlm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::Classifier => "classifier",
            Component::Distortion => "distortion",
            Component::Focal => "focal",
            Component::Masking => "masking",
            Component::Flow => "flow",
            Component::Tracking => "tracking",
            Component::Vlm => "vlm",
        }
    }
}

/// The eight yes/no rejection questions, in answer order. `true` means the
/// rejection reason is present.
pub const VLM_QUESTIONS: [&str; 8] = [
    "ambiguous_reference",
    "blurry_background",
    "distorted_frames",
    "long_focal_length",
    "static_scene",
    "cartoon",
    "post_processed",
    "children_present",
];

fn default_signal_fps() -> f64 {
    6.0
}

/// Raw per-video measurements. Distances are fractions of the frame diagonal,
/// focal lengths are pixels at 720p. Absent signals are `None`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterSignals {
    pub id: String,
    /// Sampling rate of `flow_seq` and `focal_seq`.
    #[serde(default = "default_signal_fps")]
    pub signal_fps: f64,
    #[serde(default)]
    pub flow_seq: Option<Vec<f64>>,
    #[serde(default)]
    pub focal_seq: Option<Vec<f64>>,
    #[serde(default)]
    pub distortion_alpha: Option<f64>,
    #[serde(default)]
    pub classifier_acceptable: Option<f64>,
    #[serde(default)]
    pub classifier_interaction: Option<f64>,
    #[serde(default)]
    pub mask_fraction_seq: Option<Vec<f64>>,
    #[serde(default)]
    pub track_loss_seq: Option<Vec<f64>>,
    #[serde(default)]
    pub track_median_move: Option<f64>,
    /// Median movement per tracking window; falls back to the whole-video median when empty.
    #[serde(default)]
    pub track_window_medians: Vec<f64>,
    #[serde(default)]
    pub vlm_answers: Option<[bool; 8]>,
}

impl FilterSignals {
    pub fn validate(&self) -> Result<(), FilterError> {
        fn unit(field: &'static str, x: f64) -> Result<(), FilterError> {
            if (0.0..=1.0).contains(&x) {
                Ok(())
            } else {
                Err(FilterError::InvalidSignal { field, reason: format!("{x} outside [0, 1]") })
            }
        }
        fn unit_seq(field: &'static str, xs: &Option<Vec<f64>>) -> Result<(), FilterError> {
            if let Some(xs) = xs {
                if xs.is_empty() {
                    return Err(FilterError::InvalidSignal { field, reason: "empty series".into() });
                }
                xs.iter().try_for_each(|&x| unit(field, x))?;
            }
            Ok(())
        }
        if !(self.signal_fps > 0.0) {
            return Err(FilterError::InvalidSignal { field: "signal_fps", reason: "must be positive".into() });
        }
        unit_seq("flow_seq", &self.flow_seq)?;
        unit_seq("mask_fraction_seq", &self.mask_fraction_seq)?;
        unit_seq("track_loss_seq", &self.track_loss_seq)?;
        for (field, v) in [
            ("classifier_acceptable", self.classifier_acceptable),
            ("classifier_interaction", self.classifier_interaction),
            ("track_median_move", self.track_median_move),
        ] {
            if let Some(v) = v {
                unit(field, v)?;
            }
        }
        self.track_window_medians.iter().try_for_each(|&x| unit("track_window_medians", x))?;
        if let Some(a) = self.distortion_alpha {
            if !(a >= 0.0) {
                return Err(FilterError::InvalidSignal { field: "distortion_alpha", reason: format!("{a} is negative") });
            }
        }
        if let Some(f) = &self.focal_seq {
            if f.iter().any(|&x| !(x > 0.0)) {
                return Err(FilterError::InvalidSignal { field: "focal_seq", reason: "focal lengths must be positive".into() });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledVideo {
    pub id: String,
    pub suitable: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_defaults_fill_missing_signals() {
        let s: FilterSignals = serde_json::from_str(r#"{"id": "v1", "distortion_alpha": 0.3}"#).unwrap();
        assert_eq!(s.signal_fps, 6.0);
        assert!(s.flow_seq.is_none());
        assert_eq!(s.distortion_alpha, Some(0.3));
        s.validate().unwrap();
    }

    #[test]
    fn rejects_out_of_range_fractions() {
        let s = FilterSignals { id: "x".into(), signal_fps: 6.0, flow_seq: Some(vec![0.1, 1.5]), ..Default::default() };
        assert!(matches!(s.validate(), Err(FilterError::InvalidSignal { field: "flow_seq", .. })));
        let s = FilterSignals { id: "x".into(), signal_fps: 6.0, distortion_alpha: Some(-0.1), ..Default::default() };
        assert!(s.validate().is_err());
    }
}
