use serde::{Deserialize, Serialize};

use super::score::score_component;
use super::{Component, FilterError, FilterScore, FilterSignals, FilterThresholds};

/// One cascade stage: the components it adds and the threshold the running
/// mean must reach.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub components: Vec<Component>,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub stages: Vec<Stage>,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self::with_intermediate_threshold(0.70, FilterThresholds::default().final_threshold)
    }
}

impl StageConfig {
    /// Classifier, flow, focal; then distortion; then tracking; then masking;
    /// finally the VLM with the strict threshold on all seven components.
    pub fn with_intermediate_threshold(loose: f64, strict: f64) -> Self {
        use Component::*;
        let stage = |components: Vec<Component>, threshold| Stage { components, threshold };
        Self {
            stages: vec![
                stage(vec![Classifier, Flow, Focal], loose),
                stage(vec![Distortion], loose),
                stage(vec![Tracking], loose),
                stage(vec![Masking], loose),
                stage(vec![Vlm], strict),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageResult {
    pub stage: usize,
    pub running_mean: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CascadeOutcome {
    pub stages: Vec<StageResult>,
    /// Components evaluated before the cascade stopped.
    pub score: FilterScore,
    pub included: bool,
    pub excluded_at: Option<usize>,
}

/// Runs the stages in order, stopping at the first stage whose running mean
/// falls below its threshold. Later components are never scored.
pub fn cascade(t: &FilterThresholds, signals: &FilterSignals, config: &StageConfig) -> Result<CascadeOutcome, FilterError> {
    signals.validate()?;
    let mut score = FilterScore::default();
    let mut stages = Vec::with_capacity(config.stages.len());
    for (i, stage) in config.stages.iter().enumerate() {
        for &c in &stage.components {
            let v = score_component(t, signals, c)?.ok_or(FilterError::MissingSignal(c))?;
            score.insert(c, v);
        }
        let running_mean = score.aggregate();
        let passed = running_mean >= stage.threshold;
        stages.push(StageResult { stage: i, running_mean, passed });
        if !passed {
            return Ok(CascadeOutcome { stages, score, included: false, excluded_at: Some(i) });
        }
    }
    Ok(CascadeOutcome { stages, score, included: true, excluded_at: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filtering::{aggregate, score_signals};

    fn good() -> FilterSignals {
        FilterSignals {
            id: "good".into(),
            signal_fps: 6.0,
            flow_seq: Some(vec![0.04; 36]),
            focal_seq: Some(vec![900.0; 36]),
            distortion_alpha: Some(0.2),
            classifier_acceptable: Some(0.9),
            classifier_interaction: Some(0.8),
            mask_fraction_seq: Some(vec![0.2; 10]),
            track_loss_seq: Some(vec![0.02; 30]),
            track_median_move: Some(0.15),
            track_window_medians: vec![0.15, 0.14],
            vlm_answers: Some([false; 8]),
        }
    }

    /// Flow series with every flow indicator failing: long still stretch
    /// (low mean), one sustained burst (window mean) ending in a spike.
    fn failing_flow() -> Vec<f64> {
        let mut f = vec![0.0005; 120];
        f.extend([0.16, 0.16, 0.16, 0.16, 0.16, 0.9]);
        f
    }

    #[test]
    fn flow_failure_excluded_at_first_stage() {
        let t = FilterThresholds::default();
        let mut s = good();
        s.flow_seq = Some(failing_flow());
        assert!(crate::filtering::score_flow(&t, &failing_flow(), 6.0) < 1e-3);
        // Two passing components keep a three-component mean at 2/3, so the
        // first stage needs a threshold above that to stop the video.
        let out = cascade(&t, &s, &StageConfig::default()).unwrap();
        assert_eq!(out.excluded_at, Some(0));
        assert!(!out.included);
        assert!(out.score.get(Component::Vlm).is_none());
        assert!(out.score.get(Component::Distortion).is_none());
        // the full evaluation agrees the video is out
        let full = score_signals(&t, &s).unwrap();
        assert!(!aggregate(&full, 0.910));
        // at 0.5 the first stage cannot reject on flow alone
        let loose = cascade(&t, &s, &StageConfig::with_intermediate_threshold(0.5, 0.910)).unwrap();
        assert_eq!(loose.excluded_at, Some(4));
    }

    #[test]
    fn zero_thresholds_reduce_to_one_shot() {
        let t = FilterThresholds::default();
        let mut s = good();
        s.flow_seq = Some(failing_flow());
        let cfg = StageConfig::with_intermediate_threshold(0.0, 0.910);
        let out = cascade(&t, &s, &cfg).unwrap();
        assert_eq!(out.included, aggregate(&score_signals(&t, &s).unwrap(), 0.910));
        assert_eq!(out.stages.len(), 5);
    }

    #[test]
    fn passing_video_matches_one_shot() {
        let t = FilterThresholds::default();
        let out = cascade(&t, &good(), &StageConfig::default()).unwrap();
        let full = score_signals(&t, &good()).unwrap();
        assert!(out.included);
        assert_eq!(out.score, full);
        assert_eq!(out.included, aggregate(&full, 0.910));
    }

    #[test]
    fn missing_signal_at_stage() {
        let mut s = good();
        s.distortion_alpha = None;
        let r = cascade(&FilterThresholds::default(), &s, &StageConfig::default());
        assert_eq!(r, Err(FilterError::MissingSignal(Component::Distortion)));
        // absent VLM is fine when the cascade stops earlier
        let mut s = good();
        s.vlm_answers = None;
        s.flow_seq = Some(vec![0.001; 36]);
        s.classifier_acceptable = Some(0.0);
        s.classifier_interaction = Some(0.0);
        let out = cascade(&FilterThresholds::default(), &s, &StageConfig::default()).unwrap();
        assert_eq!(out.excluded_at, Some(0));
    }
}
