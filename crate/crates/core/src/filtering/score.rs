use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Component, FilterError, FilterSignals};
use crate::stats;

/// Every filter constant. Defaults are the operating values of the curation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterThresholds {
    pub classifier_acceptable_min: f64,
    pub classifier_interaction_min: f64,
    pub distortion_alpha_max: f64,
    /// `(p90 - p10) / mean` of the focal series.
    pub focal_spread_max: f64,
    /// Relative focal change inside any one-second window.
    pub focal_window_change_max: f64,
    pub focal_p80_max: f64,
    pub mask_p90_max: f64,
    pub flow_mean_min: f64,
    /// Largest step allowed, in standard deviations above the mean.
    pub flow_spike_sigmas: f64,
    pub flow_window_mean_max: f64,
    pub track_loss_max: f64,
    pub track_move_min: f64,
    pub sigmoid_slope: f64,
    pub final_threshold: f64,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        Self {
            classifier_acceptable_min: 0.55,
            classifier_interaction_min: 0.20,
            distortion_alpha_max: 1.00,
            focal_spread_max: 0.40,
            focal_window_change_max: 0.20,
            focal_p80_max: 1400.0,
            mask_p90_max: 0.80,
            flow_mean_min: 0.02127,
            flow_spike_sigmas: 4.0,
            flow_window_mean_max: 0.15,
            track_loss_max: 0.50,
            track_move_min: 0.05,
            sigmoid_slope: 50.0,
            final_threshold: 0.910,
        }
    }
}

impl FilterThresholds {
    fn at_least(&self, x: f64, threshold: f64) -> f64 {
        smooth_margin_with(self.sigmoid_slope, (x - threshold) / threshold)
    }

    fn at_most(&self, x: f64, threshold: f64) -> f64 {
        smooth_margin_with(self.sigmoid_slope, (threshold - x) / threshold)
    }
}

/// Logistic smoothing of a relative margin (positive = pass) with the default slope.
pub fn smooth_margin(margin: f64) -> f64 {
    smooth_margin_with(FilterThresholds::default().sigmoid_slope, margin)
}

fn smooth_margin_with(slope: f64, margin: f64) -> f64 {
    1.0 / (1.0 + (-slope * margin).exp())
}

pub fn score_classifier(t: &FilterThresholds, acceptable: f64, interaction: f64) -> f64 {
    0.5 * (t.at_least(acceptable, t.classifier_acceptable_min) + t.at_least(interaction, t.classifier_interaction_min))
}

pub fn score_distortion(t: &FilterThresholds, alpha: f64) -> f64 {
    t.at_most(alpha, t.distortion_alpha_max)
}

/// Samples spanning one second of a series sampled at `fps` (both endpoints).
fn second_span(fps: f64) -> usize {
    (fps.round() as usize).max(1) + 1
}

/// Samples of per-step values falling inside one second.
fn second_steps(fps: f64) -> usize {
    (fps.round() as usize).max(1)
}

pub fn score_focal(t: &FilterThresholds, focal_seq: &[f64], fps: f64) -> Result<f64, FilterError> {
    if focal_seq.len() < 2 {
        return Err(FilterError::SeriesTooShort { needed: 2, got: focal_seq.len() });
    }
    let mut sorted = focal_seq.to_vec();
    sorted.sort_by(f64::total_cmp);
    let spread = (stats::percentile_sorted(&sorted, 90.0) - stats::percentile_sorted(&sorted, 10.0)) / stats::mean(focal_seq);
    let window_change = stats::windows(focal_seq, second_span(fps))
        .map(|w| {
            let (lo, hi) = w.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
            (hi - lo) / lo
        })
        .fold(0.0, f64::max);
    let p80 = stats::percentile_sorted(&sorted, 80.0);
    Ok((t.at_most(spread, t.focal_spread_max)
        + t.at_most(window_change, t.focal_window_change_max)
        + t.at_most(p80, t.focal_p80_max))
        / 3.0)
}

pub fn score_masking(t: &FilterThresholds, mask_fraction_seq: &[f64]) -> f64 {
    t.at_most(stats::percentile(mask_fraction_seq, 90.0), t.mask_p90_max)
}

pub fn score_flow(t: &FilterThresholds, flow_seq: &[f64], fps: f64) -> f64 {
    let mean = stats::mean(flow_seq);
    let sigma = stats::std_dev(flow_seq);
    let max = flow_seq.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Spike test as a z-score of the largest step; a constant series has no spike.
    let z = if sigma > 0.0 { (max - mean) / sigma } else { 0.0 };
    let window_mean = stats::windows(flow_seq, second_steps(fps)).map(stats::mean).fold(0.0, f64::max);
    (t.at_least(mean, t.flow_mean_min)
        + t.at_most(z, t.flow_spike_sigmas)
        + t.at_most(window_mean, t.flow_window_mean_max))
        / 3.0
}

/// `window_medians` may be empty, in which case the whole-video median stands in.
pub fn score_tracking(t: &FilterThresholds, track_loss_seq: &[f64], median_move: f64, window_medians: &[f64]) -> f64 {
    let max_loss = track_loss_seq.iter().copied().fold(0.0, f64::max);
    let worst_window = window_medians.iter().copied().reduce(f64::min).unwrap_or(median_move);
    (t.at_most(max_loss, t.track_loss_max) + t.at_least(median_move, t.track_move_min) + t.at_least(worst_window, t.track_move_min))
        / 3.0
}

pub fn score_vlm(answers: &[bool; 8]) -> f64 {
    if answers.iter().any(|&a| a) {
        0.0
    } else {
        1.0
    }
}

/// Component sub-scores and their mean.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterScore {
    pub components: BTreeMap<Component, f64>,
}

impl FilterScore {
    pub fn insert(&mut self, c: Component, v: f64) {
        self.components.insert(c, v);
    }

    pub fn get(&self, c: Component) -> Option<f64> {
        self.components.get(&c).copied()
    }

    /// Arithmetic mean of the present components; 0 when none are present.
    pub fn aggregate(&self) -> f64 {
        if self.components.is_empty() {
            return 0.0;
        }
        self.components.values().sum::<f64>() / self.components.len() as f64
    }
}

/// Include decision for a score at `threshold`.
pub fn aggregate(score: &FilterScore, threshold: f64) -> bool {
    score.aggregate() >= threshold
}

/// Scores one component, `Ok(None)` when its signal is absent.
pub(crate) fn score_component(t: &FilterThresholds, s: &FilterSignals, c: Component) -> Result<Option<f64>, FilterError> {
    Ok(match c {
        Component::Classifier => match (s.classifier_acceptable, s.classifier_interaction) {
            (Some(a), Some(i)) => Some(score_classifier(t, a, i)),
            _ => None,
        },
        Component::Distortion => s.distortion_alpha.map(|a| score_distortion(t, a)),
        Component::Focal => match &s.focal_seq {
            Some(f) => Some(score_focal(t, f, s.signal_fps)?),
            None => None,
        },
        Component::Masking => s.mask_fraction_seq.as_deref().map(|m| score_masking(t, m)),
        Component::Flow => s.flow_seq.as_deref().map(|f| score_flow(t, f, s.signal_fps)),
        Component::Tracking => match (&s.track_loss_seq, s.track_median_move) {
            (Some(loss), Some(m)) => Some(score_tracking(t, loss, m, &s.track_window_medians)),
            _ => None,
        },
        Component::Vlm => s.vlm_answers.as_ref().map(score_vlm),
    })
}

/// Scores every component whose signal is present.
pub fn score_signals(t: &FilterThresholds, s: &FilterSignals) -> Result<FilterScore, FilterError> {
    s.validate()?;
    let mut score = FilterScore::default();
    for c in Component::ALL {
        if let Some(v) = score_component(t, s, c)? {
            score.insert(c, v);
        }
    }
    Ok(score)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAT: f64 = 1e-4;

    fn t() -> FilterThresholds {
        FilterThresholds::default()
    }

    #[test]
    fn sigmoid_shape() {
        assert_eq!(smooth_margin(0.0), 0.5);
        assert!((smooth_margin(1.0) - 1.0).abs() < 1e-9);
        assert!(smooth_margin(-1.0) < 1e-9);
        assert!(smooth_margin(0.2) > 1.0 - SAT && smooth_margin(-0.2) < SAT);
        let mut prev = 0.0;
        for i in -100..=100 {
            let v = smooth_margin(i as f64 * 0.003);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn classifier_examples() {
        assert!((score_classifier(&t(), 0.70, 0.30) - 1.0).abs() < SAT);
        assert!((score_classifier(&t(), 0.40, 0.30) - 0.5).abs() < SAT);
        assert_eq!(score_classifier(&t(), 0.55, 0.20), 0.5);
    }

    #[test]
    fn distortion_examples() {
        assert!((score_distortion(&t(), 0.5) - 1.0).abs() < 1e-9);
        assert!(score_distortion(&t(), 1.2) < SAT);
        assert_eq!(score_distortion(&t(), 1.0), 0.5);
    }

    #[test]
    fn focal_examples() {
        let constant = vec![1000.0; 10];
        assert!((score_focal(&t(), &constant, 6.0).unwrap() - 1.0).abs() < SAT);
        // 1500 fails only the p80 <= 1400 indicator. Its margin is -1/14, so the
        // smoothed indicator is 1/(1+e^(50/14)) rather than exactly 0.
        let long = vec![1500.0; 10];
        let expected = (2.0 + 1.0 / (1.0 + (50.0f64 / 14.0).exp())) / 3.0;
        assert!((score_focal(&t(), &long, 6.0).unwrap() - expected).abs() < 1e-12);
        assert!((score_focal(&t(), &long, 6.0).unwrap() - 2.0 / 3.0).abs() < 0.01);
        assert_eq!(score_focal(&t(), &[1000.0], 6.0), Err(FilterError::SeriesTooShort { needed: 2, got: 1 }));
    }

    #[test]
    fn focal_ramp_against_brute_force() {
        // 800 -> 1800 over one second at 6 fps, then hold.
        let mut seq: Vec<f64> = (0..7).map(|i| 800.0 + 1000.0 * i as f64 / 6.0).collect();
        seq.extend(std::iter::repeat(1800.0).take(5));
        // Brute force: sort and interpolate by hand, scan every 7-sample window.
        let mut s = seq.clone();
        s.sort_by(f64::total_cmp);
        let pct = |p: f64| {
            let r = p / 100.0 * (s.len() - 1) as f64;
            let (lo, hi) = (r.floor() as usize, r.ceil() as usize);
            s[lo] * (1.0 - (r - lo as f64)) + s[hi] * (r - lo as f64)
        };
        let mean = seq.iter().sum::<f64>() / seq.len() as f64;
        let spread = (pct(90.0) - pct(10.0)) / mean;
        let mut change: f64 = 0.0;
        for i in 0..=seq.len() - 7 {
            let w = &seq[i..i + 7];
            let lo = w.iter().cloned().fold(f64::MAX, f64::min);
            let hi = w.iter().cloned().fold(f64::MIN, f64::max);
            change = change.max((hi - lo) / lo);
        }
        let sig = |m: f64| 1.0 / (1.0 + (-50.0 * m).exp());
        let expected = (sig((0.40 - spread) / 0.40) + sig((0.20 - change) / 0.20) + sig((1400.0 - pct(80.0)) / 1400.0)) / 3.0;
        let got = score_focal(&t(), &seq, 6.0).unwrap();
        assert!((got - expected).abs() < 1e-12);
        // window and spread indicators are saturated at 0, p80 = 1800 fails too
        assert!(got < SAT);
    }

    #[test]
    fn masking_examples() {
        assert!((score_masking(&t(), &[0.5; 8]) - 1.0).abs() < SAT);
        assert!(score_masking(&t(), &[0.9; 8]) < 0.01);
        // p90 of 0..=10 scaled so the 90th percentile is exactly 0.8
        let seq: Vec<f64> = (0..=10).map(|i| i as f64 * 0.8 / 9.0).collect();
        assert!((stats::percentile(&seq, 90.0) - 0.8).abs() < 1e-15);
        assert!((score_masking(&t(), &seq) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn flow_examples() {
        assert!((score_flow(&t(), &[0.03; 30], 6.0) - 1.0).abs() < SAT);
        assert!((score_flow(&t(), &[0.01; 30], 6.0) - 2.0 / 3.0).abs() < SAT);
    }

    #[test]
    fn flow_spike_against_direct_statistics() {
        let mut seq = vec![0.03; 40];
        for (i, v) in seq.iter_mut().enumerate() {
            *v += 0.002 * ((i % 5) as f64 - 2.0);
        }
        seq[20] = 0.09;
        let n = seq.len() as f64;
        let mean = seq.iter().sum::<f64>() / n;
        let sd = (seq.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        let z = (0.09 - mean) / sd;
        assert!(z > 4.0);
        let sig = |m: f64| 1.0 / (1.0 + (-50.0 * m).exp());
        let win_max = seq.windows(6).map(|w| w.iter().sum::<f64>() / 6.0).fold(0.0, f64::max);
        let expected = (sig((mean - 0.02127) / 0.02127) + sig((4.0 - z) / 4.0) + sig((0.15 - win_max) / 0.15)) / 3.0;
        assert!((score_flow(&t(), &seq, 6.0) - expected).abs() < 1e-12);
        assert!((score_flow(&t(), &seq, 6.0) - 2.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn tracking_examples() {
        assert!((score_tracking(&t(), &[0.0, 0.1, 0.05], 0.12, &[]) - 1.0).abs() < SAT);
        let cut = score_tracking(&t(), &[0.0, 0.8, 0.05], 0.12, &[]);
        assert!((cut - 2.0 / 3.0).abs() < SAT);
        assert!((score_tracking(&t(), &[0.0, 0.1], 0.01, &[]) - 1.0 / 3.0).abs() < SAT);
        // a single still window trips only the windowed indicator
        assert!((score_tracking(&t(), &[0.0, 0.1], 0.12, &[0.12, 0.01]) - 2.0 / 3.0).abs() < SAT);
    }

    #[test]
    fn vlm_examples() {
        assert_eq!(score_vlm(&[false; 8]), 1.0);
        let mut one = [false; 8];
        one[3] = true;
        assert_eq!(score_vlm(&one), 0.0);
        assert_eq!(score_vlm(&[true; 8]), 0.0);
    }

    #[test]
    fn aggregate_examples() {
        let mk = |vals: [f64; 7]| {
            let mut s = FilterScore::default();
            for (c, v) in Component::ALL.iter().zip(vals) {
                s.insert(*c, v);
            }
            s
        };
        assert!(aggregate(&mk([1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.5]), 0.910));
        assert!(!aggregate(&mk([1.0, 1.0, 1.0, 1.0, 1.0, 0.5, 0.5]), 0.910));
        assert!(aggregate(&mk([1.0; 7]), 1.0));
    }
}
