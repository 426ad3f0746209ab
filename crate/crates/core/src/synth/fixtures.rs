use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::filtering::FilterSignals;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureKind {
    Good,
    StaticCamera,
    StaticScene,
    ShotChange,
    ZoomIn,
    LongFocal,
    HugeMask,
    Distorted,
}

impl FixtureKind {
    pub const ALL: [FixtureKind; 8] = [
        FixtureKind::Good,
        FixtureKind::StaticCamera,
        FixtureKind::StaticScene,
        FixtureKind::ShotChange,
        FixtureKind::ZoomIn,
        FixtureKind::LongFocal,
        FixtureKind::HugeMask,
        FixtureKind::Distorted,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FixtureKind::Good => "good",
            FixtureKind::StaticCamera => "static_camera",
            FixtureKind::StaticScene => "static_scene",
            FixtureKind::ShotChange => "shot_change",
            FixtureKind::ZoomIn => "zoom_in",
            FixtureKind::LongFocal => "long_focal",
            FixtureKind::HugeMask => "huge_mask",
            FixtureKind::Distorted => "distorted",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Samples per series: six seconds at the default signal rate.
const LEN: usize = 36;
const FPS: f64 = 6.0;

/// `n` samples around a base level drawn from `base`.
fn jittered(rng: &mut ChaCha8Rng, base: std::ops::Range<f64>, rel: f64, n: usize) -> Vec<f64> {
    let base = rng.random_range(base);
    (0..n).map(|_| base * (1.0 + rng.random_range(-rel..=rel))).collect()
}

/// Signals for a fixture kind and whether such a video is suitable.
///
/// Passing signals sit far from every threshold so their sub-scores saturate.
/// A failing kind pushes enough indicators past their limits that the mean
/// falls below the final threshold on its own.
pub fn make_filter_fixture(kind: FixtureKind, seed: u64) -> (FilterSignals, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (kind as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut s = FilterSignals {
        id: format!("{}_{seed}", kind.name()),
        signal_fps: FPS,
        flow_seq: Some(jittered(&mut rng, 0.04..0.06, 0.1, LEN)),
        focal_seq: Some(jittered(&mut rng, 800.0..1000.0, 0.01, LEN)),
        distortion_alpha: Some(rng.random_range(0.0..0.3)),
        classifier_acceptable: Some(rng.random_range(0.8..0.99)),
        classifier_interaction: Some(rng.random_range(0.5..0.9)),
        mask_fraction_seq: Some(jittered(&mut rng, 0.1..0.3, 0.2, LEN)),
        track_loss_seq: Some((0..LEN).map(|_| rng.random_range(0.0..0.1)).collect()),
        track_median_move: Some(rng.random_range(0.1..0.3)),
        track_window_medians: Vec::new(),
        vlm_answers: Some([false; 8]),
    };
    s.track_window_medians = (0..6).map(|_| s.track_median_move.unwrap() * rng.random_range(0.8..1.2)).collect();
    let cut = rng.random_range(10..LEN - 10);

    match kind {
        FixtureKind::Good => {}
        FixtureKind::StaticCamera => {
            // barely any flow and tracks that do not move
            s.flow_seq = Some(jittered(&mut rng, 0.002..0.006, 0.1, LEN));
            let m = rng.random_range(0.002..0.01);
            s.track_median_move = Some(m);
            s.track_window_medians = vec![m; 6];
        }
        FixtureKind::StaticScene => {
            s.classifier_interaction = Some(rng.random_range(0.0..0.05));
            s.vlm_answers.as_mut().unwrap()[4] = true;
        }
        FixtureKind::ShotChange => {
            let flow = s.flow_seq.as_mut().unwrap();
            flow[cut] = rng.random_range(0.5..0.9);
            s.track_loss_seq.as_mut().unwrap()[cut] = rng.random_range(0.7..1.0);
            // new shot, new lens
            let jump = rng.random_range(1.5..2.0);
            for f in &mut s.focal_seq.as_mut().unwrap()[cut..] {
                *f *= jump;
            }
        }
        FixtureKind::ZoomIn => {
            s.focal_seq = Some((0..LEN).map(|i| 700.0 + 1500.0 * i as f64 / (LEN - 1) as f64).collect());
        }
        FixtureKind::LongFocal => {
            s.focal_seq = Some(vec![1600.0; LEN]);
            s.vlm_answers.as_mut().unwrap()[3] = true;
        }
        FixtureKind::HugeMask => {
            s.mask_fraction_seq = Some(jittered(&mut rng, 0.88..0.92, 0.02, LEN));
        }
        FixtureKind::Distorted => {
            s.distortion_alpha = Some(rng.random_range(1.5..2.5));
        }
    }
    (s, kind == FixtureKind::Good)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filtering::{aggregate, score_signals, Component, FilterThresholds};

    #[test]
    fn labels_follow_the_aggregate_rule() {
        let t = FilterThresholds::default();
        for kind in FixtureKind::ALL {
            for seed in 0..25 {
                let (s, label) = make_filter_fixture(kind, seed);
                let score = score_signals(&t, &s).unwrap();
                assert_eq!(aggregate(&score, 0.910), label, "{kind:?} seed {seed}: {score:?}");
            }
        }
    }

    #[test]
    fn good_saturates() {
        let (s, label) = make_filter_fixture(FixtureKind::Good, 1);
        assert!(label);
        let score = score_signals(&FilterThresholds::default(), &s).unwrap();
        for (c, v) in &score.components {
            assert!(*v > 1.0 - 1e-4, "{c:?} {v}");
        }
    }

    #[test]
    fn shot_change_spikes() {
        for seed in 0..10 {
            let (s, label) = make_filter_fixture(FixtureKind::ShotChange, seed);
            assert!(!label);
            let flow = s.flow_seq.unwrap();
            let mean = flow.iter().sum::<f64>() / flow.len() as f64;
            let sd = (flow.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / flow.len() as f64).sqrt();
            let max = flow.iter().copied().fold(0.0, f64::max);
            assert!(max > mean + 4.0 * sd);
            assert!(s.track_loss_seq.unwrap().iter().any(|&l| l > 0.5));
        }
    }

    #[test]
    fn long_focal_p80() {
        let (s, _) = make_filter_fixture(FixtureKind::LongFocal, 3);
        let t = FilterThresholds::default();
        assert!(s.focal_seq.as_ref().unwrap().iter().all(|&f| f == 1600.0));
        assert!(crate::stats::percentile(s.focal_seq.as_ref().unwrap(), 80.0) > t.focal_p80_max);
        let score = score_signals(&t, &s).unwrap();
        assert!((score.get(Component::Focal).unwrap() - 2.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in FixtureKind::ALL {
            assert_eq!(FixtureKind::parse(k.name()), Some(k));
        }
    }
}
