use std::collections::BTreeMap;

use super::Tracklet;
use crate::stats::median;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackStatistics {
    /// Per frame, the fraction of tracks visible at `t - 1` that are not visible at `t`.
    pub loss_seq: Vec<f64>,
    /// Median over tracks of net displacement, as a fraction of the frame diagonal.
    pub median_move: f64,
    /// Same median per tracking window (tracklets sharing a start frame), by start frame.
    pub window_medians: Vec<f64>,
}

/// Net displacement between the first and last visible positions.
fn displacement(t: &Tracklet) -> Option<f64> {
    let mut obs = t.observations();
    let (_, first) = obs.next()?;
    let (_, last) = obs.last()?;
    Some((last - first).norm())
}

pub fn track_statistics(tracklets: &[Tracklet], frame_diag_px: f64) -> TrackStatistics {
    let last = tracklets.iter().map(Tracklet::end_frame).max().unwrap_or(0);
    let mut prev_visible = vec![0usize; last as usize + 1];
    let mut lost = vec![0usize; last as usize + 1];
    for t in tracklets {
        for k in 1..t.visible.len() {
            if t.visible[k - 1] {
                let f = t.start_frame as usize + k;
                prev_visible[f] += 1;
                if !t.visible[k] {
                    lost[f] += 1;
                }
            }
        }
    }
    let loss_seq = prev_visible
        .iter()
        .zip(&lost)
        .map(|(&v, &l)| if v == 0 { 0.0 } else { l as f64 / v as f64 })
        .collect();

    let moves = |ts: &mut dyn Iterator<Item = &Tracklet>| -> f64 {
        let m: Vec<f64> = ts.filter_map(displacement).map(|d| d / frame_diag_px).collect();
        if m.is_empty() {
            0.0
        } else {
            median(&m)
        }
    };
    let median_move = moves(&mut tracklets.iter());
    let mut windows: BTreeMap<u32, Vec<&Tracklet>> = BTreeMap::new();
    for t in tracklets {
        windows.entry(t.start_frame).or_default().push(t);
    }
    let window_medians = windows.values().map(|ts| moves(&mut ts.iter().copied())).collect();
    TrackStatistics { loss_seq, median_move, window_medians }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;

    fn still(id: u64, vis: Vec<bool>) -> Tracklet {
        Tracklet { id, start_frame: 0, points: vec![Point2::new(3.0, 4.0); vis.len()], visible: vis }
    }

    #[test]
    fn persistent_still_tracks() {
        let ts: Vec<Tracklet> = (0..10).map(|i| still(i, vec![true; 6])).collect();
        let s = track_statistics(&ts, 100.0);
        assert!(s.loss_seq.iter().all(|&l| l == 0.0));
        assert_eq!(s.median_move, 0.0);
        assert_eq!(s.window_medians, vec![0.0]);
    }

    #[test]
    fn counted_loss_at_cut() {
        let mut ts = Vec::new();
        for i in 0..100 {
            let mut vis = vec![true; 8];
            if i < 60 {
                for v in vis.iter_mut().skip(5) {
                    *v = false;
                }
            }
            ts.push(still(i, vis));
        }
        let s = track_statistics(&ts, 100.0);
        assert!((s.loss_seq[5] - 0.6).abs() < 1e-15);
        // survivors only afterwards
        assert_eq!(s.loss_seq[6], 0.0);
        assert_eq!(s.loss_seq[4], 0.0);
    }

    #[test]
    fn pan_moves_by_known_fraction() {
        let diag = 1000.0;
        let ts: Vec<Tracklet> = (0..25)
            .map(|i| {
                let start = Point2::new(100.0 + i as f64, 200.0);
                let step = nalgebra::Vector2::new(0.6, 0.8) * (0.08 * diag / 10.0);
                Tracklet { id: i, start_frame: (i % 3) as u32 * 5, points: (0..11).map(|k| start + step * k as f64).collect(), visible: vec![true; 11] }
            })
            .collect();
        let s = track_statistics(&ts, diag);
        assert!((s.median_move - 0.08).abs() < 1e-9);
        assert_eq!(s.window_medians.len(), 3);
        assert!(s.window_medians.iter().all(|m| (m - 0.08).abs() < 1e-9));
    }
}
