use serde::{Deserialize, Serialize};

use super::FilterError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Sweeps the decision threshold over every distinct score, highest first.
/// A video is predicted suitable when its score is at least the threshold.
pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<PrPoint>, FilterError> {
    if scores.len() != labels.len() {
        return Err(FilterError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(FilterError::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PrPoint {
            threshold,
            recall: tp as f64 / positives as f64,
            precision: tp as f64 / (tp + fp) as f64,
        });
    }
    Ok(points)
}

/// Precision made non-increasing in recall: each point takes the maximum
/// precision over points with recall at least its own.
fn smoothed_precision(curve: &[PrPoint]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..curve.len()).collect();
    order.sort_by(|&a, &b| curve[a].recall.total_cmp(&curve[b].recall));
    let mut out = vec![0.0; curve.len()];
    let mut running = f64::NEG_INFINITY;
    let mut end = order.len();
    while end > 0 {
        // group of points sharing one recall value
        let recall = curve[order[end - 1]].recall;
        let mut start = end;
        while start > 0 && curve[order[start - 1]].recall == recall {
            start -= 1;
        }
        for &i in &order[start..end] {
            running = running.max(curve[i].precision);
        }
        for &i in &order[start..end] {
            out[i] = running;
        }
        end = start;
    }
    out
}

/// Area under the smoothed precision envelope, summed over recall increments.
pub fn average_precision(curve: &[PrPoint]) -> f64 {
    let smooth = smoothed_precision(curve);
    integrate(curve, &smooth)
}

/// Same sum over the raw (unsmoothed) precisions.
pub fn raw_average_precision(curve: &[PrPoint]) -> f64 {
    let raw: Vec<f64> = curve.iter().map(|p| p.precision).collect();
    integrate(curve, &raw)
}

fn integrate(curve: &[PrPoint], precision: &[f64]) -> f64 {
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, &prec) in curve.iter().zip(precision) {
        ap += (p.recall - prev_recall) * prec;
        prev_recall = p.recall;
    }
    ap
}

/// Raw precision at the first curve point reaching `recall`.
pub fn precision_at_recall(curve: &[PrPoint], recall: f64) -> Option<f64> {
    curve.iter().find(|p| p.recall >= recall).map(|p| p.precision)
}
