//! Precision/recall scoring: vacancy-map agreement and detection PR curves.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annot::BBox2D;
use crate::depth::bbox_area;
use crate::vacancy::{SpotStatus, VacancyMap};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("vacancy grids do not correspond (no interval matches)")]
    GridMismatch,
    #[error("truth box set is empty")]
    EmptyTruth,
    #[error("detection score {0} outside [0, 1]")]
    InvalidScore(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub pr_points: Vec<PrPoint>,
    pub average_precision: f64,
}

impl EvalReport {
    fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        // 0/0 conventions: no predicted positives means no false alarms
        // (precision 1); no actual positives means nothing to miss
        // (recall 1). Perfect agreement on an all-negative set then scores
        // 1/1 and a silent predictor still earns recall 0 through fn_.
        let precision = if tp + fp > 0 {
            tp as f64 / (tp + fp) as f64
        } else {
            1.0
        };
        let recall = if tp + fn_ > 0 {
            tp as f64 / (tp + fn_) as f64
        } else {
            1.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        EvalReport {
            precision,
            recall,
            f1,
            pr_points: Vec::new(),
            average_precision: 0.0,
        }
    }
}

fn interval_iou(a: (f64, f64), b: (f64, f64)) -> f64 {
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Score a predicted vacancy map against the truth, treating "vacant" as the
/// positive class.
///
/// Spots are matched per row by interval IoU >= 0.5 (greedy, best first), so
/// grids distorted by noise still correspond. Unmatched predicted vacancies
/// count as false positives and unmatched truth vacancies as false
/// negatives. The threshold-free comparison has no PR curve: `pr_points` is
/// empty and `average_precision` zero.
pub fn evaluate_vacancy(
    predicted: &VacancyMap,
    truth: &VacancyMap,
) -> Result<EvalReport, EvalError> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (pi, p) in predicted.spots.iter().enumerate() {
        for (ti, t) in truth.spots.iter().enumerate() {
            if p.row_index != t.row_index {
                continue;
            }
            let iou = interval_iou((p.x_lo, p.x_hi), (t.x_lo, t.x_hi));
            if iou >= 0.5 {
                pairs.push((iou, pi, ti));
            }
        }
    }
    if pairs.is_empty() && !predicted.spots.is_empty() && !truth.spots.is_empty() {
        return Err(EvalError::GridMismatch);
    }

    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut predicted_match: Vec<Option<usize>> = vec![None; predicted.spots.len()];
    let mut truth_match: Vec<Option<usize>> = vec![None; truth.spots.len()];
    for (_, pi, ti) in pairs {
        if predicted_match[pi].is_none() && truth_match[ti].is_none() {
            predicted_match[pi] = Some(ti);
            truth_match[ti] = Some(pi);
        }
    }

    let vacant = |s: &crate::vacancy::VacancySpot| s.status == SpotStatus::Vacant;
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    for (pi, p) in predicted.spots.iter().enumerate() {
        if !vacant(p) {
            continue;
        }
        match predicted_match[pi] {
            Some(ti) if vacant(&truth.spots[ti]) => tp += 1,
            _ => fp += 1,
        }
    }
    for (ti, t) in truth.spots.iter().enumerate() {
        if !vacant(t) {
            continue;
        }
        match truth_match[ti] {
            Some(pi) if vacant(&predicted.spots[pi]) => {}
            _ => fn_ += 1,
        }
    }
    Ok(EvalReport::from_counts(tp, fp, fn_))
}

/// A detection with a confidence score for PR-curve evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDetection {
    pub bbox: BBox2D,
    pub score: f64,
}

fn box_iou(a: &BBox2D, b: &BBox2D) -> f64 {
    let ix = (a.xmax.min(b.xmax) - a.xmin.max(b.xmin)).max(0.0);
    let iy = (a.ymax.min(b.ymax) - a.ymin.max(b.ymin)).max(0.0);
    let inter = ix * iy;
    let union = bbox_area(a) + bbox_area(b) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Precision-recall curve and average precision over scored detections.
///
/// Detections are visited in descending score order (ties keep input
/// order); each is greedily matched to the still-unmatched truth box of
/// highest IoU at or above the threshold, class-agnostic. After each
/// detection the cumulative (recall, precision) point is recorded. Average
/// precision is the trapezoidal area under the curve after the precision
/// envelope is made non-increasing, integrating from recall 0 to the
/// maximum achieved recall.
pub fn pr_curve(
    detections: &[ScoredDetection],
    truth_boxes: &[BBox2D],
    iou_threshold: f64,
) -> Result<EvalReport, EvalError> {
    if truth_boxes.is_empty() {
        return Err(EvalError::EmptyTruth);
    }
    for d in detections {
        if !(0.0..=1.0).contains(&d.score) {
            return Err(EvalError::InvalidScore(d.score));
        }
    }

    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&i, &j| {
        detections[j]
            .score
            .total_cmp(&detections[i].score)
            .then(i.cmp(&j))
    });

    let mut truth_used = vec![false; truth_boxes.len()];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut pr_points = Vec::with_capacity(detections.len());
    for &i in &order {
        let det = &detections[i];
        let best = truth_boxes
            .iter()
            .enumerate()
            .filter(|(t, _)| !truth_used[*t])
            .map(|(t, tb)| (t, box_iou(&det.bbox, tb)))
            .filter(|(_, iou)| *iou >= iou_threshold)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        match best {
            Some((t, _)) => {
                truth_used[t] = true;
                tp += 1;
            }
            None => fp += 1,
        }
        pr_points.push(PrPoint {
            recall: tp as f64 / truth_boxes.len() as f64,
            precision: tp as f64 / (tp + fp) as f64,
        });
    }

    let average_precision = trapezoid_ap(&pr_points);
    let (precision, recall) = match pr_points.last() {
        Some(last) => (last.precision, last.recall),
        None => (0.0, 0.0),
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(EvalReport {
        precision,
        recall,
        f1,
        pr_points,
        average_precision,
    })
}

/// Area under the monotone (non-increasing) precision envelope, integrated
/// by trapezoids over recall. The curve starts at recall 0 with the
/// envelope's first value and ends at the maximum achieved recall.
fn trapezoid_ap(points: &[PrPoint]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    // Envelope at each distinct recall: the maximum precision at or beyond it.
    let mut envelope: Vec<PrPoint> = Vec::with_capacity(points.len());
    let mut running_max = 0.0f64;
    for p in points.iter().rev() {
        running_max = running_max.max(p.precision);
        match envelope.last_mut() {
            Some(last) if last.recall == p.recall => last.precision = running_max,
            _ => envelope.push(PrPoint {
                recall: p.recall,
                precision: running_max,
            }),
        }
    }
    envelope.reverse();

    let mut area = 0.0;
    let mut prev = PrPoint {
        recall: 0.0,
        precision: envelope[0].precision,
    };
    for p in &envelope {
        area += (p.recall - prev.recall) * (p.precision + prev.precision) / 2.0;
        prev = *p;
    }
    area
}
