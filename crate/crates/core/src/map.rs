//! PASCAL VOC style mean average precision for cell detection.
//!
//! Only the `content` class is scored. Average precision uses all-point
//! interpolation of the precision/recall curve.

use rayon::prelude::*;

use crate::geometry::{iou, BoxClass, CellBox};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: CellBox,
    pub score: f64,
    pub klass: BoxClass,
}

impl Detection {
    pub fn content(bbox: CellBox, score: f64) -> Self {
        Self { bbox, score, klass: BoxClass::Content }
    }
}

/// Points of the precision/recall curve in score order, ties broken by
/// image then by position within the image.
pub fn pr_curve(detections: &[Vec<Detection>], gts: &[Vec<CellBox>], iou_thresh: f64) -> (Vec<(f64, f64)>, usize) {
    let n_gt: usize = gts.iter().map(|g| g.iter().filter(|b| b.klass == BoxClass::Content).count()).sum();
    let mut flags: Vec<(f64, usize, usize, bool)> = detections
        .par_iter()
        .enumerate()
        .flat_map_iter(|(img, dets)| {
            let empty = Vec::new();
            let gt: Vec<&CellBox> =
                gts.get(img).unwrap_or(&empty).iter().filter(|b| b.klass == BoxClass::Content).collect();
            let mut order: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].klass == BoxClass::Content).collect();
            order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
            let mut used = vec![false; gt.len()];
            order
                .into_iter()
                .map(|i| {
                    let best = gt.iter().enumerate().map(|(j, g)| (j, iou(&dets[i].bbox, g))).fold(
                        None::<(usize, f64)>,
                        |acc, (j, v)| match acc {
                            Some((_, bv)) if bv >= v => acc,
                            _ => Some((j, v)),
                        },
                    );
                    let tp = match best {
                        Some((j, v)) if v >= iou_thresh && !used[j] => {
                            used[j] = true;
                            true
                        }
                        _ => false,
                    };
                    (dets[i].score, img, i, tp)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    flags.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let (mut tp, mut fp) = (0usize, 0usize);
    let curve = flags
        .iter()
        .map(|f| {
            if f.3 {
                tp += 1;
            } else {
                fp += 1;
            }
            let precision = tp as f64 / (tp + fp) as f64;
            let recall = if n_gt == 0 { 0.0 } else { tp as f64 / n_gt as f64 };
            (precision, recall)
        })
        .collect();
    (curve, n_gt)
}

/// All-point interpolated average precision of a precision/recall curve.
pub fn average_precision(curve: &[(f64, f64)]) -> f64 {
    let mut rec = vec![0.0];
    let mut pre = vec![0.0];
    for (p, r) in curve {
        pre.push(*p);
        rec.push(*r);
    }
    rec.push(1.0);
    pre.push(0.0);
    for i in (0..pre.len() - 1).rev() {
        pre[i] = pre[i].max(pre[i + 1]);
    }
    (1..rec.len()).map(|i| (rec[i] - rec[i - 1]) * pre[i]).sum()
}

/// Mean average precision of the content class. 0 when there are no
/// detections or no ground-truth boxes.
pub fn voc_map(detections: &[Vec<Detection>], gts: &[Vec<CellBox>], iou_thresh: f64) -> f64 {
    let (curve, n_gt) = pr_curve(detections, gts, iou_thresh);
    if curve.is_empty() || n_gt == 0 {
        return 0.0;
    }
    average_precision(&curve)
}
