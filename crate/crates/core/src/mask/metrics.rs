use serde::{Deserialize, Serialize};

use super::{BinaryMask, MaskError, NormBox};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct OverlapMetrics<T: Scalar = f64> {
    pub iou: T,
    pub precision: T,
    pub recall: T,
    /// Set when the prediction had no pixels; precision is then reported as 1.
    pub empty_prediction: bool,
}

/// IoU, precision and recall of a predicted mask against ground truth.
pub fn mask_overlap_metrics<T: Scalar>(
    pred: &BinaryMask,
    gt: &BinaryMask,
) -> Result<OverlapMetrics<T>, MaskError> {
    pred.same_dims(gt)?;
    let gt_area = gt.area();
    if gt_area == 0 {
        return Err(MaskError::EmptyGroundTruth);
    }
    let pred_area = pred.area();
    let inter = pred.intersection_area(gt)?;
    let union = pred_area + gt_area - inter;
    let ratio = |n: usize, d: usize| T::of_count(n) / T::of_count(d);
    let empty_prediction = pred_area == 0;
    Ok(OverlapMetrics {
        iou: ratio(inter, union),
        precision: if empty_prediction {
            T::one()
        } else {
            ratio(inter, pred_area)
        },
        recall: ratio(inter, gt_area),
        empty_prediction,
    })
}

/// Intersection-over-union of two boxes in continuous coordinates.
pub fn box_iou<T: Scalar>(a: &NormBox<T>, b: &NormBox<T>) -> T {
    let iw = (a.x2().min(b.x2()) - a.x1().max(b.x1())).max(T::zero());
    let ih = (a.y2().min(b.y2()) - a.y1().max(b.y1())).max(T::zero());
    let inter = iw * ih;
    if inter <= T::zero() {
        return T::zero();
    }
    inter / (a.area() + b.area() - inter)
}
