//! Segmentation and classification metrics: pixel precision/recall/F1,
//! bounding-box detection counts with intersection matching, IoU, threshold
//! sweeps, and per-category accuracy/macro-F1.

use oseg_data::Grid;

use crate::slicks::{connected_components, BoundingBox};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelMetrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Threshold at `tau` (ties map to 1) and count pixel-level TP/FP/FN.
/// Zero-denominator conventions: precision 0 with no predicted positives,
/// recall 0 with no truth positives, F1 0 when both components are 0.
pub fn pixel_metrics(pred: &Grid<f32>, truth: &Grid<u8>, tau: f32) -> PixelMetrics {
    assert_eq!(pred.len(), truth.len(), "pred/truth shape mismatch");
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (p, t) in pred.data().iter().zip(truth.data()) {
        let p = *p >= tau;
        let t = *t != 0;
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    from_counts(tp, fp, fn_)
}

pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> PixelMetrics {
    let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let recall = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    PixelMetrics { tp, fp, fn_, precision, recall, f1 }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BboxMetrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// IoU of every intersecting (truth, predicted) box pair.
    pub ious: Vec<f64>,
    pub mean_iou: f64,
}

fn boxes_of(mask: &Grid<u8>) -> Vec<BoundingBox> {
    connected_components(mask).into_iter().map(|c| c.bbox).collect()
}

fn intersection_area(a: &BoundingBox, b: &BoundingBox) -> usize {
    let r0 = a.row_min.max(b.row_min);
    let r1 = a.row_max.min(b.row_max);
    let c0 = a.col_min.max(b.col_min);
    let c1 = a.col_max.min(b.col_max);
    if r1 < r0 || c1 < c0 {
        0
    } else {
        (r1 - r0 + 1) * (c1 - c0 + 1)
    }
}

/// Detection counts over the tight component boxes of each mask.
///
/// Set semantics, no one-to-one assignment: a truth box is a TP if it
/// intersects any predicted box; a predicted box intersecting nothing is an
/// FP; IoU is reported per intersecting pair.
pub fn bbox_metrics(pred: &Grid<u8>, truth: &Grid<u8>) -> BboxMetrics {
    let pred_boxes = boxes_of(pred);
    let truth_boxes = boxes_of(truth);
    let mut ious = Vec::new();
    let mut tp = 0;
    let mut fn_ = 0;
    for t in &truth_boxes {
        let mut hit = false;
        for p in &pred_boxes {
            let inter = intersection_area(t, p);
            if inter > 0 {
                hit = true;
                let union = t.area() + p.area() - inter;
                ious.push(inter as f64 / union as f64);
            }
        }
        if hit {
            tp += 1;
        } else {
            fn_ += 1;
        }
    }
    let fp = pred_boxes
        .iter()
        .filter(|p| truth_boxes.iter().all(|t| intersection_area(t, p) == 0))
        .count();
    let mean_iou = if ious.is_empty() { 0.0 } else { ious.iter().sum::<f64>() / ious.len() as f64 };
    BboxMetrics { tp, fp, fn_, ious, mean_iou }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub tau: f32,
    pub pixel: PixelMetrics,
    pub bbox: BboxMetrics,
    pub positive_pixels: usize,
}

/// Pixel and box metrics at every threshold of an ascending grid.
pub fn threshold_sweep(pred: &Grid<f32>, truth: &Grid<u8>, taus: &[f32]) -> Vec<SweepRow> {
    taus.iter()
        .map(|&tau| {
            let bin = pred.map(|v| u8::from(v >= tau));
            SweepRow {
                tau,
                pixel: pixel_metrics(pred, truth, tau),
                bbox: bbox_metrics(&bin, truth),
                positive_pixels: bin.data().iter().filter(|&&v| v != 0).count(),
            }
        })
        .collect()
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("tau,tp,fp,fn,precision,recall,f1,box_tp,box_fp,box_fn,mean_iou,positive_pixels\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{:.6},{:.6},{:.6},{},{},{},{:.6},{}\n",
            r.tau,
            r.pixel.tp,
            r.pixel.fp,
            r.pixel.fn_,
            r.pixel.precision,
            r.pixel.recall,
            r.pixel.f1,
            r.bbox.tp,
            r.bbox.fp,
            r.bbox.fn_,
            r.bbox.mean_iou,
            r.positive_pixels
        ));
    }
    s
}

#[derive(Debug, Clone)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub confusion: Vec<Vec<usize>>,
}

/// Accuracy and macro-averaged F1 over `k`-valued predictions/labels.
pub fn classification_metrics(predictions: &[usize], labels: &[usize], k: usize) -> ClassificationMetrics {
    assert_eq!(predictions.len(), labels.len());
    assert!(predictions.iter().chain(labels).all(|&v| v < k), "class index out of range");
    let mut confusion = vec![vec![0usize; k]; k];
    let mut correct = 0;
    for (&p, &l) in predictions.iter().zip(labels) {
        confusion[l][p] += 1;
        if p == l {
            correct += 1;
        }
    }
    let accuracy = if predictions.is_empty() { 0.0 } else { correct as f64 / predictions.len() as f64 };
    let mut f1_sum = 0.0;
    for c in 0..k {
        let tp = confusion[c][c];
        let fp: usize = (0..k).filter(|&l| l != c).map(|l| confusion[l][c]).sum();
        let fn_: usize = (0..k).filter(|&p| p != c).map(|p| confusion[c][p]).sum();
        f1_sum += from_counts(tp, fp, fn_).f1;
    }
    ClassificationMetrics { accuracy, macro_f1: f1_sum / k as f64, confusion }
}
