//! Detection mAP at temporal IoU thresholds, and the KL diagnostic comparing
//! a guidance sequence with the ground-truth action mask.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localization::{iou, threshold_range, Proposal};

/// Additive smoothing before normalizing sequences for KL.
pub const KL_SMOOTHING: f64 = 1e-8;

/// A detection tagged with the index of the video it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub video: usize,
    pub start: usize,
    pub end: usize,
    pub confidence: f64,
}

impl Detection {
    pub fn from_proposal(video: usize, p: &Proposal) -> Self {
        Self {
            video,
            start: p.start,
            end: p.end,
            confidence: p.confidence,
        }
    }
}

/// A ground-truth instance of one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroundTruth {
    pub video: usize,
    pub start: usize,
    pub end: usize,
}

/// TP flags in ranked order after greedy matching.
///
/// Detections are ranked by descending confidence (stable on ties); each one
/// takes the unmatched ground truth of the same video with the highest IoU,
/// counting as a true positive when that IoU exceeds the threshold.
pub fn match_detections(dets: &[Detection], gts: &[GroundTruth], iou_threshold: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));
    let mut used = vec![false; gts.len()];
    order
        .into_iter()
        .map(|i| {
            let d = &dets[i];
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in gts.iter().enumerate() {
                if used[g] || gt.video != d.video {
                    continue;
                }
                let o = iou((d.start, d.end), (gt.start, gt.end));
                if best.map_or(true, |(_, b)| o > b) {
                    best = Some((g, o));
                }
            }
            match best {
                Some((g, o)) if o > iou_threshold => {
                    used[g] = true;
                    true
                }
                _ => false,
            }
        })
        .collect()
}

/// Area under the all-points interpolated precision-recall curve.
pub fn interpolated_ap(tp_flags: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 || tp_flags.is_empty() {
        return 0.0;
    }
    let mut tp = 0usize;
    let mut precision = Vec::with_capacity(tp_flags.len() + 2);
    let mut recall = Vec::with_capacity(tp_flags.len() + 2);
    precision.push(0.0);
    recall.push(0.0);
    for (i, &hit) in tp_flags.iter().enumerate() {
        tp += usize::from(hit);
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / n_gt as f64);
    }
    precision.push(0.0);
    recall.push(1.0);
    for i in (0..precision.len() - 1).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    (1..recall.len())
        .filter(|&i| recall[i] != recall[i - 1])
        .map(|i| (recall[i] - recall[i - 1]) * precision[i])
        .sum()
}

/// AP for one class, `None` when the class has no ground truth.
pub fn average_precision(dets: &[Detection], gts: &[GroundTruth], iou_threshold: f64) -> Option<f64> {
    if gts.is_empty() {
        return None;
    }
    let flags = match_detections(dets, gts, iou_threshold);
    Some(interpolated_ap(&flags, gts.len()))
}

/// Threshold key as it appears in reports: `0.5`, `0.55`, `0.1`.
pub fn threshold_key(t: f64) -> String {
    let s = format!("{:.2}", t);
    let s = s.trim_end_matches('0');
    let s = s.strip_suffix('.').unwrap_or(s);
    s.to_string()
}

pub fn thumos_thresholds() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

/// `0.5:0.05:0.95`.
pub fn activitynet_avg_thresholds() -> Vec<f64> {
    threshold_range(0.5, 0.95, 0.05)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// mAP per IoU threshold.
    pub map: BTreeMap<String, f64>,
    /// Mean mAP over `0.5:0.05:0.95`.
    pub avg_map: f64,
    /// KL(gt ∥ guidance) per guidance variant.
    pub kl: BTreeMap<String, f64>,
    /// AP per threshold, then per class.
    pub ap: BTreeMap<String, BTreeMap<usize, f64>>,
}

impl EvalReport {
    pub fn map_at(&self, t: f64) -> Option<f64> {
        self.map.get(&threshold_key(t)).copied()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    /// CSV mirror: `iou,class,ap` rows plus `iou,mean,map` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["iou", "class", "value"])?;
        for (t, per_class) in &self.ap {
            for (c, ap) in per_class {
                w.write_record([t.as_str(), &c.to_string(), &ap.to_string()])?;
            }
            if let Some(m) = self.map.get(t) {
                w.write_record([t.as_str(), "mean", &m.to_string()])?;
            }
        }
        w.write_record(["avg", "mean", &self.avg_map.to_string()])?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Per-class detections and ground truth, keyed by class index.
#[derive(Debug, Clone, Default)]
pub struct DetectionSet {
    pub detections: BTreeMap<usize, Vec<Detection>>,
    pub ground_truth: BTreeMap<usize, Vec<GroundTruth>>,
}

impl DetectionSet {
    pub fn add_detection(&mut self, class: usize, d: Detection) {
        self.detections.entry(class).or_default().push(d);
    }

    pub fn add_ground_truth(&mut self, class: usize, g: GroundTruth) {
        self.ground_truth.entry(class).or_default().push(g);
    }

    /// `(per-class AP, mAP)` at one threshold over classes with ground truth.
    pub fn map_at(&self, iou_threshold: f64) -> (BTreeMap<usize, f64>, f64) {
        let empty = Vec::new();
        let per_class: BTreeMap<usize, f64> = self
            .ground_truth
            .iter()
            .filter_map(|(&c, gts)| {
                let dets = self.detections.get(&c).unwrap_or(&empty);
                average_precision(dets, gts, iou_threshold).map(|ap| (c, ap))
            })
            .collect();
        let mean = if per_class.is_empty() {
            0.0
        } else {
            per_class.values().sum::<f64>() / per_class.len() as f64
        };
        (per_class, mean)
    }

    /// mAP rows for `iou_list` plus the `0.5:0.05:0.95` average.
    pub fn report(&self, iou_list: &[f64]) -> EvalReport {
        let mut report = EvalReport::default();
        for &t in iou_list {
            let (per_class, mean) = self.map_at(t);
            report.map.insert(threshold_key(t), mean);
            report.ap.insert(threshold_key(t), per_class);
        }
        let avg = activitynet_avg_thresholds();
        report.avg_map = avg.iter().map(|&t| self.map_at(t).1).sum::<f64>() / avg.len() as f64;
        report
    }
}

/// `KL(gt ∥ guidance)` after smoothing and normalizing both sequences.
pub fn kl_guidance(guidance: &[f64], gt_mask: &[bool]) -> Result<f64> {
    if guidance.is_empty() || guidance.len() != gt_mask.len() {
        return Err(Error::dim(
            "kl_guidance",
            format!("{} guidance values, {} mask entries", guidance.len(), gt_mask.len()),
        ));
    }
    if !gt_mask.iter().any(|b| *b) {
        return Err(Error::Config("ground-truth mask has no positive snippet".into()));
    }
    let gt: Vec<f64> = gt_mask.iter().map(|&b| if b { 1.0 } else { 0.0 } + KL_SMOOTHING).collect();
    let q: Vec<f64> = guidance.iter().map(|v| v.max(0.0) + KL_SMOOTHING).collect();
    let zp: f64 = gt.iter().sum();
    let zq: f64 = q.iter().sum();
    Ok(gt
        .iter()
        .zip(&q)
        .map(|(p, q)| {
            let (p, q) = (p / zp, q / zq);
            p * (p / q).ln()
        })
        .sum::<f64>()
        .max(0.0))
}
