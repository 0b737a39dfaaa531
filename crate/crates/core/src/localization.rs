//! Inference: video classification, proposal grouping, and NMS.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Tensor2;
use crate::objective::aggregate_values;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub start: usize,
    pub end: usize,
    pub class: usize,
    pub confidence: f64,
}

impl Proposal {
    pub fn segment(&self) -> (usize, usize) {
        (self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    pub theta_c: f64,
    pub theta_a: Vec<f64>,
    pub nms_iou: f64,
    /// Min-max normalize each TCAS column before applying `theta_a`.
    pub normalize_scores: bool,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            theta_c: 0.2,
            theta_a: threshold_range(0.0, 0.25, 0.025),
            nms_iou: 0.7,
            normalize_scores: true,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.theta_c) || !unit(self.nms_iou) {
            return Err(Error::Config("theta_c and nms_iou must lie in [0, 1]".into()));
        }
        if self.theta_a.is_empty() || !self.theta_a.iter().all(|v| unit(*v)) {
            return Err(Error::Config("theta_a must be a non-empty list in [0, 1]".into()));
        }
        if self.theta_a.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("theta_a must be strictly increasing".into()));
        }
        Ok(())
    }
}

/// Inclusive `start:stop:step` range, e.g. `[0:0.25:0.025]` → 11 values.
pub fn threshold_range(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| start + i as f64 * step).collect()
}

/// Parses `start:stop:step`, with or without surrounding brackets.
pub fn parse_threshold_range(text: &str) -> Result<Vec<f64>> {
    let inner = text.trim().trim_start_matches('[').trim_end_matches(']');
    let parts: Vec<&str> = inner.split(':').collect();
    let bad = || Error::Config(format!("threshold range {text:?} is not start:stop:step"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad())?;
    if !(nums[2] > 0.0) || nums[1] < nums[0] {
        return Err(bad());
    }
    Ok(threshold_range(nums[0], nums[1], nums[2]))
}

/// Classes whose video probability exceeds `theta_c`; the argmax (lowest
/// index on ties) when none does.
pub fn classify_video(tcas: &Tensor2, ratio: f64, theta_c: f64) -> Vec<usize> {
    let (_, probs, _) = aggregate_values(tcas, ratio);
    classify_probs(&probs, theta_c)
}

pub fn classify_probs(probs: &[f64], theta_c: f64) -> Vec<usize> {
    let picked: Vec<usize> = (0..probs.len()).filter(|&c| probs[c] > theta_c).collect();
    if !picked.is_empty() {
        return picked;
    }
    let mut best = 0;
    for (c, p) in probs.iter().enumerate() {
        if *p > probs[best] {
            best = c;
        }
    }
    if probs.is_empty() {
        Vec::new()
    } else {
        vec![best]
    }
}

/// Maximal runs of `scores > threshold`, as inclusive `(start, end)`.
pub fn runs_above(scores: &[f64], threshold: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    for (t, &s) in scores.iter().enumerate() {
        match (s > threshold, open) {
            (true, None) => open = Some(t),
            (false, Some(start)) => {
                out.push((start, t - 1));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(start) = open {
        out.push((start, scores.len() - 1));
    }
    out
}

fn min_max(column: &[f64]) -> Vec<f64> {
    let lo = column.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = column.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 0.0) {
        return vec![0.0; column.len()];
    }
    column.iter().map(|v| (v - lo) / span).collect()
}

/// Candidate segments for one class from its TCAS column.
///
/// Runs are collected over every threshold, de-duplicated by `(start, end)`,
/// and scored by the mean raw TCAS inside the segment.
pub fn generate_proposals(column: &[f64], class: usize, cfg: &InferenceConfig) -> Vec<Proposal> {
    let scores = if cfg.normalize_scores { min_max(column) } else { column.to_vec() };
    let mut segments: BTreeMap<(usize, usize), ()> = BTreeMap::new();
    for &theta in &cfg.theta_a {
        for seg in runs_above(&scores, theta) {
            segments.insert(seg, ());
        }
    }
    segments
        .into_keys()
        .map(|(start, end)| {
            let confidence = column[start..=end].iter().sum::<f64>() / (end + 1 - start) as f64;
            Proposal {
                start,
                end,
                class,
                confidence,
            }
        })
        .collect()
}

/// Temporal IoU of inclusive snippet segments, each read as `[start, end+1)`.
pub fn iou(a: (usize, usize), b: (usize, usize)) -> f64 {
    let lo = a.0.max(b.0);
    let hi = (a.1 + 1).min(b.1 + 1);
    let inter = hi.saturating_sub(lo) as f64;
    if inter == 0.0 {
        return 0.0;
    }
    let union = (a.1 + 1 - a.0) as f64 + (b.1 + 1 - b.0) as f64 - inter;
    inter / union
}

/// Greedy NMS by descending confidence (earlier start first on ties).
pub fn nms(proposals: &[Proposal], iou_threshold: f64) -> Vec<Proposal> {
    let mut order: Vec<&Proposal> = proposals.iter().collect();
    order.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(a.start.cmp(&b.start))
            .then(a.end.cmp(&b.end))
    });
    let mut kept: Vec<Proposal> = Vec::new();
    for p in order {
        if kept.iter().all(|k| iou(k.segment(), p.segment()) <= iou_threshold) {
            kept.push(*p);
        }
    }
    kept
}

/// Classify, propose per predicted class, then NMS per class.
pub fn localize(tcas: &Tensor2, ratio: f64, cfg: &InferenceConfig) -> Vec<Proposal> {
    let mut out = Vec::new();
    for class in classify_video(tcas, ratio, cfg.theta_c) {
        let props = generate_proposals(&tcas.col(class), class, cfg);
        out.extend(nms(&props, cfg.nms_iou));
    }
    out
}

#[derive(Debug, Serialize)]
struct ProposalRow<'a> {
    video_id: &'a str,
    class: usize,
    start: usize,
    end: usize,
    confidence: f64,
}

/// Writes `video_id,class,start,end,confidence` rows.
pub fn write_proposals_csv(path: impl AsRef<Path>, rows: &[(String, Proposal)]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for (id, p) in rows {
        w.serialize(ProposalRow {
            video_id: id,
            class: p.class,
            start: p.start,
            end: p.end,
            confidence: p.confidence,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prop(start: usize, end: usize, confidence: f64) -> Proposal {
        Proposal {
            start,
            end,
            class: 0,
            confidence,
        }
    }

    #[test]
    fn classification_cases() {
        assert_eq!(classify_probs(&[0.9, 0.025, 0.025, 0.025, 0.025], 0.2), vec![0]);
        assert_eq!(classify_probs(&[0.2; 5], 0.2), vec![0]);
        assert_eq!(classify_probs(&[0.1, 0.3, 0.6], 0.0), vec![0, 1, 2]);
    }

    #[test]
    fn binary_runs() {
        let cfg = InferenceConfig {
            theta_a: vec![0.5],
            normalize_scores: false,
            ..InferenceConfig::default()
        };
        let props = generate_proposals(&[0.0, 1.0, 1.0, 0.0, 0.0, 1.0], 2, &cfg);
        let segs: Vec<_> = props.iter().map(|p| p.segment()).collect();
        assert_eq!(segs, vec![(1, 2), (5, 5)]);
        assert!(props.iter().all(|p| p.class == 2 && p.confidence == 1.0));
    }

    #[test]
    fn nothing_above_threshold() {
        let cfg = InferenceConfig {
            theta_a: vec![0.5, 0.7],
            normalize_scores: false,
            ..InferenceConfig::default()
        };
        assert!(generate_proposals(&[0.1, 0.2, 0.3], 0, &cfg).is_empty());
    }

    #[test]
    fn constant_column_yields_nothing_after_normalization() {
        assert!(generate_proposals(&[2.0; 6], 0, &InferenceConfig::default()).is_empty());
    }

    #[test]
    fn iou_cases() {
        assert!((iou((0, 9), (5, 14)) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(iou((3, 7), (3, 7)), 1.0);
        assert_eq!(iou((0, 4), (5, 9)), 0.0);
    }

    #[test]
    fn nms_cases() {
        let twins = [prop(2, 6, 0.5), prop(2, 6, 0.5)];
        assert_eq!(nms(&twins, 0.7).len(), 1);
        let apart = [prop(0, 2, 0.1), prop(4, 6, 0.9), prop(8, 9, 0.3)];
        assert_eq!(nms(&apart, 0.7).len(), 3);
        // Tie on confidence: earlier start wins.
        let tie = [prop(3, 9, 0.4), prop(2, 9, 0.4)];
        assert_eq!(nms(&tie, 0.5)[0].start, 2);
    }

    #[test]
    fn threshold_grid() {
        let g = threshold_range(0.0, 0.25, 0.025);
        assert_eq!(g.len(), 11);
        assert!((g[10] - 0.25).abs() < 1e-12);
        assert_eq!(parse_threshold_range("[0:0.25:0.025]").unwrap(), g);
        assert_eq!(parse_threshold_range("0:0.15:0.015").unwrap().len(), 11);
        assert!(parse_threshold_range("0:1").is_err());
        InferenceConfig::default().validate().unwrap();
        assert!(InferenceConfig {
            theta_a: vec![0.2, 0.1],
            ..InferenceConfig::default()
        }
        .validate()
        .is_err());
    }
}
