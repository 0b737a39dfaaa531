//! Video-level aggregation and the two training losses.
//!
//! For each class the `k = max(1, ⌊T/r⌋)` largest TCAS entries are averaged
//! into a video score; a softmax over classes gives `p`. The cross-entropy loss
//! is `−Σ_c ŷ_c log p_c` with `ŷ` the label divided by its positive count. The
//! motion-guided loss weights each class term by `μ_c²`, the squared mean
//! motionness over that class's top-k snippets, and adds `−log μ_c²`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{softmax_in_place, topk_indices, Tape, Tensor2, Var};

/// Lower clamp on probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Xe,
    MotionGuided,
}

/// Classes covered by the `−log μ²` term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerMask {
    AllClasses,
    PositiveOnly,
    /// Drop the term entirely.
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Selection ratio `r`.
    pub ratio: f64,
    pub regularizer: RegularizerMask,
    pub kind: LossKind,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            ratio: 8.0,
            regularizer: RegularizerMask::AllClasses,
            kind: LossKind::MotionGuided,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio >= 1.0) {
            return Err(Error::Config(format!("selection ratio {} must be >= 1", self.ratio)));
        }
        Ok(())
    }
}

/// `max(1, ⌊T/r⌋)`.
pub fn topk_count(snippets: usize, ratio: f64) -> usize {
    ((snippets as f64 / ratio).floor() as usize).clamp(1, snippets.max(1))
}

#[derive(Debug, Clone)]
pub struct AggregationResult {
    /// `1×C` top-k means.
    pub scores: Var,
    /// `1×C` softmax of `scores`.
    pub probs: Var,
    /// Selected snippets per class.
    pub topk: Vec<Vec<usize>>,
    pub k: usize,
}

pub fn aggregate_topk(tape: &mut Tape, tcas: Var, ratio: f64) -> Result<AggregationResult> {
    let t = tape.value(tcas).rows();
    if t == 0 {
        return Err(Error::dim("aggregate_topk", "no snippets"));
    }
    let k = topk_count(t, ratio);
    let (scores, topk) = tape.topk_mean_cols(tcas, k)?;
    let probs = tape.softmax_rows(scores);
    Ok(AggregationResult { scores, probs, topk, k })
}

/// Tape-free aggregation used at inference: `(scores, probs, topk)`.
pub fn aggregate_values(tcas: &Tensor2, ratio: f64) -> (Vec<f64>, Vec<f64>, Vec<Vec<usize>>) {
    let k = topk_count(tcas.rows(), ratio);
    let mut scores = Vec::with_capacity(tcas.cols());
    let mut sets = Vec::with_capacity(tcas.cols());
    for c in 0..tcas.cols() {
        let col = tcas.col(c);
        let idx = topk_indices(&col, k);
        scores.push(idx.iter().map(|&t| col[t]).sum::<f64>() / k as f64);
        sets.push(idx);
    }
    let mut probs = scores.clone();
    softmax_in_place(&mut probs);
    (scores, probs, sets)
}

/// Label divided by its positive count.
pub fn normalized_label(label: &[bool]) -> Result<Vec<f64>> {
    let n = label.iter().filter(|b| **b).count();
    if n == 0 {
        return Err(Error::Config("label has no positive class".into()));
    }
    Ok(label.iter().map(|&b| if b { 1.0 / n as f64 } else { 0.0 }).collect())
}

fn log_probs(tape: &mut Tape, agg: &AggregationResult) -> Result<Var> {
    let p = tape.clamp(agg.probs, PROB_FLOOR, f64::INFINITY);
    tape.log(p)
}

fn check_label(tape: &Tape, agg: &AggregationResult, label: &[bool]) -> Result<Tensor2> {
    let c = tape.value(agg.probs).cols();
    if label.len() != c {
        return Err(Error::dim("loss", format!("label of {} classes for {c} scores", label.len())));
    }
    Ok(Tensor2::row_vector(&normalized_label(label)?))
}

/// `−Σ_c ŷ_c log p_c`.
pub fn xe_loss(tape: &mut Tape, agg: &AggregationResult, label: &[bool]) -> Result<Var> {
    let target = check_label(tape, agg, label)?;
    let logp = log_probs(tape, agg)?;
    let weighted = tape.mul_const(logp, target)?;
    let total = tape.sum(weighted);
    Ok(tape.scale(total, -1.0))
}

/// Mean motionness over each class's top-k snippets, `1×C`.
pub fn video_motionness(tape: &mut Tape, motionness: Var, topk: &[Vec<usize>]) -> Result<Var> {
    tape.gather_mean(motionness, topk)
}

/// `−Σ_c μ_c² ŷ_c log p_c − Σ_{c∈R} log μ_c²`.
pub fn motion_guided_loss(
    tape: &mut Tape,
    agg: &AggregationResult,
    mu: Var,
    label: &[bool],
    regularizer: RegularizerMask,
) -> Result<Var> {
    let target = check_label(tape, agg, label)?;
    let c = label.len();
    if tape.value(mu).shape() != (1, c) {
        return Err(Error::dim("motion_guided_loss", format!("mu {:?} for {c} classes", tape.value(mu).shape())));
    }
    let logp = log_probs(tape, agg)?;
    let mu2 = tape.square(mu);
    let weighted = tape.mul(mu2, logp)?;
    let weighted = tape.mul_const(weighted, target)?;
    let cls = tape.sum(weighted);
    let cls = tape.scale(cls, -1.0);

    let mask: Vec<f64> = match regularizer {
        RegularizerMask::AllClasses => vec![1.0; c],
        RegularizerMask::PositiveOnly => label.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        RegularizerMask::Off => return Ok(cls),
    };
    let log_mu2 = tape.log(mu2)?;
    let masked = tape.mul_const(log_mu2, Tensor2::row_vector(&mask))?;
    let reg = tape.sum(masked);
    let reg = tape.scale(reg, -1.0);
    tape.add(cls, reg)
}

/// Full per-video loss from a forward pass.
pub fn video_loss(tape: &mut Tape, tcas: Var, motionness: Var, label: &[bool], cfg: &LossConfig) -> Result<Var> {
    let agg = aggregate_topk(tape, tcas, cfg.ratio)?;
    match cfg.kind {
        LossKind::Xe => xe_loss(tape, &agg, label),
        LossKind::MotionGuided => {
            let mu = video_motionness(tape, motionness, &agg.topk)?;
            motion_guided_loss(tape, &agg, mu, label, cfg.regularizer)
        }
    }
}

/// Single positive-class term `−μ² log p − log μ²`.
pub fn guided_term(p: f64, mu: f64) -> f64 {
    -mu * mu * p.ln() - (mu * mu).ln()
}

/// `n` evenly spaced points strictly inside `(0, 1)`: `i/(n+1)`.
pub fn open_unit_grid(n: usize) -> Vec<f64> {
    (1..=n).map(|i| i as f64 / (n + 1) as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfacePoint {
    pub p: f64,
    pub mu: f64,
    pub loss: f64,
}

/// Evaluates [`guided_term`] on the grid, `p` major.
pub fn loss_surface(p_grid: &[f64], mu_grid: &[f64]) -> Result<Vec<SurfacePoint>> {
    let inside = |v: &f64| *v > 0.0 && *v < 1.0;
    if !p_grid.iter().all(inside) || !mu_grid.iter().all(inside) {
        return Err(Error::Config("surface grid values must lie in (0, 1)".into()));
    }
    Ok(p_grid
        .iter()
        .flat_map(|&p| mu_grid.iter().map(move |&mu| SurfacePoint { p, mu, loss: guided_term(p, mu) }))
        .collect())
}

/// Writes `p,mu,loss` rows.
pub fn write_surface_csv(path: impl AsRef<std::path::Path>, points: &[SurfacePoint]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for pt in points {
        w.serialize(pt)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tape_with(tcas: Tensor2) -> (Tape, Var) {
        let mut tape = Tape::new();
        let v = tape.leaf(tcas);
        (tape, v)
    }

    #[test]
    fn k_equals_one_is_max() {
        let col = [0.3, 2.0, 1.0, 0.0, 0.5, 1.5, 0.2, 0.1];
        let (mut tape, v) = tape_with(Tensor2::column(&col));
        let agg = aggregate_topk(&mut tape, v, 8.0).unwrap();
        assert_eq!(agg.k, 1);
        assert_eq!(tape.value(agg.scores).data(), &[2.0]);
    }

    #[test]
    fn hand_topk_column() {
        let (mut tape, v) = tape_with(Tensor2::column(&[3.0, 1.0, 2.0, 0.0]));
        let agg = aggregate_topk(&mut tape, v, 2.0).unwrap();
        assert_eq!(tape.value(agg.scores).data(), &[2.5]);
        let mut set = agg.topk[0].clone();
        set.sort();
        assert_eq!(set, vec![0, 2]);
    }

    #[test]
    fn short_video_keeps_k_at_least_one() {
        assert_eq!(topk_count(3, 8.0), 1);
        assert_eq!(topk_count(64, 8.0), 8);
    }

    fn xe_for(scores: &[f64], label: &[bool]) -> f64 {
        // A single-row TCAS with r = 1 makes the scores the logits.
        let (mut tape, v) = tape_with(Tensor2::row_vector(scores));
        let agg = aggregate_topk(&mut tape, v, 1.0).unwrap();
        let l = xe_loss(&mut tape, &agg, label).unwrap();
        tape.scalar_value(l)
    }

    #[test]
    fn xe_cases() {
        let l = xe_for(&[800.0, 0.0, 0.0], &[true, false, false]);
        assert!(l.abs() < 1e-12);
        let l = xe_for(&[0.0; 5], &[true, false, false, false, false]);
        assert!((l - 5f64.ln()).abs() < 1e-12);
        let l = xe_for(&[0.0, 0.0, -900.0], &[true, true, false]);
        assert!((l - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn xe_requires_a_positive_class() {
        let (mut tape, v) = tape_with(Tensor2::row_vector(&[1.0, 2.0]));
        let agg = aggregate_topk(&mut tape, v, 1.0).unwrap();
        assert!(xe_loss(&mut tape, &agg, &[false, false]).is_err());
    }

    #[test]
    fn video_motionness_cases() {
        let mut tape = Tape::new();
        let m = tape.leaf(Tensor2::column(&[0.2, 0.8, 0.5]));
        let mu = video_motionness(&mut tape, m, &[vec![1, 2], vec![0, 1, 2]]).unwrap();
        assert!((tape.value(mu).get(0, 0) - 0.65).abs() < 1e-12);
        let s = tape.sum(mu);
        let g = tape.backward(s).unwrap();
        let gm = g.get(m).unwrap();
        assert!((gm.get(0, 0) - 1.0 / 3.0).abs() < 1e-12);
        assert!((gm.get(1, 0) - (0.5 + 1.0 / 3.0)).abs() < 1e-12);

        let mut tape = Tape::new();
        let m = tape.leaf(Tensor2::filled(4, 1, 0.3));
        let mu = video_motionness(&mut tape, m, &[vec![0], vec![1, 3]]).unwrap();
        assert!(tape.value(mu).data().iter().all(|v| (v - 0.3).abs() < 1e-15));
    }

    fn both_losses(tcas: Tensor2, mu_value: f64, label: &[bool], reg: RegularizerMask) -> (f64, f64) {
        let c = tcas.cols();
        let (mut tape, v) = tape_with(tcas);
        let agg = aggregate_topk(&mut tape, v, 2.0).unwrap();
        let la = xe_loss(&mut tape, &agg, label).unwrap();
        let mu = tape.leaf(Tensor2::filled(1, c, mu_value));
        let lg = motion_guided_loss(&mut tape, &agg, mu, label, reg).unwrap();
        (tape.scalar_value(la), tape.scalar_value(lg))
    }

    #[test]
    fn unit_motionness_collapses_to_xe() {
        let tcas = Tensor2::from_rows(&[&[1.0, 0.2, 0.0], &[0.5, 0.9, 0.3], &[0.1, 0.4, 2.0], &[0.0, 0.0, 0.7]]);
        let (la, lg) = both_losses(tcas, 1.0, &[true, false, true], RegularizerMask::AllClasses);
        assert_eq!(la, lg);
    }

    #[test]
    fn regularizer_masks() {
        let tcas = Tensor2::from_rows(&[&[1.0, 0.2, 0.0], &[0.5, 0.9, 0.3]]);
        let label = [true, false, false];
        let (la, all) = both_losses(tcas.clone(), 0.5, &label, RegularizerMask::AllClasses);
        let (_, pos) = both_losses(tcas.clone(), 0.5, &label, RegularizerMask::PositiveOnly);
        let (_, off) = both_losses(tcas, 0.5, &label, RegularizerMask::Off);
        let reg = -(0.25f64).ln();
        assert!((off - 0.25 * la).abs() < 1e-12);
        assert!((pos - off - reg).abs() < 1e-12);
        assert!((all - off - 3.0 * reg).abs() < 1e-12);
    }

    #[test]
    fn surface_corner_ordering() {
        let c1 = guided_term(0.1, 0.1);
        let c2 = guided_term(0.9, 0.1);
        let c3 = guided_term(0.9, 0.9);
        assert!(c1 > c2 && c2 > c3);
        assert!(guided_term(1.0, 1.0).abs() < 1e-15);
    }

    /// ∂L/∂μ = −2μ log p − 2/μ, negative exactly where μ²·(−log p) < 1.
    #[test]
    fn mu_derivative_sign_region() {
        let grid = open_unit_grid(50);
        for &p in &grid {
            for &mu in &grid {
                let h = 1e-6;
                let numeric = (guided_term(p, mu + h) - guided_term(p, mu - h)) / (2.0 * h);
                let analytic = -2.0 * mu * p.ln() - 2.0 / mu;
                assert!((numeric - analytic).abs() < 1e-5 * analytic.abs().max(1.0));
                let boundary = mu * mu * (-p.ln());
                if (boundary - 1.0).abs() > 1e-6 {
                    assert_eq!(analytic < 0.0, boundary < 1.0, "p={p} mu={mu}");
                }
            }
        }
    }

    #[test]
    fn surface_decreases_along_p() {
        let grid = open_unit_grid(50);
        let pts = loss_surface(&grid, &grid).unwrap();
        assert_eq!(pts.len(), 2500);
        for j in 0..50 {
            for i in 1..50 {
                assert!(pts[i * 50 + j].loss < pts[(i - 1) * 50 + j].loss);
            }
        }
        assert!(loss_surface(&[0.0], &[0.5]).is_err());
    }
}
