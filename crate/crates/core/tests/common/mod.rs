//! Shared fixtures and brute-force oracles for the integration tests.
#![allow(dead_code)]

use motionloc::localization::{iou, Proposal};
use motionloc::metrics::{Detection, GroundTruth};
use motionloc::motiongraph::{build_graph, GraphConfig, GraphMode, MotionGraph};
use motionloc::network::{ModelParams, NetworkConfig};
use motionloc::numcore::{grad_check, Tensor2};
use motionloc::objective::{LossConfig, LossKind};
use motionloc::rng::SeedTree;
use motionloc::runner::loss_and_gradients;
use rand::Rng;

/// A random tiny model instance for gradient checks.
pub struct TinyInstance {
    pub appearance: Tensor2,
    pub motion: Tensor2,
    pub label: Vec<bool>,
    pub net: NetworkConfig,
    pub params: ModelParams,
    pub graph: MotionGraph,
    pub loss: LossConfig,
}

pub fn tiny_instance(seed: u64, mode: GraphMode, kind: LossKind) -> TinyInstance {
    let seeds = SeedTree::new(seed);
    let mut rng = seeds.stream("shape", 0);
    let t = rng.gen_range(2..=8);
    let d = rng.gen_range(1..=6);
    let c = rng.gen_range(1..=4);
    let net = NetworkConfig {
        feature_dim: d,
        num_classes: c,
        ..NetworkConfig::default()
    };
    let mut params = ModelParams::init(&net, &seeds.child("params", 0)).unwrap();
    // Nonzero biases so no unit sits exactly on a ReLU kink.
    let mut brng = seeds.stream("bias", 0);
    for b in [&mut params.embed_b, &mut params.cls_b, &mut params.mot_b] {
        *b = Tensor2::randn(b.rows(), b.cols(), 0.3, &mut brng);
    }
    let appearance = Tensor2::randn(t, d, 1.0, &mut seeds.stream("app", 0));
    let motion = Tensor2::randn(t, d, 1.0, &mut seeds.stream("mot", 0));
    let mut label: Vec<bool> = (0..c).map(|_| rng.gen_bool(0.5)).collect();
    if !label.iter().any(|b| *b) {
        label[rng.gen_range(0..c)] = true;
    }
    let graph_cfg = GraphConfig {
        mode,
        theta_pos: 0.3,
        gamma: 0.2,
        ..GraphConfig::default()
    };
    let graph = build_graph(&motion, &params.projections, &graph_cfg).unwrap();
    TinyInstance {
        appearance,
        motion,
        label,
        net,
        params,
        graph,
        loss: LossConfig {
            kind,
            ..LossConfig::default()
        },
    }
}

/// Max relative error of analytic vs central-difference gradients.
pub fn model_gradient_error(inst: &TinyInstance, h: f64) -> f64 {
    let start: Vec<Tensor2> = inst.params.trainable().into_iter().cloned().collect();
    grad_check(
        |values| {
            let mut p = inst.params.clone();
            p.set_trainable(values)?;
            loss_and_gradients(&inst.appearance, &inst.motion, &inst.label, &inst.graph, &p, &inst.net, &inst.loss)
        },
        &start,
        h,
    )
    .unwrap()
}

/// Checks that `kept` is exactly what greedy suppression must keep:
/// kept ⊆ input, kept pairwise IoU ≤ thr, and every proposal is kept iff no
/// higher-priority kept proposal overlaps it by more than `thr`.
pub fn nms_is_valid(input: &[Proposal], kept: &[Proposal], thr: f64) -> Result<(), String> {
    let outranks = |a: &Proposal, b: &Proposal| {
        a.confidence > b.confidence
            || (a.confidence == b.confidence && (a.start, a.end) < (b.start, b.end))
    };
    for k in kept {
        if !input.contains(k) {
            return Err(format!("{k:?} not in input"));
        }
    }
    for (i, a) in kept.iter().enumerate() {
        for b in &kept[i + 1..] {
            if iou(a.segment(), b.segment()) > thr {
                return Err(format!("{a:?} and {b:?} both kept"));
            }
        }
    }
    for p in input {
        let suppressed = kept
            .iter()
            .any(|k| outranks(k, p) && iou(k.segment(), p.segment()) > thr);
        let is_kept = kept.iter().filter(|k| *k == p).count() >= 1;
        // Exact duplicates: one copy survives, the rest are suppressed by it.
        if !suppressed && !is_kept {
            return Err(format!("{p:?} dropped without a suppressor"));
        }
        if suppressed && is_kept && input.iter().filter(|q| *q == p).count() == 1 {
            return Err(format!("{p:?} kept despite a suppressor"));
        }
    }
    Ok(())
}

/// Every AP a greedy matcher could produce, found by enumerating all
/// detection→ground-truth assignments and keeping those that satisfy the
/// greedy rule. AP is integrated as `(1/G) Σ_{TP k} max_{j≥k} precision(j)`.
pub fn brute_force_aps(dets: &[Detection], gts: &[GroundTruth], thr: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.partial_cmp(&dets[a].confidence).unwrap());
    let ranked: Vec<Detection> = order.iter().map(|&i| dets[i]).collect();
    let overlap = |d: &Detection, g: &GroundTruth| {
        if d.video == g.video {
            iou((d.start, d.end), (g.start, g.end))
        } else {
            0.0
        }
    };

    // choice[k] ∈ {None, Some(g)}; enumerate (G+1)^N assignments.
    let n = ranked.len();
    let radix = gts.len() + 1;
    let mut out = Vec::new();
    for code in 0..radix.pow(n as u32) {
        let mut c = code;
        let choice: Vec<Option<usize>> = (0..n)
            .map(|_| {
                let v = c % radix;
                c /= radix;
                (v > 0).then(|| v - 1)
            })
            .collect();
        let mut used = vec![false; gts.len()];
        let mut ok = true;
        for (k, d) in ranked.iter().enumerate() {
            let best = (0..gts.len())
                .filter(|&g| !used[g])
                .map(|g| overlap(d, &gts[g]))
                .fold(f64::NEG_INFINITY, f64::max);
            match choice[k] {
                Some(g) => {
                    let o = overlap(d, &gts[g]);
                    if used[g] || o <= thr || o < best {
                        ok = false;
                        break;
                    }
                    used[g] = true;
                }
                None => {
                    if best > thr {
                        ok = false;
                        break;
                    }
                }
            }
        }
        if !ok {
            continue;
        }
        let mut tp = 0.0;
        let precision: Vec<f64> = choice
            .iter()
            .enumerate()
            .map(|(k, m)| {
                tp += if m.is_some() { 1.0 } else { 0.0 };
                tp / (k + 1) as f64
            })
            .collect();
        let ap: f64 = (0..n)
            .filter(|&k| choice[k].is_some())
            .map(|k| precision[k..].iter().cloned().fold(0.0, f64::max))
            .sum::<f64>()
            / gts.len() as f64;
        out.push(ap);
    }
    out
}

/// Reference top-k by a full descending sort (stable, so ties keep the lower index).
pub fn topk_by_sort(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap());
    let mut top: Vec<usize> = idx.into_iter().take(k).collect();
    top.sort_unstable();
    top
}
