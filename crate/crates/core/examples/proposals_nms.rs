//! Turns a hand-made class activation sequence into scored proposals:
//! video classification, multi-threshold grouping, then NMS.

use motionloc::localization::{classify_video, generate_proposals, localize, nms, InferenceConfig};
use motionloc::numcore::Tensor2;

fn main() {
    // 24 snippets, 2 classes. Class 0 fires twice, class 1 stays flat.
    let t = 24;
    let mut tcas = Tensor2::zeros(t, 2);
    for s in 0..t {
        let bump = |c: f64, w: f64| (-((s as f64 - c) / w).powi(2)).exp();
        tcas.set(s, 0, 2.0 * bump(6.0, 2.5) + 1.6 * bump(17.0, 1.5));
        tcas.set(s, 1, 0.1);
    }
    let cfg = InferenceConfig::default();

    let classes = classify_video(&tcas, 8.0, cfg.theta_c);
    println!("predicted classes: {classes:?}");

    let raw = generate_proposals(&tcas.col(0), 0, &cfg);
    println!("{} candidate segments across {} thresholds", raw.len(), cfg.theta_a.len());
    for p in nms(&raw, cfg.nms_iou) {
        println!("  [{:2}, {:2}] conf {:.3}", p.start, p.end, p.confidence);
    }
    println!("localize() returns {} proposals", localize(&tcas, 8.0, &cfg).len());
}
