//! Compares backpropagated gradients of both training losses against central
//! finite differences on a tiny random model, for every graph mode.

use motionloc::motiongraph::{build_graph, GraphConfig, GraphMode};
use motionloc::network::{ModelParams, NetworkConfig};
use motionloc::numcore::{grad_check, Tensor2};
use motionloc::objective::{LossConfig, LossKind};
use motionloc::rng::SeedTree;
use motionloc::runner::loss_and_gradients;

fn main() -> motionloc::Result<()> {
    let (t, d, c) = (8, 4, 3);
    let seeds = SeedTree::new(11);
    let net = NetworkConfig {
        feature_dim: d,
        num_classes: c,
        ..NetworkConfig::default()
    };
    let base = ModelParams::init(&net, &seeds)?;
    let appearance = Tensor2::randn(t, d, 1.0, &mut seeds.stream("app", 0));
    let motion = Tensor2::randn(t, d, 1.0, &mut seeds.stream("mot", 0));
    let label = vec![true, false, true];

    for mode in [GraphMode::Sparse, GraphMode::Dense, GraphMode::Mlp] {
        let graph = build_graph(&motion, &base.projections, &GraphConfig { mode, ..GraphConfig::default() })?;
        for kind in [LossKind::Xe, LossKind::MotionGuided] {
            let loss_cfg = LossConfig { kind, ..LossConfig::default() };
            let start: Vec<Tensor2> = base.trainable().into_iter().cloned().collect();
            let err = grad_check(
                |values| {
                    let mut p = base.clone();
                    p.set_trainable(values)?;
                    loss_and_gradients(&appearance, &motion, &label, &graph, &p, &net, &loss_cfg)
                },
                &start,
                1e-6,
            )?;
            println!("{mode:?} / {kind:?}: max relative error {err:.2e}");
        }
    }
    Ok(())
}
