//! Trains the default model on the default corpus, evaluates it on the test
//! split and writes the checkpoint, loss curve and report.
//!
//! ```text
//! cargo run --release --example train_eval -- [config.json] [out-dir]
//! ```

use std::time::Instant;

use motionloc::datagen::generate_corpus;
use motionloc::runner::{evaluate, save_evaluation, save_training, train, ExperimentConfig};

fn main() -> motionloc::Result<()> {
    let mut args = std::env::args().skip(1);
    let cfg = match args.next() {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let out = args.next().map(Into::into).unwrap_or_else(|| cfg.resolved_output_dir().join("train_eval"));

    let corpus = generate_corpus(&cfg.corpus)?;
    let started = Instant::now();
    let outcome = train(&cfg, &corpus)?;
    println!("trained {} epochs in {:.1}s", cfg.training.epochs, started.elapsed().as_secs_f64());
    for (epoch, loss) in outcome.loss_curve.iter().step_by((cfg.training.epochs / 10).max(1)) {
        println!("  epoch {epoch:4}  loss {loss:.4}");
    }

    let eval = evaluate(&outcome.params, &cfg.network(), &corpus.test, &cfg)?;
    save_training(&out, &cfg, &outcome)?;
    save_evaluation(&out, &eval)?;
    for (t, m) in &eval.report.map {
        println!("mAP@{t}: {:.1}", 100.0 * m);
    }
    println!("avg mAP 0.5:0.95: {:.1}", 100.0 * eval.report.avg_map);
    for (stream, kl) in &eval.report.kl {
        println!("KL(gt || {stream} guidance): {kl:.4}");
    }
    println!("outputs in {}", out.display());
    Ok(())
}
