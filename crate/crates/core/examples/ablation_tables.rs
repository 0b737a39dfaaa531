//! Trains and evaluates the loss-function and motion-graph ablation tables on
//! one shared corpus, then prints mAP and KL per cell.
//!
//! ```text
//! cargo run --release --example ablation_tables -- [base-config.json] [out-dir]
//! ```
//!
//! Without a config file the default experiment (200 epochs) is used.

use std::path::PathBuf;
use std::time::Instant;

use motionloc::runner::{ablate, AblationMatrix, ExperimentConfig, ABLATION_IOU};

fn main() -> motionloc::Result<()> {
    let mut args = std::env::args().skip(1);
    let base = match args.next() {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let out = args.next().map(PathBuf::from);

    let matrix = AblationMatrix::standard(base);
    let started = Instant::now();
    let results = ablate(&matrix, out.as_deref())?;

    let mut table = String::new();
    for r in &results {
        if r.table != table {
            table = r.table.clone();
            println!("\n{table}");
            let heads: Vec<String> = ABLATION_IOU.iter().map(|t| format!("@{t}")).collect();
            println!("{:<30} {}  kl", "cell", heads.join("    "));
        }
        match &r.outcome {
            Ok(_) => {
                let maps: Vec<String> = ABLATION_IOU
                    .iter()
                    .map(|&t| format!("{:5.1}", 100.0 * r.map_at(t).unwrap_or(0.0)))
                    .collect();
                let kl = r.kl().map(|k| format!("{k:.4}")).unwrap_or_else(|| "--".into());
                println!("{:<30} {}  {kl}", r.cell, maps.join("  "));
            }
            Err(e) => println!("{:<30} failed: {e}", r.cell),
        }
    }
    println!("\n{} cells in {:.1}s", results.len(), started.elapsed().as_secs_f64());
    Ok(())
}
