//! Generates the default synthetic corpus, writes it to disk and prints a few
//! statistics about intervals and confounder snippets.
//!
//! ```text
//! cargo run --release --example generate_corpus -- [out-dir]
//! ```

use motionloc::datagen::{generate_corpus, load_corpus, save_corpus, CorpusSpec};

fn main() -> motionloc::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "runs/corpus".into());
    let spec = CorpusSpec::default();
    let corpus = generate_corpus(&spec)?;
    save_corpus(&out, &corpus)?;

    let (mut background, mut confounders, mut intervals, mut action) = (0, 0, 0, 0);
    for v in corpus.videos() {
        let mask = v.action_mask();
        action += mask.iter().filter(|m| **m).count();
        background += mask.iter().filter(|m| !**m).count();
        confounders += v.confounders.len();
        intervals += v.intervals.len();
    }
    let n = (corpus.train.len() + corpus.test.len()) as f64;
    println!("{} train / {} test videos, T={} d={} C={}", corpus.train.len(), corpus.test.len(), spec.snippets, spec.feature_dim, spec.num_classes);
    println!("intervals per video: {:.2}", intervals as f64 / n);
    println!("action snippet fraction: {:.3}", action as f64 / (action + background) as f64);
    println!("confounder fraction of background: {:.3}", confounders as f64 / background as f64);

    let first = &corpus.train[0];
    println!("{}: label {:?}, intervals {:?}", first.id, first.label_f64(), first.intervals);

    let back = load_corpus(&out)?;
    assert_eq!(back, corpus, "reloaded corpus differs");
    println!("saved and reloaded losslessly from {out}");
    Ok(())
}
