//! Builds sparse and dense motion graphs for every video of the default
//! corpus and compares how far the adjacency weight sits from the diagonal.
//!
//! ```text
//! cargo run --release --example motion_graph -- [video-id] [out.csv]
//! ```
//! With a video id, that video's sparse adjacency is also written as CSV.

use motionloc::datagen::{generate_corpus, CorpusSpec};
use motionloc::motiongraph::{build_graph, mean_temporal_distance, write_adjacency_csv, GraphConfig, GraphMode, Projections};

fn main() -> motionloc::Result<()> {
    let corpus = generate_corpus(&CorpusSpec::default())?;
    let sparse = GraphConfig::default();
    let dense = GraphConfig {
        mode: GraphMode::Dense,
        ..GraphConfig::default()
    };
    let proj = Projections::identity(corpus.spec.feature_dim);

    let (mut wins, mut total) = (0, 0);
    let (mut sum_sparse, mut sum_dense) = (0.0, 0.0);
    let mut edges = 0usize;
    for v in corpus.videos() {
        let gs = build_graph(&v.motion, &proj, &sparse)?;
        let gd = build_graph(&v.motion, &proj, &dense)?;
        let (ds, dd) = (mean_temporal_distance(&gs.adjacency), mean_temporal_distance(&gd.adjacency));
        sum_sparse += ds;
        sum_dense += dd;
        edges += gs.edge_count();
        wins += usize::from(ds > dd);
        total += 1;
    }
    let n = total as f64;
    println!("videos: {total}");
    println!("mean sparse edges per video: {:.1}", edges as f64 / n);
    println!("mean temporal distance  sparse {:.3}  dense {:.3}", sum_sparse / n, sum_dense / n);
    println!("sparse farther from diagonal on {wins}/{total} videos");

    let mut args = std::env::args().skip(1);
    if let Some(id) = args.next() {
        let out = args.next().unwrap_or_else(|| format!("{id}_adjacency.csv"));
        let v = corpus
            .videos()
            .find(|v| v.id == id)
            .ok_or_else(|| motionloc::Error::Config(format!("no video {id}")))?;
        let g = build_graph(&v.motion, &proj, &sparse)?;
        write_adjacency_csv(&out, &g.adjacency)?;
        println!("{id}: {} positional, {} semantic edges -> {out}", g.pos_edges.len(), g.smt_edges.len());
    }
    Ok(())
}
