//! Tabulates the motion-guided loss of a single positive class over a grid of
//! predicted probabilities `p` and mean motionness `mu`, and writes it as CSV.
//!
//! ```text
//! cargo run --release --example loss_surface -- [grid] [out.csv]
//! ```

use motionloc::objective::{guided_term, loss_surface, open_unit_grid, write_surface_csv};

fn main() -> motionloc::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|s| s.parse().expect("grid must be an integer")).unwrap_or(50);
    let out = args.next().unwrap_or_else(|| "surface.csv".into());

    let axis = open_unit_grid(n);
    let points = loss_surface(&axis, &axis)?;
    write_surface_csv(&out, &points)?;
    println!("{} points written to {out}", points.len());

    for (name, p, mu) in [("c1", 0.1, 0.1), ("c2", 0.9, 0.1), ("c3", 0.9, 0.9)] {
        println!("{name}: L(p={p}, mu={mu}) = {:.4}", guided_term(p, mu));
    }

    // The loss rises with mu wherever mu^2 * (-ln p) > 1.
    let rising = points
        .windows(2)
        .filter(|w| w[0].p == w[1].p && w[1].loss > w[0].loss)
        .count();
    println!("grid steps along mu where the loss increases: {rising}");
    Ok(())
}
