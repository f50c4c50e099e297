//! Picks the auxiliary-domain radius: the smallest candidate whose
//! zero-coefficient solve stays within 1% of the heat kernel on Ω.
//!
//! ```text
//! cargo run --release --example calibrate_radius -- [mesh] [steps]
//! ```

use heatcip::forward_sim::{calibrate_radius, ForwardParams};
use heatcip::geometry::SpatialGrid;

fn main() -> heatcip::Result<()> {
    let mut args = std::env::args().skip(1);
    let mesh: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let steps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(800);
    let grid = SpatialGrid::standard(2, 20)?;
    let params = ForwardParams { mesh, steps, ..ForwardParams::default() };
    let cal = calibrate_radius(&grid, &[3.0, 4.0, 5.0, 6.0, 8.0], &params, 0.1)?;
    for (r, err) in &cal.errors {
        println!("r = {r}: relative L2 error {err:.3e}");
    }
    println!("chosen radius {}", cal.chosen);
    Ok(())
}
