//! Solves the forward problem for a letter phantom and writes the lateral
//! data to a dataset file.
//!
//! ```text
//! cargo run --release --example forward_solve -- [letter] [out.csv]
//! ```

use heatcip::forward_sim::{extract_boundary_data, solve_parabolic, ForwardParams};
use heatcip::geometry::SpatialGrid;
use heatcip::phantom::letter_phantom;

fn main() -> heatcip::Result<()> {
    let mut args = std::env::args().skip(1);
    let letter = args.next().unwrap_or_else(|| "A".into()).parse()?;
    let out = args.next().unwrap_or_else(|| "target/forward_solve.csv".into());

    let grid = SpatialGrid::standard(2, 20)?;
    let phantom = letter_phantom(&grid, letter, 1.0)?;
    let (field, stats) = solve_parabolic(&grid, &phantom, &ForwardParams::default())?;
    println!(
        "{} mesh nodes, {} steps, {} CG iterations (max {} per step), {:.2}s",
        stats.mesh_nodes, stats.steps, stats.total_cg_iterations, stats.max_cg_iterations, stats.seconds
    );
    let data = extract_boundary_data(&field)?;
    data.write(&out)?;
    println!("wrote {} time samples to {out}", data.times.len());
    Ok(())
}
