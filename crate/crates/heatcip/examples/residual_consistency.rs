//! Residuals of the semi-discrete system on the analytic zero-potential
//! stack `v(x, t_i) = |x|²/(4t_i²) − n/(2t_i)` for several time steps.
//!
//! ```text
//! cargo run --release --example residual_consistency -- [epsilon]
//! ```

use heatcip::carleman_core::{zero_potential_derivative_stack, BackgroundTerms, CarlemanParams, Functional};
use heatcip::geometry::{SpatialGrid, TimeGrid};

fn main() -> heatcip::Result<()> {
    let epsilon: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.01);
    let grid = SpatialGrid::standard(2, 20)?;
    let bg = BackgroundTerms::new(&grid, epsilon);
    println!("epsilon = {epsilon}");
    for k in [10, 20, 40, 80] {
        let tg = TimeGrid::new(epsilon, 4.0, k)?;
        let j = Functional::new(&grid, &tg, &bg, &CarlemanParams::default())?;
        let v = zero_potential_derivative_stack(&grid, &tg);
        let r = j.residuals(&v)?;
        let per_layer: Vec<f64> =
            (0..=k).map(|i| r.layer(i).iter().fold(0.0f64, |m, x| m.max(x.abs()))).collect();
        let worst = per_layer.iter().cloned().fold(0.0, f64::max);
        let tail = per_layer[1..].iter().cloned().fold(0.0, f64::max);
        println!(
            "k = {k:3}  h = {:.4}  max_i |L_i| = {worst:.4e}  layer 0: {:.4e}  layers >= 1: {tail:.4e}",
            tg.h(),
            per_layer[0]
        );
    }
    Ok(())
}
