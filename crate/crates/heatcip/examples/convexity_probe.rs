//! Samples boundary-matched pairs and checks the strong-convexity bound
//! `J(V2) − J(V1) − ⟨J′(V1), V2 − V1⟩ ≥ α‖V2 − V1‖²` at several λ.
//!
//! ```text
//! cargo run --release --example convexity_probe -- [pairs] [smooth|rough]
//! ```

use heatcip::carleman_core::{random_boundary_matched_pair, BackgroundTerms, CarlemanParams, Functional};
use heatcip::geometry::{SpatialGrid, TimeGrid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> heatcip::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let pairs: usize = args.first().and_then(|s| s.parse().ok()).unwrap_or(100);
    let smooth = args.get(1).map_or(true, |s| s != "rough");

    let grid = SpatialGrid::standard(2, 20)?;
    let tg = TimeGrid::new(0.01, 4.0, 20)?;
    let bg = BackgroundTerms::new(&grid, tg.epsilon());
    for lambda in [1.0, 2.0, 3.0, 5.0] {
        let params = CarlemanParams { lambda, ..CarlemanParams::default() };
        let j = Functional::new(&grid, &tg, &bg, &params)?;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut pass = 0;
        let mut worst = f64::INFINITY;
        for _ in 0..pairs {
            let (v1, v2) = random_boundary_matched_pair(&grid, tg.k() + 1, 10.0, smooth, &mut rng);
            let gap = j.convexity_probe(&v1, &v2)?;
            let bound = params.alpha * j.norm_sq_of_difference(&v1, &v2);
            worst = worst.min(gap / bound);
            if gap >= bound * (1.0 - 1e-6) {
                pass += 1;
            }
        }
        println!("lambda {lambda}: {pass}/{pairs} pairs satisfy the bound, worst gap/bound {worst:.3e}");
    }
    Ok(())
}
