//! Compares the analytic gradient of the functional with central finite
//! differences on a small random instance.

use heatcip::carleman_core::{BackgroundTerms, CarlemanParams, Functional};
use heatcip::geometry::{FieldStack, SpatialGrid, TimeGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> heatcip::Result<()> {
    let grid = SpatialGrid::standard(2, 8)?;
    let tg = TimeGrid::new(0.01, 4.0, 5)?;
    let bg = BackgroundTerms::new(&grid, tg.epsilon());
    let j = Functional::new(&grid, &tg, &bg, &CarlemanParams::default())?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let data = (0..grid.len() * 6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let v = FieldStack::from_vec(&grid, 6, data)?;
    let (value, grad) = j.value_and_gradient(&v)?;
    println!("J = {value:e}");

    let mut worst = 0.0f64;
    for _ in 0..20 {
        let idx = rng.gen_range(0..v.as_slice().len());
        let step = 1e-5;
        let mut vp = v.clone();
        vp.as_mut_slice()[idx] += step;
        let mut vm = v.clone();
        vm.as_mut_slice()[idx] -= step;
        let fd = (j.value(&vp)? - j.value(&vm)?) / (2.0 * step);
        let an = grad.as_slice()[idx];
        let rel = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-300);
        worst = worst.max(rel);
        println!("coord {idx:4}: analytic {an:+.10e}  finite difference {fd:+.10e}  rel {rel:.2e}");
    }
    println!("worst relative error {worst:.2e}");
    Ok(())
}
