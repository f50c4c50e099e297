//! Rasterizes every built-in glyph on the 20×20 grid and writes one PGM per
//! letter, plus the extruded 3-D letter L as per-slice images.
//!
//! ```text
//! cargo run --release --example render_phantoms -- [out_dir]
//! ```

use std::path::PathBuf;

use heatcip::geometry::SpatialGrid;
use heatcip::io::RenderOptions;
use heatcip::phantom::{letter_phantom, Letter};
use heatcip::pipeline::write_field;

fn main() -> heatcip::Result<()> {
    let out: PathBuf = std::env::args().nth(1).map_or("target/phantoms".into(), Into::into);
    let grid = SpatialGrid::standard(2, 20)?;
    for letter in Letter::ALL {
        let p = letter_phantom(&grid, letter, 1.0)?;
        write_field(&out, &format!("letter_{letter}"), p.values(), RenderOptions::default())?;
        println!("{letter}: {} of {} nodes inside", p.mask_count(), grid.len());
    }
    let grid3 = SpatialGrid::standard(3, 12)?;
    let l = letter_phantom(&grid3, Letter::L, 1.0)?;
    let files = write_field(&out, "letter_L_3d", l.values(), RenderOptions::default())?;
    println!("3-D L: {} files", files.len());
    println!("images in {}", out.display());
    Ok(())
}
