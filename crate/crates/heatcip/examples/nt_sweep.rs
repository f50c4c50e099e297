//! Sweeps the number of time steps on the letter-B benchmark. The data are
//! simulated once and shared; every entry gets its own directory and the
//! summary lands in `<out_dir>/summary.csv`.
//!
//! ```text
//! cargo run --release --example nt_sweep -- [out_dir] [values...]
//! ```

use heatcip::config::InverseConfig;
use heatcip::pipeline::{sweep, SweepAxis};

fn main() -> heatcip::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg = InverseConfig::default();
    cfg.output_dir = args.first().map_or("target/nt_sweep".into(), Into::into);
    cfg.noise.sigma = 0.01;
    let mut values: Vec<f64> = args.iter().skip(1).filter_map(|s| s.parse().ok()).collect();
    if values.is_empty() {
        values = vec![10.0, 20.0, 40.0];
    }

    for row in sweep(&cfg, SweepAxis::Nt, &values)? {
        match row.outcome {
            Ok((m, grad, iters)) => println!(
                "nt = {:3}: rel_l2_err {:.3}  max {:.3}  IoU {:.3}  ({iters} iterations, grad norm {grad:.2e})",
                row.value, m.rel_l2_err, m.max_value, m.iou_at_half_max
            ),
            Err(e) => println!("nt = {:3}: {e}", row.value),
        }
    }
    println!("summary in {}", cfg.output_dir.join("summary.csv").display());
    Ok(())
}
