//! Full pipeline on a letter phantom: simulate, add noise, invert, and
//! write the reconstruction with its metrics.
//!
//! ```text
//! cargo run --release --example reconstruct_letter -- [letter] [amplitude] [sigma] [out_dir]
//! ```

use heatcip::config::InverseConfig;
use heatcip::pipeline::{invert, simulate, write_result};

fn main() -> heatcip::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg = InverseConfig::default();
    cfg.phantom.letter = args.first().cloned().unwrap_or_else(|| "B".into());
    cfg.phantom.amplitude = args.get(1).map_or(Ok(2.0), |s| s.parse()).unwrap_or(2.0);
    cfg.noise.sigma = args.get(2).map_or(Ok(0.01), |s| s.parse()).unwrap_or(0.01);
    cfg.output_dir = args.get(3).map_or("target/reconstruct_letter".into(), Into::into);

    let (data, stats) = simulate(&cfg)?;
    println!("forward solve: {:.1}s", stats.seconds);
    let grid = cfg.grid()?;
    let phantom = cfg.phantom(&grid)?;
    let res = invert(&cfg, &data, Some(&phantom))?;
    let st = &res.state;
    println!(
        "{} iterations, converged {}, grad norm {:.3e} -> {:.3e}, {:.1}s",
        st.iterations,
        st.converged,
        st.initial_grad_norm(),
        st.final_grad_norm(),
        res.seconds
    );
    if let Some(m) = &res.metrics {
        print!("{}", m.to_text());
    }
    write_result(&cfg.output_dir, &cfg, &res)?;
    println!("results in {}", cfg.output_dir.display());
    Ok(())
}
