//! `heatcip` command-line front end.
//!
//! Settings are layered: built-in defaults, then `--config`, then
//! `HEATCIP_*` environment variables, then `--set` and the named flags.
//! Exit codes: 0 on success, 2 on invalid input, 1 on runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use heatcip::config::InverseConfig;
use heatcip::forward_sim::BoundaryDataset;
use heatcip::io::{field_from_container, render_field, Container, RenderOptions};
use heatcip::pipeline::{invert, simulate, sweep, write_field, write_result, SweepAxis};
use heatcip::reconstruct::metrics;
use heatcip::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "heatcip", version, about = "Recover a(x) in u_t = Δu + a(x)u from lateral boundary data")]
struct Cli {
    #[command(flatten)]
    settings: Settings,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Settings {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any key, e.g. `--set carleman.lambda=2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Spatial dimension (2 or 3).
    #[arg(long, global = true)]
    dim: Option<usize>,
    /// Nodes per axis.
    #[arg(long, global = true)]
    nodes: Option<usize>,
    /// Number of time steps k.
    #[arg(long, global = true)]
    nt: Option<usize>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Glyph name (A, B, Omega, SZ, L, K) or `zero`.
    #[arg(long, global = true)]
    letter: Option<String>,
    #[arg(long, global = true)]
    amplitude: Option<f64>,
    /// Relative noise level.
    #[arg(long, global = true)]
    sigma: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the forward problem and write the boundary dataset.
    Simulate {
        /// Dataset file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct a(x) from a dataset.
    Invert {
        #[arg(long)]
        data: PathBuf,
        /// Skip metrics against the configured phantom.
        #[arg(long)]
        no_metrics: bool,
    },
    /// Run one inversion per value of a parameter.
    Sweep {
        /// nt, epsilon, lambda, sigma or amplitude.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
    },
    /// Convert a field file to grayscale PGM.
    Render {
        #[arg(long)]
        field: PathBuf,
        /// Output image; 3-D fields also get per-slice images next to it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        clip_negative: bool,
    },
    /// Score a field file against the configured phantom.
    Metrics {
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        clip_negative: bool,
    },
}

fn build_config(s: &Settings) -> Result<InverseConfig> {
    let mut cfg = match &s.config {
        Some(p) => InverseConfig::load(p)?,
        None => InverseConfig::default(),
    };
    cfg.apply_env(std::env::vars())?;
    for kv in &s.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::validation("--set", format!("expected KEY=VALUE, got '{kv}'")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(v) = s.dim {
        cfg.grid.n = v;
    }
    if let Some(v) = s.nodes {
        cfg.grid.nodes = vec![v];
    }
    if let Some(v) = s.nt {
        cfg.time.nt = v;
    }
    if let Some(v) = s.epsilon {
        cfg.time.epsilon = v;
    }
    if let Some(v) = s.lambda {
        cfg.carleman.lambda = v;
    }
    if let Some(v) = s.alpha {
        cfg.carleman.alpha = v;
    }
    if let Some(v) = &s.letter {
        cfg.phantom.letter = v.clone();
    }
    if let Some(v) = s.amplitude {
        cfg.phantom.amplitude = v;
    }
    if let Some(v) = s.sigma {
        cfg.noise.sigma = v;
    }
    if let Some(v) = s.seed {
        cfg.noise.seed = v;
    }
    if let Some(v) = &s.output_dir {
        cfg.output_dir = v.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = build_config(&cli.settings)?;
    match cli.command {
        Command::Simulate { out } => {
            let (data, stats) = simulate(&cfg)?;
            data.write(&out)?;
            cfg.write_snapshot(out.with_extension("config.toml"))?;
            println!(
                "wrote {} ({} samples, {} mesh nodes, {:.1}s)",
                out.display(),
                data.times.len(),
                stats.mesh_nodes,
                stats.seconds
            );
        }
        Command::Invert { data, no_metrics } => {
            let dataset = BoundaryDataset::read(&data)?;
            let phantom = if no_metrics { None } else { Some(cfg.phantom(&cfg.grid()?)?) };
            let res = invert(&cfg, &dataset, phantom.as_ref())?;
            write_result(&cfg.output_dir, &cfg, &res)?;
            let st = &res.state;
            println!(
                "{} iterations, grad norm {:.3e} -> {:.3e}, {}",
                st.iterations,
                st.initial_grad_norm(),
                st.final_grad_norm(),
                if st.converged { "converged" } else { "stopped at max_iters" }
            );
            if let Some(m) = &res.metrics {
                print!("{}", m.to_text());
            }
            println!("results in {}", cfg.output_dir.display());
        }
        Command::Sweep { axis, values } => {
            let axis: SweepAxis = axis.parse()?;
            let rows = sweep(&cfg, axis, &values)?;
            for r in &rows {
                match &r.outcome {
                    Ok((m, g, it)) => println!(
                        "{axis}={}: rel_l2_err {:.3} max {:.3} iou {:.3} ({it} iterations, grad norm {g:.2e})",
                        r.value, m.rel_l2_err, m.max_value, m.iou_at_half_max
                    ),
                    Err(e) => println!("{axis}={}: failed: {e}", r.value),
                }
            }
            println!("summary in {}", cfg.output_dir.join("summary.csv").display());
        }
        Command::Render { field, out, clip_negative } => {
            let f = field_from_container(&Container::read(&field)?)?;
            let opts = RenderOptions { clip_negative };
            if f.grid().dim() == 3 {
                let dir = out.parent().map(PathBuf::from).unwrap_or_default();
                let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("field").to_string();
                write_field(&dir, &stem, &f, opts)?;
            } else {
                render_field(&f, opts)[0].write(&out)?;
            }
            println!("wrote {}", out.display());
        }
        Command::Metrics { field, clip_negative } => {
            let f = field_from_container(&Container::read(&field)?)?;
            let phantom = cfg.phantom(f.grid())?;
            print!("{}", metrics(&f, &phantom, clip_negative)?.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 2 } else { 1 })
        }
    }
}
