//! Builds a configuration the way the CLI does: defaults, a TOML file,
//! `HEATCIP_*` variables and single-key overrides, then prints the snapshot
//! a run would store.
//!
//! ```text
//! HEATCIP_CARLEMAN__LAMBDA=2 cargo run --example config_layers -- [config.toml] [key=value...]
//! ```

use heatcip::config::InverseConfig;

fn main() -> heatcip::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (file, sets) = match args.first() {
        Some(a) if !a.contains('=') => (Some(a.as_str()), &args[1..]),
        _ => (None, &args[..]),
    };
    let mut cfg = match file {
        Some(path) => InverseConfig::load(path)?,
        None => InverseConfig::default(),
    };
    cfg.apply_env(std::env::vars())?;
    for kv in sets {
        if let Some((k, v)) = kv.split_once('=') {
            cfg.set(k, v)?;
        }
    }
    cfg.validate()?;
    let tg = cfg.time_grid()?;
    println!("# h = {:.5}, grid {} nodes", tg.h(), cfg.grid()?.len());
    print!("{}", cfg.to_toml());
    Ok(())
}
