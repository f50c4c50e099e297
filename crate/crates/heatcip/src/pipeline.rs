//! End-to-end runs: simulate, invert, sweep, and their output files.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use crate::carleman_core::{zero_potential_stack, BackgroundTerms, Functional};
use crate::config::{InverseConfig, ReferenceMode};
use crate::data_model::{add_noise, discretize_boundary};
use crate::error::{Error, Result};
use crate::forward_sim::{extract_boundary_data, solve_parabolic, BoundaryDataset, ForwardStats};
use crate::geometry::{FieldStack, ScalarField};
use crate::io::{field_container, mid_slice, render_field, stack_container, write_bytes, RenderOptions};
use crate::optimizer::{decay_base, initial_guess, minimize, Constraints, InitialGuess, OptimState};
use crate::phantom::Phantom;
use crate::reconstruct::{metrics, reconstruct, Metrics};

/// Runs the forward problem for the configured phantom and returns the
/// lateral data, with noise if `noise.sigma > 0`.
pub fn simulate(cfg: &InverseConfig) -> Result<(BoundaryDataset, ForwardStats)> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let phantom = cfg.phantom(&grid)?;
    simulate_phantom(cfg, &phantom)
}

/// [`simulate`] with an explicit phantom.
pub fn simulate_phantom(cfg: &InverseConfig, phantom: &Phantom) -> Result<(BoundaryDataset, ForwardStats)> {
    let (field, stats) = solve_parabolic(phantom.grid(), phantom, &cfg.forward())?;
    let mut data = extract_boundary_data(&field)?;
    data.meta = vec![
        ("phantom".into(), cfg.phantom.letter.clone()),
        ("amplitude".into(), cfg.phantom.amplitude.to_string()),
        ("forward.radius".into(), cfg.forward.radius.to_string()),
        ("forward.mesh".into(), cfg.forward.mesh.to_string()),
        ("forward.steps".into(), cfg.forward.steps.to_string()),
    ];
    if cfg.noise.sigma > 0.0 {
        data = add_noise(&data, cfg.noise.sigma, cfg.noise.seed)?;
    }
    Ok((data, stats))
}

/// Everything an inversion produces.
#[derive(Clone, Debug)]
pub struct ReconstructionResult {
    pub a_comp: ScalarField,
    pub w_layers: FieldStack,
    pub state: OptimState,
    pub metrics: Option<Metrics>,
    pub seconds: f64,
}

/// Boundary data → initial guess → minimization → coefficient. Metrics are
/// computed when a phantom is given.
pub fn invert(cfg: &InverseConfig, data: &BoundaryDataset, phantom: Option<&Phantom>) -> Result<ReconstructionResult> {
    cfg.validate()?;
    let start = Instant::now();
    let grid = cfg.grid()?;
    grid.check_same(&data.grid)?;
    let tg = cfg.time_grid()?;
    let bg = BackgroundTerms::new(&grid, tg.epsilon());
    let dbd = discretize_boundary(data, &tg, cfg.discretize_options())?;
    let cons = Constraints::new(&dbd)?;

    let reference = match cfg.carleman.reference {
        ReferenceMode::Background => Some(zero_potential_stack(&grid, &tg)),
        ReferenceMode::None => None,
    };
    let mut j = Functional::new(&grid, &tg, &bg, &cfg.carleman())?;
    if let Some(r) = &reference {
        j = j.with_reference(r.clone())?;
    }
    let base = match (cfg.initial_guess(), &reference) {
        (InitialGuess::Reference, Some(r)) => r.clone(),
        _ => decay_base(&grid, &tg),
    };
    let v0 = initial_guess(&cons, &base);
    let state = minimize(&j, &cons, &v0, &cfg.optimizer())?;
    let (a_comp, w_layers) = reconstruct(&state.v, reference.as_ref(), &bg, &tg, cfg.recovery_form())?;
    if let Some(i) = a_comp.values().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let metrics = phantom.map(|p| metrics(&a_comp, p, cfg.recovery.clip_negative)).transpose()?;
    Ok(ReconstructionResult { a_comp, w_layers, state, metrics, seconds: start.elapsed().as_secs_f64() })
}

/// Writes a field as `<stem>.csv` plus grayscale images: `<stem>.pgm` for
/// 2-D, and per-slice `<stem>_z<k>.pgm` plus the mid-slice as `<stem>.pgm`
/// for 3-D.
pub fn write_field(dir: &Path, stem: &str, field: &ScalarField, opts: RenderOptions) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let csv = dir.join(format!("{stem}.csv"));
    field_container(field, &[]).write(&csv)?;
    written.push(csv);
    let images = render_field(field, opts);
    if field.grid().dim() == 3 {
        for (k, img) in images.iter().enumerate() {
            let p = dir.join(format!("{stem}_z{k:02}.pgm"));
            img.write(&p)?;
            written.push(p);
        }
    }
    let p = dir.join(format!("{stem}.pgm"));
    images[mid_slice(field.grid())].write(&p)?;
    written.push(p);
    Ok(written)
}

/// Writes `a_comp.csv`, `a_comp.pgm`, `w_layers.csv`, `iterations.csv`,
/// `metrics.txt` (when available) and `config.toml` into `dir`.
pub fn write_result(dir: &Path, cfg: &InverseConfig, res: &ReconstructionResult) -> Result<()> {
    let opts = RenderOptions { clip_negative: cfg.recovery.clip_negative };
    write_field(dir, "a_comp", &res.a_comp, opts)?;
    stack_container(&res.w_layers, &[]).write(dir.join("w_layers.csv"))?;
    write_bytes(dir.join("iterations.csv"), res.state.history_csv().as_bytes())?;
    if let Some(m) = &res.metrics {
        write_bytes(dir.join("metrics.txt"), m.to_text().as_bytes())?;
    }
    cfg.write_snapshot(dir.join("config.toml"))
}

/// Parameters a sweep can vary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    Nt,
    Epsilon,
    Lambda,
    Sigma,
    Amplitude,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nt" => Ok(SweepAxis::Nt),
            "epsilon" | "eps" => Ok(SweepAxis::Epsilon),
            "lambda" => Ok(SweepAxis::Lambda),
            "sigma" => Ok(SweepAxis::Sigma),
            "amplitude" | "a" => Ok(SweepAxis::Amplitude),
            _ => Err(Error::validation(
                "sweep.axis",
                format!("unknown axis '{s}' (expected nt, epsilon, lambda, sigma or amplitude)"),
            )),
        }
    }
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepAxis::Nt => "nt",
            SweepAxis::Epsilon => "epsilon",
            SweepAxis::Lambda => "lambda",
            SweepAxis::Sigma => "sigma",
            SweepAxis::Amplitude => "amplitude",
        })
    }
}

impl SweepAxis {
    /// The configuration of one sweep entry.
    pub fn apply(&self, cfg: &InverseConfig, value: f64) -> Result<InverseConfig> {
        let mut c = cfg.clone();
        match self {
            SweepAxis::Nt => {
                if value.fract() != 0.0 || value < 0.0 {
                    return Err(Error::validation("sweep.values", format!("nt must be a whole number, got {value}")));
                }
                c.time.nt = value as usize;
            }
            SweepAxis::Epsilon => c.time.epsilon = value,
            SweepAxis::Lambda => c.carleman.lambda = value,
            SweepAxis::Sigma => c.noise.sigma = value,
            SweepAxis::Amplitude => c.phantom.amplitude = value,
        }
        c.validate()?;
        Ok(c)
    }
}

/// One sweep entry.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub value: f64,
    pub outcome: std::result::Result<(Metrics, f64, usize), String>,
}

/// CSV summary of a sweep; failed entries carry their error message.
pub fn sweep_summary_csv(axis: SweepAxis, rows: &[SweepRow]) -> String {
    let mut s = format!("{axis},{},final_grad_norm,iterations,error\n", Metrics::NAMES.join(","));
    for r in rows {
        match &r.outcome {
            Ok((m, g, it)) => {
                let vals: Vec<String> = m.values().iter().map(|v| format!("{v:e}")).collect();
                s.push_str(&format!("{},{},{g:e},{it},\n", r.value, vals.join(",")));
            }
            Err(e) => {
                s.push_str(&format!("{}{},,,\"{}\"\n", r.value, ",".repeat(Metrics::NAMES.len()), e.replace('"', "'")));
            }
        }
    }
    s
}

/// Runs one inversion per value, concurrently, writing each run into
/// `<output_dir>/<axis>_<value>/` and a `summary.csv` at the top. Data are
/// simulated once and shared unless the axis changes the forward problem
/// (amplitude). Per-run failures are recorded and the sweep continues.
pub fn sweep(cfg: &InverseConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::validation("sweep.values", "list is empty"));
    }
    cfg.validate()?;
    let configs: Vec<Result<InverseConfig>> = values.iter().map(|&v| axis.apply(cfg, v)).collect();
    // clean shared data; noise is added per run
    let shared = if axis == SweepAxis::Amplitude {
        None
    } else {
        let mut clean = cfg.clone();
        clean.noise.sigma = 0.0;
        Some(simulate(&clean)?.0)
    };

    let workers = match cfg.sweep.workers {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        w => w,
    }
    .min(values.len());
    let next = AtomicUsize::new(0);
    let rows: Mutex<Vec<Option<SweepRow>>> = Mutex::new(vec![None; values.len()]);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= values.len() {
                    break;
                }
                let outcome = configs[i]
                    .as_ref()
                    .map_err(|e| e.to_string())
                    .and_then(|c| run_entry(c, axis, values[i], i, shared.as_ref()).map_err(|e| e.to_string()));
                rows.lock().expect("no poisoned lock")[i] = Some(SweepRow { value: values[i], outcome });
            });
        }
    });
    let rows: Vec<SweepRow> = rows.into_inner().expect("no poisoned lock").into_iter().map(|r| r.expect("filled")).collect();
    write_bytes(cfg.output_dir.join("summary.csv"), sweep_summary_csv(axis, &rows).as_bytes())?;
    Ok(rows)
}

/// Directory name of one sweep entry.
pub fn entry_dir(cfg: &InverseConfig, axis: SweepAxis, value: f64) -> PathBuf {
    cfg.output_dir.join(format!("{axis}_{value}"))
}

fn run_entry(
    cfg: &InverseConfig,
    axis: SweepAxis,
    value: f64,
    index: usize,
    shared: Option<&BoundaryDataset>,
) -> Result<(Metrics, f64, usize)> {
    let grid = cfg.grid()?;
    let phantom = cfg.phantom(&grid)?;
    let data = match shared {
        Some(clean) if cfg.noise.sigma > 0.0 => {
            add_noise(clean, cfg.noise.sigma, cfg.noise.seed.wrapping_add(index as u64))?
        }
        Some(clean) => clean.clone(),
        None => simulate_phantom(cfg, &phantom)?.0,
    };
    let res = invert(cfg, &data, Some(&phantom))?;
    let mut run_cfg = cfg.clone();
    run_cfg.output_dir = entry_dir(cfg, axis, value);
    if shared.is_some() && cfg.noise.sigma > 0.0 {
        run_cfg.noise.seed = cfg.noise.seed.wrapping_add(index as u64);
    }
    write_result(&run_cfg.output_dir, &run_cfg, &res)?;
    let m = res.metrics.expect("phantom given");
    Ok((m, res.state.final_grad_norm(), res.state.iterations))
}
