//! From measurements to the boundary conditions of the semi-discrete system.
//!
//! Dirichlet data for `v = ∂t ln u` come from `s0 = ln g0`; Neumann data
//! come from `s1 = g1/g0 = ∂x1 ln u`. Both are sampled at the coarse times
//! `t_i` and pushed through the same time stencils as the unknowns.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::forward_sim::{log_heat_kernel, BoundaryDataset, Provenance};
use crate::geometry::{SpatialGrid, TimeGrid};

/// Multiplies every sample by `1 + σζ`, `ζ` i.i.d. uniform on `[−1, 1]`.
/// `g0` and `g1` draw from independent streams of the same seed.
pub fn add_noise(data: &BoundaryDataset, sigma: f64, seed: u64) -> Result<BoundaryDataset> {
    if !(0.0..1.0).contains(&sigma) {
        return Err(Error::validation("noise.sigma", format!("must lie in [0, 1), got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(data.clone());
    }
    let mut out = data.clone();
    let mut r0 = ChaCha8Rng::seed_from_u64(seed);
    r0.set_stream(0);
    let mut r1 = ChaCha8Rng::seed_from_u64(seed);
    r1.set_stream(1);
    for row in out.g0.iter_mut() {
        for v in row.iter_mut() {
            *v *= 1.0 + sigma * r0.gen_range(-1.0..=1.0);
        }
    }
    for row in out.g1.iter_mut() {
        for v in row.iter_mut() {
            *v *= 1.0 + sigma * r1.gen_range(-1.0..=1.0);
        }
    }
    out.check_positive().map_err(|e| {
        Error::Numeric(format!("{e}; noise level {sigma} is too large for these data, use a smaller sigma"))
    })?;
    out.provenance = Provenance::Noisy { sigma, seed };
    Ok(out)
}

/// Boundary conditions of the stack `V = (v_0, …, v_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteBoundaryData {
    pub grid: SpatialGrid,
    pub time: TimeGrid,
    /// `dirichlet[i][j]` at `grid.boundary_nodes()[j]`
    pub dirichlet: Vec<Vec<f64>>,
    /// `neumann[i][j]` at `grid.gamma0_nodes()[j]`
    pub neumann: Vec<Vec<f64>>,
}

/// Applies the time stencils to `k + 1` samples of a trace:
/// forward differences for `i < k`, and at `i = k` the one-sided
/// `(3s_k − s_{k−1} − s_{k−2} − s_{k−3})/(6h)`.
pub fn time_stencil(s: &[Vec<f64>], h: f64) -> Vec<Vec<f64>> {
    let k = s.len() - 1;
    let mut out = Vec::with_capacity(k + 1);
    for i in 0..k {
        out.push(s[i + 1].iter().zip(&s[i]).map(|(b, a)| (b - a) / h).collect());
    }
    out.push(
        (0..s[k].len())
            .map(|j| (3.0 * s[k][j] - s[k - 1][j] - s[k - 2][j] - s[k - 3][j]) / (6.0 * h))
            .collect(),
    );
    out
}

/// Options of [`discretize_boundary`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscretizeOptions {
    /// Replace the traces at `t_0 = ε` by those of the zero-potential
    /// solution, which the method assumes there anyway. Simulated data at
    /// such early times are dominated by discretization error in the
    /// Gaussian tails.
    pub anchor_t0: bool,
}

impl Default for DiscretizeOptions {
    fn default() -> Self {
        DiscretizeOptions { anchor_t0: true }
    }
}

/// Linear interpolation of per-sample rows at time `t`; exact samples are
/// returned as-is.
fn sample_at(times: &[f64], rows: &[Vec<f64>], t: f64) -> Result<Vec<f64>> {
    let tol = 1e-9 * t.abs().max(1.0);
    if let Some(s) = times.iter().position(|&ts| (ts - t).abs() <= tol) {
        return Ok(rows[s].clone());
    }
    let hi = times.iter().position(|&ts| ts > t);
    match hi {
        Some(j) if j > 0 => {
            let (t0, t1) = (times[j - 1], times[j]);
            let w = (t - t0) / (t1 - t0);
            Ok(rows[j - 1].iter().zip(&rows[j]).map(|(a, b)| (1.0 - w) * a + w * b).collect())
        }
        _ => Err(Error::validation(
            "time grid",
            format!(
                "t = {t} lies outside the recorded data range [{}, {}]",
                times.first().copied().unwrap_or(f64::NAN),
                times.last().copied().unwrap_or(f64::NAN)
            ),
        )),
    }
}

/// Log traces `s0 = ln g0`, `s1 = g1/g0` at the coarse times.
pub fn log_traces(
    data: &BoundaryDataset,
    tg: &TimeGrid,
    opts: DiscretizeOptions,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    data.check_positive()?;
    let grid = &data.grid;
    let gamma0 = grid.gamma0_nodes();
    let nb = grid.boundary_nodes();
    let pos_in_boundary: Vec<usize> =
        gamma0.iter().map(|g| nb.binary_search(g).expect("gamma0 nodes are boundary nodes")).collect();
    let s0_all: Vec<Vec<f64>> = data.g0.iter().map(|r| r.iter().map(|v| v.ln()).collect()).collect();
    let s1_all: Vec<Vec<f64>> = data
        .g1
        .iter()
        .zip(&data.g0)
        .map(|(g1, g0)| g1.iter().zip(&pos_in_boundary).map(|(v, &p)| v / g0[p]).collect())
        .collect();

    let n = grid.dim();
    let mut s0 = Vec::with_capacity(tg.k() + 1);
    let mut s1 = Vec::with_capacity(tg.k() + 1);
    for i in 0..=tg.k() {
        let t = tg.node(i);
        if i == 0 && opts.anchor_t0 {
            s0.push(nb.iter().map(|&j| log_heat_kernel(&grid.point(j)[..n], t)).collect());
            s1.push(gamma0.iter().map(|&j| -grid.point(j)[0] / (2.0 * t)).collect());
        } else {
            s0.push(sample_at(&data.times, &s0_all, t)?);
            s1.push(sample_at(&data.times, &s1_all, t)?);
        }
    }
    Ok((s0, s1))
}

/// Maps measurements to the discrete Dirichlet/Neumann data of the stack.
pub fn discretize_boundary(
    data: &BoundaryDataset,
    tg: &TimeGrid,
    opts: DiscretizeOptions,
) -> Result<DiscreteBoundaryData> {
    let (s0, s1) = log_traces(data, tg, opts)?;
    Ok(DiscreteBoundaryData::from_log_traces(&data.grid, tg, &s0, &s1))
}

impl DiscreteBoundaryData {
    /// From log traces already sampled at the coarse times.
    pub fn from_log_traces(grid: &SpatialGrid, tg: &TimeGrid, s0: &[Vec<f64>], s1: &[Vec<f64>]) -> Self {
        let h = tg.h();
        DiscreteBoundaryData {
            grid: grid.clone(),
            time: tg.clone(),
            dirichlet: time_stencil(s0, h),
            neumann: time_stencil(s1, h),
        }
    }

    /// Data generated by the zero-potential solution itself (exact kernel
    /// traces, no simulation).
    pub fn zero_potential(grid: &SpatialGrid, tg: &TimeGrid) -> Self {
        let n = grid.dim();
        let nb = grid.boundary_nodes();
        let gamma0 = grid.gamma0_nodes();
        let s0: Vec<Vec<f64>> = tg
            .nodes()
            .iter()
            .map(|&t| nb.iter().map(|&j| log_heat_kernel(&grid.point(j)[..n], t)).collect())
            .collect();
        let s1: Vec<Vec<f64>> = tg
            .nodes()
            .iter()
            .map(|&t| gamma0.iter().map(|&j| -grid.point(j)[0] / (2.0 * t)).collect())
            .collect();
        DiscreteBoundaryData::from_log_traces(grid, tg, &s0, &s1)
    }
}
