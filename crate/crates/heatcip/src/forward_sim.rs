//! Synthetic measurements from the forward problem
//! `u_t = Δu + a(x)u`, `u(·,0) = δ_ξ`, on a large auxiliary box or ball
//! with zero Dirichlet data on its outer boundary.
//!
//! The mesh is anchored at `lo` of Ω, so when `1/mesh` is an integer
//! multiple of the Ω grid's node count minus one the Ω nodes are mesh nodes
//! and are sampled exactly. Otherwise values are interpolated multilinearly
//! in `ln u`, which is exact for the Gaussian's linear-in-x part.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::geometry::{SpatialGrid, MAX_DIM};
use crate::io::{grid_from_header, grid_header, Container};
use crate::phantom::Phantom;

/// Fundamental solution `(2√(πt))^{-n} exp(−|x|²/4t)`; `n = x.len()`.
pub fn heat_kernel(x: &[f64], t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::validation("t", format!("heat kernel needs t > 0, got {t}")));
    }
    Ok(log_heat_kernel(x, t).exp())
}

/// `ln` of the heat kernel, finite far into the tails.
pub fn log_heat_kernel(x: &[f64], t: f64) -> f64 {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    -r2 / (4.0 * t) - x.len() as f64 * (2.0 * (std::f64::consts::PI * t).sqrt()).ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AuxShape {
    Box,
    Ball,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeScheme {
    CrankNicolson,
    ImplicitEuler,
}

/// Settings of the auxiliary problem.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardParams {
    pub shape: AuxShape,
    /// Center of the auxiliary domain; `None` means the center of Ω.
    pub center: Option<Vec<f64>>,
    pub radius: f64,
    pub mesh: f64,
    pub steps: usize,
    pub t_final: f64,
    pub xi: f64,
    pub scheme: TimeScheme,
    /// Implicit Euler steps taken before Crank–Nicolson, to damp the
    /// oscillations CN leaves behind a rough initial state.
    pub euler_startup: usize,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// Samples are kept for `t >= record_from`.
    pub record_from: f64,
}

impl Default for ForwardParams {
    fn default() -> Self {
        ForwardParams {
            shape: AuxShape::Box,
            center: None,
            radius: 6.0,
            mesh: 1.0 / 57.0,
            steps: 3200,
            t_final: 4.0,
            xi: 0.05,
            scheme: TimeScheme::CrankNicolson,
            euler_startup: 2,
            cg_tol: 1e-10,
            cg_max_iter: 5000,
            record_from: 0.1,
        }
    }
}

impl ForwardParams {
    pub fn dt(&self) -> f64 {
        self.t_final / self.steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) {
            return Err(Error::validation("forward.radius", "must be positive"));
        }
        if !(self.mesh > 0.0) {
            return Err(Error::validation("forward.mesh", "must be positive"));
        }
        if self.steps == 0 {
            return Err(Error::validation("forward.steps", "must be at least 1"));
        }
        if !(self.t_final > 0.0) {
            return Err(Error::validation("forward.t_final", "must be positive"));
        }
        if !(self.xi > 0.0) {
            return Err(Error::validation("forward.xi", "must be positive"));
        }
        if !(self.cg_tol > 0.0 && self.cg_tol < 1.0) {
            return Err(Error::validation("forward.cg_tol", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// The compactly supported bump `C exp(|x|²/(|x|²−ξ²))`, `|x| < ξ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SourceMollifier {
    pub xi: f64,
    pub c_xi: f64,
}

impl SourceMollifier {
    pub fn unnormalized(xi: f64) -> Self {
        SourceMollifier { xi, c_xi: 1.0 }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let xi2 = self.xi * self.xi;
        if r2 < xi2 {
            self.c_xi * (r2 / (r2 - xi2)).exp()
        } else {
            0.0
        }
    }
}

/// Samples of the forward solution on every node of the Ω grid.
#[derive(Clone, Debug)]
pub struct SpaceTimeField {
    pub grid: SpatialGrid,
    pub times: Vec<f64>,
    /// `values[s][node]`
    pub values: Vec<Vec<f64>>,
}

/// Work counters of one forward solve.
#[derive(Clone, Debug, Default)]
pub struct ForwardStats {
    pub mesh_nodes: usize,
    pub steps: usize,
    pub total_cg_iterations: usize,
    pub max_cg_iterations: usize,
    pub mollifier_integral: f64,
    pub aligned: bool,
    pub seconds: f64,
}

/// Uniform mesh on the auxiliary domain.
struct AuxMesh {
    n: usize,
    shape: [usize; MAX_DIM],
    strides: [usize; MAX_DIM],
    /// coordinate of mesh index 0 per axis
    origin: [f64; MAX_DIM],
    h: f64,
    /// unknown (true) vs fixed zero (false)
    active: Vec<bool>,
}

impl AuxMesh {
    fn build(grid: &SpatialGrid, p: &ForwardParams) -> Result<Self> {
        let n = grid.dim();
        let d = grid.domain();
        let center = p.center.clone().unwrap_or_else(|| d.center());
        if center.len() != n {
            return Err(Error::validation("forward.center", format!("need {n} coordinates")));
        }
        // the source point and Ω must sit strictly inside
        let inside = |x: &[f64]| -> bool {
            match p.shape {
                AuxShape::Box => (0..n).all(|a| (x[a] - center[a]).abs() < p.radius),
                AuxShape::Ball => {
                    (0..n).map(|a| (x[a] - center[a]).powi(2)).sum::<f64>() < p.radius * p.radius
                }
            }
        };
        if !inside(&vec![0.0; n]) {
            return Err(Error::validation("forward.radius", "the source point 0 must lie inside the auxiliary domain"));
        }
        for corner in 0..(1usize << n) {
            let x: Vec<f64> =
                (0..n).map(|a| if corner >> a & 1 == 1 { d.hi(a) } else { d.lo(a) }).collect();
            if !inside(&x) {
                return Err(Error::validation("forward.radius", "Ω must lie inside the auxiliary domain"));
            }
        }

        let h = p.mesh;
        let mut shape = [1usize; MAX_DIM];
        let mut origin = [0.0; MAX_DIM];
        for a in 0..n {
            let jlo = ((center[a] - p.radius - d.lo(a)) / h).floor() as i64;
            let jhi = ((center[a] + p.radius - d.lo(a)) / h).ceil() as i64;
            shape[a] = (jhi - jlo + 1) as usize;
            origin[a] = d.lo(a) + jlo as f64 * h;
        }
        let strides = [shape[1] * shape[2], shape[2], 1];
        let total: usize = shape.iter().product();
        let mut active = vec![false; total];
        for (idx, act) in active.iter_mut().enumerate() {
            let m = [idx / strides[0], (idx / strides[1]) % shape[1], idx % shape[2]];
            let interior = (0..n).all(|a| m[a] > 0 && m[a] + 1 < shape[a]);
            *act = interior
                && match p.shape {
                    AuxShape::Box => true,
                    AuxShape::Ball => {
                        let r2: f64 = (0..n)
                            .map(|a| (origin[a] + m[a] as f64 * h - center[a]).powi(2))
                            .sum();
                        r2 < p.radius * p.radius
                    }
                };
        }
        Ok(AuxMesh { n, shape, strides, origin, h, active })
    }

    fn len(&self) -> usize {
        self.active.len()
    }

    fn point(&self, idx: usize) -> [f64; MAX_DIM] {
        let m = [idx / self.strides[0], (idx / self.strides[1]) % self.shape[1], idx % self.shape[2]];
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.n {
            x[a] = self.origin[a] + m[a] as f64 * self.h;
        }
        x
    }

    /// `out = x + c·(Δx + a·x)` on active nodes, zero elsewhere.
    fn apply(&self, x: &[f64], a: &[f64], c: f64, out: &mut [f64]) {
        let ih2 = 1.0 / (self.h * self.h);
        let [n0, n1, n2] = self.shape;
        let [s0, s1, _] = self.strides;
        if self.n == 2 {
            for i in 1..n0 - 1 {
                for j in 1..n1 - 1 {
                    let p = i * s0 + j;
                    let lap = (x[p + s0] + x[p - s0] + x[p + 1] + x[p - 1] - 4.0 * x[p]) * ih2;
                    out[p] = x[p] + c * (lap + a[p] * x[p]);
                }
            }
        } else {
            for i in 1..n0 - 1 {
                for j in 1..n1 - 1 {
                    for k in 1..n2 - 1 {
                        let p = i * s0 + j * s1 + k;
                        let lap = (x[p + s0] + x[p - s0] + x[p + s1] + x[p - s1] + x[p + 1] + x[p - 1]
                            - 6.0 * x[p])
                            * ih2;
                        out[p] = x[p] + c * (lap + a[p] * x[p]);
                    }
                }
            }
        }
        for (o, &act) in out.iter_mut().zip(&self.active) {
            if !act {
                *o = 0.0;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct CgWork {
    r: Vec<f64>,
    p: Vec<f64>,
    ap: Vec<f64>,
}

/// Solves `(I − c(Δ + a)) x = b` by conjugate gradients, starting from `x`.
fn cg_solve(
    mesh: &AuxMesh,
    a: &[f64],
    c: f64,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
    w: &mut CgWork,
) -> Result<usize> {
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    mesh.apply(x, a, -c, &mut w.ap);
    for i in 0..x.len() {
        w.r[i] = b[i] - w.ap[i];
        w.p[i] = w.r[i];
    }
    let mut rs = dot(&w.r, &w.r);
    let target = tol * bnorm;
    for it in 0..max_iter {
        if rs.sqrt() <= target {
            return Ok(it);
        }
        mesh.apply(&w.p, a, -c, &mut w.ap);
        let alpha = rs / dot(&w.p, &w.ap);
        for i in 0..x.len() {
            x[i] += alpha * w.p[i];
            w.r[i] -= alpha * w.ap[i];
        }
        let rs_new = dot(&w.r, &w.r);
        let beta = rs_new / rs;
        rs = rs_new;
        for i in 0..x.len() {
            w.p[i] = w.r[i] + beta * w.p[i];
        }
    }
    if rs.sqrt() <= target {
        Ok(max_iter)
    } else {
        Err(Error::SolverDiverged { iterations: max_iter, residual: rs.sqrt() / bnorm })
    }
}

/// How one Ω node is read off the mesh.
struct Sampler {
    taps: Vec<(usize, f64)>,
    exact: bool,
}

impl Sampler {
    fn sample(&self, u: &[f64]) -> f64 {
        if self.exact {
            return u[self.taps[0].0];
        }
        if self.taps.iter().all(|&(i, _)| u[i] > 0.0) {
            self.taps.iter().map(|&(i, w)| w * u[i].ln()).sum::<f64>().exp()
        } else {
            self.taps.iter().map(|&(i, w)| w * u[i]).sum()
        }
    }
}

fn build_samplers(grid: &SpatialGrid, mesh: &AuxMesh) -> (Vec<Sampler>, bool) {
    let n = grid.dim();
    let mut all_exact = true;
    let samplers = (0..grid.len())
        .map(|idx| {
            let x = grid.point(idx);
            let mut base = [0usize; MAX_DIM];
            let mut frac = [0.0; MAX_DIM];
            let mut exact = true;
            for a in 0..n {
                let f = (x[a] - mesh.origin[a]) / mesh.h;
                let r = f.round();
                if (f - r).abs() < 1e-9 {
                    base[a] = r as usize;
                } else {
                    exact = false;
                    base[a] = f.floor() as usize;
                    frac[a] = f - f.floor();
                }
            }
            if exact {
                let p = (0..n).map(|a| base[a] * mesh.strides[a]).sum();
                return Sampler { taps: vec![(p, 1.0)], exact: true };
            }
            all_exact = false;
            let mut taps = Vec::with_capacity(1 << n);
            for corner in 0..(1usize << n) {
                let mut p = 0;
                let mut w = 1.0;
                for a in 0..n {
                    let up = corner >> a & 1 == 1;
                    p += (base[a] + up as usize) * mesh.strides[a];
                    w *= if up { frac[a] } else { 1.0 - frac[a] };
                }
                if w > 0.0 {
                    taps.push((p, w));
                }
            }
            Sampler { taps, exact: false }
        })
        .collect();
    (samplers, all_exact)
}

/// Solves the forward problem and samples the solution on the Ω grid at
/// every step with `t >= record_from`.
pub fn solve_parabolic(
    grid: &SpatialGrid,
    phantom: &Phantom,
    params: &ForwardParams,
) -> Result<(SpaceTimeField, ForwardStats)> {
    params.validate()?;
    grid.check_same(phantom.grid())?;
    let start = Instant::now();
    let mesh = AuxMesh::build(grid, params)?;
    let len = mesh.len();
    let n = grid.dim();

    let mut a = vec![0.0; len];
    let mut u = vec![0.0; len];
    let moll = SourceMollifier::unnormalized(params.xi);
    for i in 0..len {
        if mesh.active[i] {
            let x = mesh.point(i);
            a[i] = phantom.value_at(&x[..n]);
            u[i] = moll.value(&x[..n]);
        }
    }
    let cell = mesh.h.powi(n as i32);
    let mass: f64 = u.iter().sum::<f64>() * cell;
    if !(mass > 0.0) {
        return Err(Error::validation(
            "forward.xi",
            format!("mollifier radius {} has no active mesh node inside; refine the mesh", params.xi),
        ));
    }
    u.iter_mut().for_each(|v| *v /= mass);
    let mollifier_integral = u.iter().sum::<f64>() * cell;

    let (samplers, aligned) = build_samplers(grid, &mesh);
    let dt = params.dt();
    let mut field = SpaceTimeField { grid: grid.clone(), times: Vec::new(), values: Vec::new() };
    let record = |t: f64, u: &[f64], field: &mut SpaceTimeField| {
        if t >= params.record_from - 1e-12 {
            field.times.push(t);
            field.values.push(samplers.iter().map(|s| s.sample(u)).collect());
        }
    };
    record(0.0, &u, &mut field);

    let mut stats = ForwardStats { mesh_nodes: len, steps: params.steps, mollifier_integral, aligned, ..Default::default() };
    let mut work = CgWork { r: vec![0.0; len], p: vec![0.0; len], ap: vec![0.0; len] };
    let mut rhs = vec![0.0; len];
    let mut prev = u.clone();
    let mut next = vec![0.0; len];
    for s in 0..params.steps {
        let euler = params.scheme == TimeScheme::ImplicitEuler || s < params.euler_startup;
        let theta = if euler { 1.0 } else { 0.5 };
        if euler {
            rhs.copy_from_slice(&u);
        } else {
            mesh.apply(&u, &a, (1.0 - theta) * dt, &mut rhs);
        }
        // linear extrapolation as the starting guess
        for i in 0..len {
            next[i] = if s > 0 { 2.0 * u[i] - prev[i] } else { u[i] };
        }
        let it = cg_solve(&mesh, &a, theta * dt, &rhs, &mut next, params.cg_tol, params.cg_max_iter, &mut work)?;
        stats.total_cg_iterations += it;
        stats.max_cg_iterations = stats.max_cg_iterations.max(it);
        std::mem::swap(&mut prev, &mut u);
        std::mem::swap(&mut u, &mut next);
        let t = if s + 1 == params.steps { params.t_final } else { (s + 1) as f64 * dt };
        record(t, &u, &mut field);
    }
    stats.seconds = start.elapsed().as_secs_f64();
    Ok((field, stats))
}

/// Relative discrete L2 error of a zero-coefficient solve against the heat
/// kernel over all Ω nodes and all samples with `t >= t_min`.
pub fn relative_kernel_error(field: &SpaceTimeField, t_min: f64) -> Result<f64> {
    let n = field.grid.dim();
    let (mut num, mut den) = (0.0, 0.0);
    for (t, vals) in field.times.iter().zip(&field.values) {
        if *t < t_min - 1e-12 {
            continue;
        }
        for (i, v) in vals.iter().enumerate() {
            let k = heat_kernel(&field.grid.point(i)[..n], *t)?;
            num += (v - k) * (v - k);
            den += k * k;
        }
    }
    if den == 0.0 {
        return Err(Error::validation("t_min", "no samples at or after t_min"));
    }
    Ok((num / den).sqrt())
}

/// Where a dataset came from.
#[derive(Clone, Debug, PartialEq)]
pub enum Provenance {
    Clean,
    Noisy { sigma: f64, seed: u64 },
}

/// Lateral measurements: `g0` on ∂Ω and `g1 = ∂u/∂x1` on the measurement face.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryDataset {
    pub grid: SpatialGrid,
    pub times: Vec<f64>,
    /// `g0[s][j]` at `grid.boundary_nodes()[j]`
    pub g0: Vec<Vec<f64>>,
    /// `g1[s][j]` at `grid.gamma0_nodes()[j]`
    pub g1: Vec<Vec<f64>>,
    pub provenance: Provenance,
    /// Free-form description (phantom, forward settings, ...).
    pub meta: Vec<(String, String)>,
}

impl BoundaryDataset {
    pub fn to_container(&self) -> Container {
        let mut c = Container::default();
        c.push("kind", "dataset");
        c.header.extend(grid_header(&self.grid));
        match self.provenance {
            Provenance::Clean => c.push("provenance", "clean"),
            Provenance::Noisy { sigma, seed } => {
                c.push("provenance", "noisy");
                c.push("sigma", format!("{sigma:e}"));
                c.push("seed", seed);
            }
        }
        c.push("g0_nodes", self.g0.first().map_or(0, Vec::len));
        c.push("g1_nodes", self.g1.first().map_or(0, Vec::len));
        for (k, v) in &self.meta {
            c.push(&format!("meta.{k}"), v);
        }
        c.columns.push("t".into());
        let nb = self.grid.boundary_nodes();
        let g0n = self.grid.gamma0_nodes();
        c.columns.extend(nb.iter().map(|i| format!("g0:{i}")));
        c.columns.extend(g0n.iter().map(|i| format!("g1:{i}")));
        for (s, t) in self.times.iter().enumerate() {
            let mut row = vec![*t];
            row.extend_from_slice(&self.g0[s]);
            row.extend_from_slice(&self.g1[s]);
            c.rows.push(row);
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if c.get("kind") != Some("dataset") {
            return Err(Error::parse(0, "container is not a dataset"));
        }
        let grid = grid_from_header(c)?;
        let nb = grid.boundary_nodes().len();
        let ng = grid.gamma0_nodes().len();
        if c.columns.len() != 1 + nb + ng {
            return Err(Error::parse(
                0,
                format!("expected {} columns for this grid, found {}", 1 + nb + ng, c.columns.len()),
            ));
        }
        let provenance = match c.require("provenance")? {
            "clean" => Provenance::Clean,
            "noisy" => Provenance::Noisy {
                sigma: c.require("sigma")?.parse().map_err(|_| Error::parse(0, "bad sigma"))?,
                seed: c.require("seed")?.parse().map_err(|_| Error::parse(0, "bad seed"))?,
            },
            other => return Err(Error::parse(0, format!("unknown provenance '{other}'"))),
        };
        let meta = c
            .header
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("meta.").map(|k| (k.to_string(), v.clone())))
            .collect();
        let mut out = BoundaryDataset {
            grid,
            times: Vec::with_capacity(c.rows.len()),
            g0: Vec::new(),
            g1: Vec::new(),
            provenance,
            meta,
        };
        for row in &c.rows {
            out.times.push(row[0]);
            out.g0.push(row[1..1 + nb].to_vec());
            out.g1.push(row[1 + nb..].to_vec());
        }
        Ok(out)
    }

    pub fn write(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        self.to_container().write(path)
    }

    pub fn read(path: impl AsRef<std::path::Path>) -> Result<Self> {
        BoundaryDataset::from_container(&Container::read(path)?)
    }

    /// Every `g0` sample must be positive for the log transform.
    pub fn check_positive(&self) -> Result<()> {
        let nb = self.grid.boundary_nodes();
        for (s, row) in self.g0.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !(v > 0.0) {
                    return Err(Error::NonPositive { node: nb[j], time: self.times[s], value: v });
                }
            }
        }
        Ok(())
    }
}

/// Reads the lateral data off a forward solution.
///
/// `g1` uses the three-point one-sided stencil in x1 on Ω-grid nodes,
/// applied to `ln u` and multiplied back by `u`: `g1 = u·(3 ln u_I − 4 ln
/// u_{I−1} + ln u_{I−2})/(2h)`. This is the stencil the optimizer uses for
/// its Neumann constraint, so exact data satisfy the constraint exactly.
pub fn extract_boundary_data(field: &SpaceTimeField) -> Result<BoundaryDataset> {
    let grid = &field.grid;
    let nb = grid.boundary_nodes();
    let g0n = grid.gamma0_nodes();
    let s0 = grid.stride(0);
    let h = grid.spacing(0);
    let mut out = BoundaryDataset {
        grid: grid.clone(),
        times: field.times.clone(),
        g0: Vec::with_capacity(field.times.len()),
        g1: Vec::with_capacity(field.times.len()),
        provenance: Provenance::Clean,
        meta: Vec::new(),
    };
    for (s, vals) in field.values.iter().enumerate() {
        let t = field.times[s];
        let mut g0 = Vec::with_capacity(nb.len());
        for &i in &nb {
            let v = vals[i];
            if !(v > 0.0) {
                return Err(Error::NonPositive { node: i, time: t, value: v });
            }
            g0.push(v);
        }
        let mut g1 = Vec::with_capacity(g0n.len());
        for &i in &g0n {
            let (u0, u1, u2) = (vals[i], vals[i - s0], vals[i - 2 * s0]);
            for (node, v) in [(i, u0), (i - s0, u1), (i - 2 * s0, u2)] {
                if !(v > 0.0) {
                    return Err(Error::NonPositive { node, time: t, value: v });
                }
            }
            g1.push(u0 * (3.0 * u0.ln() - 4.0 * u1.ln() + u2.ln()) / (2.0 * h));
        }
        out.g0.push(g0);
        out.g1.push(g1);
    }
    Ok(out)
}

/// Turns time samples `f(τ_j)` of a wave-type datum into the value of the
/// heat-type datum at time `t`:
/// `(2√(π t³))^{-1} ∫_0^∞ exp(−τ²/4t) τ f(τ) dτ`, composite Simpson.
///
/// `tau` must be uniform, start at 0, have an odd number of points, and
/// reach far enough that `exp(−τ_max²/4t) < 1e−12`.
pub fn laplace_bridge(tau: &[f64], f: &[f64], t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::validation("t", "must be positive"));
    }
    if tau.len() != f.len() || tau.len() < 3 || tau.len() % 2 == 0 {
        return Err(Error::validation("tau", "need an odd number (>= 3) of samples matching f"));
    }
    if tau[0] != 0.0 {
        return Err(Error::validation("tau", "grid must start at 0"));
    }
    let dtau = tau[1] - tau[0];
    if tau.windows(2).any(|w| ((w[1] - w[0]) - dtau).abs() > 1e-9 * dtau.abs().max(1.0)) {
        return Err(Error::validation("tau", "grid must be uniform"));
    }
    let tmax = *tau.last().unwrap();
    let tail = (-tmax * tmax / (4.0 * t)).exp();
    if tail >= 1e-12 {
        return Err(Error::validation(
            "tau",
            format!("grid too short: exp(-tau_max^2/4t) = {tail:e} must be < 1e-12"),
        ));
    }
    let m = tau.len() - 1;
    let mut sum = 0.0;
    for j in 0..=m {
        let w = if j == 0 || j == m { 1.0 } else if j % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * (-tau[j] * tau[j] / (4.0 * t)).exp() * tau[j] * f[j];
    }
    Ok(sum * dtau / 3.0 / (2.0 * (std::f64::consts::PI * t.powi(3)).sqrt()))
}

/// Result of [`calibrate_radius`].
#[derive(Clone, Debug)]
pub struct RadiusCalibration {
    pub chosen: f64,
    pub errors: Vec<(f64, f64)>,
}

/// Smallest radius whose zero-coefficient solve matches the heat kernel on
/// Ω × [t_min, T] within 1% relative L2.
pub fn calibrate_radius(
    grid: &SpatialGrid,
    candidates: &[f64],
    params: &ForwardParams,
    t_min: f64,
) -> Result<RadiusCalibration> {
    if candidates.is_empty() {
        return Err(Error::validation("radii", "candidate list is empty"));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let zero = Phantom::zero(grid);
    let mut errors = Vec::new();
    for r in sorted {
        let p = ForwardParams { radius: r, record_from: t_min, ..params.clone() };
        let err = match solve_parabolic(grid, &zero, &p) {
            Ok((field, _)) => relative_kernel_error(&field, t_min)?,
            Err(Error::Validation { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        errors.push((r, err));
        if err <= 0.01 {
            return Ok(RadiusCalibration { chosen: r, errors });
        }
    }
    let list = errors.iter().map(|(r, e)| format!("r={r}: {e:.3e}")).collect::<Vec<_>>().join(", ");
    Err(Error::Numeric(format!("no candidate radius reaches 1% kernel error ({list})")))
}
