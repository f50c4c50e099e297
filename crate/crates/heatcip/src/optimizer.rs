//! Boundary constraints, the initial guess, and the minimizers.
//!
//! The optimizer works on the vector of free node values: interior nodes
//! that are not fixed by the Neumann identity on Γ0. Dirichlet nodes are
//! copied from the data and the derived layer next to Γ0 is recomputed
//! after every update, so both constraints hold exactly for every iterate.

use std::time::Instant;

use crate::carleman_core::Functional;
use crate::data_model::DiscreteBoundaryData;
use crate::error::{Error, Result};
use crate::geometry::{FieldStack, SpatialGrid, TimeGrid};

/// One node fixed by the Neumann identity
/// `v_{I−1} = ¾ v_I + ¼ v_{I−2} − (d/2)·neumann`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DerivedNode {
    /// node `I−1`
    pub node: usize,
    /// node `I` on Γ0
    pub face: usize,
    /// node `I−2`
    pub inner: usize,
    /// position of `face` in `grid.gamma0_nodes()`
    pub neumann_index: usize,
}

/// Boundary data plus the free/derived split of the nodes.
#[derive(Clone, Debug)]
pub struct Constraints {
    data: DiscreteBoundaryData,
    boundary: Vec<usize>,
    free: Vec<usize>,
    derived: Vec<DerivedNode>,
    /// `fold[j]`: derived entries whose `inner` is `free[j]`
    fold: Vec<Vec<usize>>,
}

impl Constraints {
    pub fn new(data: &DiscreteBoundaryData) -> Result<Self> {
        let grid = &data.grid;
        if grid.count(0) < 4 {
            return Err(Error::validation("grid.N", "the Neumann identity needs at least 4 nodes along x1"));
        }
        let s0 = grid.stride(0);
        let derived: Vec<DerivedNode> = grid
            .gamma0_nodes()
            .iter()
            .enumerate()
            .filter(|(_, &f)| grid.is_interior(f - s0))
            .map(|(j, &f)| DerivedNode { node: f - s0, face: f, inner: f - 2 * s0, neumann_index: j })
            .collect();
        let is_derived: std::collections::HashSet<usize> = derived.iter().map(|d| d.node).collect();
        let free: Vec<usize> = grid.interior_nodes().into_iter().filter(|p| !is_derived.contains(p)).collect();
        let mut fold = vec![Vec::new(); free.len()];
        for (di, d) in derived.iter().enumerate() {
            let j = free.binary_search(&d.inner).expect("inner node is free");
            fold[j].push(di);
        }
        Ok(Constraints { data: data.clone(), boundary: grid.boundary_nodes(), free, derived, fold })
    }

    pub fn data(&self) -> &DiscreteBoundaryData {
        &self.data
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.data.grid
    }

    pub fn time(&self) -> &TimeGrid {
        &self.data.time
    }

    pub fn layers(&self) -> usize {
        self.data.time.k() + 1
    }

    pub fn free_nodes(&self) -> &[usize] {
        &self.free
    }

    pub fn derived_nodes(&self) -> &[DerivedNode] {
        &self.derived
    }

    /// Length of the free coordinate vector.
    pub fn free_len(&self) -> usize {
        self.free.len() * self.layers()
    }

    /// Writes the Dirichlet values into `v`.
    pub fn apply_dirichlet(&self, v: &mut FieldStack) {
        for i in 0..self.layers() {
            for (j, &p) in self.boundary.iter().enumerate() {
                v.set(i, p, self.data.dirichlet[i][j]);
            }
        }
    }

    /// Recomputes the derived layer next to Γ0 from the face and inner values.
    pub fn enforce_neumann(&self, v: &mut FieldStack) {
        let d = self.grid().spacing(0);
        for i in 0..self.layers() {
            for dn in &self.derived {
                let val = 0.75 * v.get(i, dn.face) + 0.25 * v.get(i, dn.inner)
                    - 0.5 * d * self.data.neumann[i][dn.neumann_index];
                v.set(i, dn.node, val);
            }
        }
    }

    /// Largest violation of the Neumann stencil identity over all layers.
    pub fn neumann_residual(&self, v: &FieldStack) -> f64 {
        let d = self.grid().spacing(0);
        let mut worst = 0.0f64;
        for i in 0..self.layers() {
            for dn in &self.derived {
                let s = (3.0 * v.get(i, dn.face) - 4.0 * v.get(i, dn.node) + v.get(i, dn.inner)) / (2.0 * d);
                worst = worst.max((s - self.data.neumann[i][dn.neumann_index]).abs());
            }
        }
        worst
    }

    /// Largest deviation from the Dirichlet data.
    pub fn dirichlet_residual(&self, v: &FieldStack) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.layers() {
            for (j, &p) in self.boundary.iter().enumerate() {
                worst = worst.max((v.get(i, p) - self.data.dirichlet[i][j]).abs());
            }
        }
        worst
    }

    /// Free coordinates of a stack, layer-major.
    pub fn to_free(&self, v: &FieldStack) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.free_len());
        for i in 0..self.layers() {
            let l = v.layer(i);
            z.extend(self.free.iter().map(|&p| l[p]));
        }
        z
    }

    /// The stack with free values `z` and both constraints applied.
    pub fn from_free(&self, z: &[f64]) -> FieldStack {
        let mut v = FieldStack::zeros(self.grid(), self.layers());
        let nf = self.free.len();
        for i in 0..self.layers() {
            let l = v.layer_mut(i);
            for (j, &p) in self.free.iter().enumerate() {
                l[p] = z[i * nf + j];
            }
        }
        self.apply_dirichlet(&mut v);
        self.enforce_neumann(&mut v);
        v
    }

    /// Chain rule from a full-node gradient to the free coordinates.
    pub fn fold_gradient(&self, g: &FieldStack) -> Vec<f64> {
        let nf = self.free.len();
        let mut out = Vec::with_capacity(self.free_len());
        for i in 0..self.layers() {
            let l = g.layer(i);
            for j in 0..nf {
                let mut v = l[self.free[j]];
                for &di in &self.fold[j] {
                    v += 0.25 * l[self.derived[di].node];
                }
                out.push(v);
            }
        }
        out
    }
}

/// `∂t ln u0` at `t = ε`: `|x|²/(4ε²) − n/(2ε)`.
pub fn background_rate(x: &[f64], epsilon: f64) -> f64 {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    r2 / (4.0 * epsilon * epsilon) - x.len() as f64 / (2.0 * epsilon)
}

/// Where the smooth part of the initial guess comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialGuess {
    /// `γ_j·v_bg` with `γ_j = (T − t_j)/(T − ε)`, decaying linearly to zero.
    Decay,
    /// The reference stack of the functional, if it has one.
    Reference,
}

/// Boolean-sum (transfinite) lift of the boundary values of `f` to the
/// whole grid. Interior values of `f` are ignored.
pub fn transfinite_lift(grid: &SpatialGrid, f: &[f64]) -> Vec<f64> {
    let n = grid.dim();
    let mut out = vec![0.0; grid.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        let m = grid.multi_index(idx);
        // inclusion–exclusion over nonempty axis subsets
        for mask in 1u32..(1 << n) {
            let axes: Vec<usize> = (0..n).filter(|a| mask & (1 << a) != 0).collect();
            let sign = if axes.len() % 2 == 1 { 1.0 } else { -1.0 };
            let mut acc = 0.0;
            for corner in 0u32..(1 << axes.len()) {
                let mut q = m;
                let mut w = 1.0;
                for (b, &a) in axes.iter().enumerate() {
                    let last = grid.count(a) - 1;
                    let s = m[a] as f64 / last as f64;
                    if corner & (1 << b) != 0 {
                        q[a] = last;
                        w *= s;
                    } else {
                        q[a] = 0;
                        w *= 1.0 - s;
                    }
                }
                if w != 0.0 {
                    acc += w * f[grid.flat_index(q)];
                }
            }
            *o += sign * acc;
        }
    }
    out
}

/// Smooth base stack plus a transfinite lift of the boundary mismatch, so
/// the guess matches the Dirichlet data exactly; the Neumann layer is then
/// enforced.
pub fn initial_guess(cons: &Constraints, base: &FieldStack) -> FieldStack {
    let grid = cons.grid();
    let mut v = FieldStack::zeros(grid, cons.layers());
    let boundary = grid.boundary_nodes();
    for i in 0..cons.layers() {
        let b = base.layer(i);
        let mut mismatch = vec![0.0; grid.len()];
        for (j, &p) in boundary.iter().enumerate() {
            mismatch[p] = cons.data.dirichlet[i][j] - b[p];
        }
        let lift = transfinite_lift(grid, &mismatch);
        let l = v.layer_mut(i);
        for p in 0..grid.len() {
            l[p] = b[p] + lift[p];
        }
    }
    cons.apply_dirichlet(&mut v);
    cons.enforce_neumann(&mut v);
    v
}

/// The `γ_j·v_bg` stack.
pub fn decay_base(grid: &SpatialGrid, tg: &TimeGrid) -> FieldStack {
    let n = grid.dim();
    let eps = tg.epsilon();
    let layers = tg
        .nodes()
        .iter()
        .map(|&t| {
            let gamma = (tg.t_final() - t) / (tg.t_final() - eps);
            (0..grid.len()).map(|p| gamma * background_rate(&grid.point(p)[..n], eps)).collect()
        })
        .collect();
    FieldStack::from_layers(grid, layers).expect("shapes match")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Lbfgs,
    GradientDescent,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimOptions {
    pub method: Method,
    pub grad_tol: f64,
    pub max_iters: usize,
    pub lbfgs_memory: usize,
    pub armijo: f64,
    pub max_backtracks: usize,
    /// Fixed step of gradient descent.
    pub gamma: f64,
    /// Halve `gamma` whenever a gradient step increases J.
    pub halve_on_increase: bool,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions {
            method: Method::Lbfgs,
            grad_tol: 0.01,
            max_iters: 5000,
            lbfgs_memory: 10,
            armijo: 1e-4,
            max_backtracks: 40,
            gamma: 1e-3,
            halve_on_increase: true,
        }
    }
}

impl OptimOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(Error::validation("optimizer.grad_tol", "must be positive"));
        }
        if self.lbfgs_memory == 0 {
            return Err(Error::validation("optimizer.lbfgs_memory", "must be at least 1"));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::validation("optimizer.armijo", "must lie in (0, 1)"));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::validation("optimizer.gamma", "must be positive"));
        }
        Ok(())
    }
}

/// One line of the iteration log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub value: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug)]
pub struct OptimState {
    pub v: FieldStack,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<IterRecord>,
    /// Discrete L2 norm of the final stack, reported since the minimization
    /// is unconstrained.
    pub stack_norm: f64,
}

impl OptimState {
    pub fn final_grad_norm(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.grad_norm)
    }

    pub fn initial_grad_norm(&self) -> f64 {
        self.history.first().map_or(f64::NAN, |r| r.grad_norm)
    }

    /// CSV with columns `iter,J,grad_norm,step_size,wall_ms`.
    pub fn history_csv(&self) -> String {
        let mut s = String::from("iter,J,grad_norm,step_size,wall_ms\n");
        for r in &self.history {
            s.push_str(&format!("{},{:e},{:e},{:e},{:.3}\n", r.iter, r.value, r.grad_norm, r.step, r.wall_ms));
        }
        s
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `J` over the free coordinates, starting from `v0`.
///
/// The gradient norm is the discrete L2 norm of the gradient field, i.e.
/// of `∂J/∂z / |cell|`: `sqrt(Σ g² / |cell|)`.
pub fn minimize(j: &Functional, cons: &Constraints, v0: &FieldStack, opts: &OptimOptions) -> Result<OptimState> {
    minimize_observed(j, cons, v0, opts, |_, _| {})
}

/// [`minimize`], calling `observe` with every accepted iterate.
pub fn minimize_observed(
    j: &Functional,
    cons: &Constraints,
    v0: &FieldStack,
    opts: &OptimOptions,
    mut observe: impl FnMut(&FieldStack, &IterRecord),
) -> Result<OptimState> {
    opts.validate()?;
    cons.grid().check_same(j.grid())?;
    let cv = cons.grid().cell_volume();
    let start = Instant::now();
    let eval = |z: &[f64]| -> Result<(f64, Vec<f64>)> {
        let v = cons.from_free(z);
        let (f, g) = j.value_and_gradient(&v)?;
        if !f.is_finite() {
            return Err(Error::NonFinite(0));
        }
        Ok((f, cons.fold_gradient(&g)))
    };
    let norm = |g: &[f64]| (dot(g, g) / cv).sqrt();

    let mut z = cons.to_free(v0);
    let (mut f, mut g) = eval(&z)?;
    let mut history = vec![IterRecord {
        iter: 0,
        value: f,
        grad_norm: norm(&g),
        step: 0.0,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    }];
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut gamma = opts.gamma;
    let mut converged = norm(&g) <= opts.grad_tol;
    let mut iter = 0;

    while !converged && iter < opts.max_iters {
        iter += 1;
        let step;
        match opts.method {
            Method::Lbfgs => {
                // two-loop recursion
                let mut q = g.clone();
                let m = s_hist.len();
                let mut alphas = vec![0.0; m];
                for l in (0..m).rev() {
                    let rho = 1.0 / dot(&y_hist[l], &s_hist[l]);
                    alphas[l] = rho * dot(&s_hist[l], &q);
                    q.iter_mut().zip(&y_hist[l]).for_each(|(a, b)| *a -= alphas[l] * b);
                }
                if m > 0 {
                    let scale = dot(&s_hist[m - 1], &y_hist[m - 1]) / dot(&y_hist[m - 1], &y_hist[m - 1]);
                    q.iter_mut().for_each(|a| *a *= scale);
                } else {
                    let gn = dot(&g, &g).sqrt();
                    q.iter_mut().for_each(|a| *a /= gn);
                }
                for l in 0..m {
                    let rho = 1.0 / dot(&y_hist[l], &s_hist[l]);
                    let beta = rho * dot(&y_hist[l], &q);
                    q.iter_mut().zip(&s_hist[l]).for_each(|(a, b)| *a += (alphas[l] - beta) * b);
                }
                let mut d: Vec<f64> = q.iter().map(|a| -a).collect();
                let mut slope = dot(&g, &d);
                if !(slope < 0.0) {
                    s_hist.clear();
                    y_hist.clear();
                    let gn = dot(&g, &g).sqrt();
                    d = g.iter().map(|a| -a / gn).collect();
                    slope = -gn;
                }
                let mut t = 1.0;
                let mut accepted = None;
                for _ in 0..=opts.max_backtracks {
                    let zt: Vec<f64> = z.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                    let (ft, gt) = eval(&zt)?;
                    if ft <= f + opts.armijo * t * slope {
                        accepted = Some((zt, ft, gt));
                        break;
                    }
                    t *= 0.5;
                }
                let Some((zt, ft, gt)) = accepted else {
                    return Err(Error::LineSearch {
                        iteration: iter,
                        message: format!("no sufficient decrease after {} halvings (J = {f:e})", opts.max_backtracks),
                    });
                };
                let s: Vec<f64> = zt.iter().zip(&z).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
                if dot(&s, &y) > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
                    s_hist.push(s);
                    y_hist.push(y);
                    if s_hist.len() > opts.lbfgs_memory {
                        s_hist.remove(0);
                        y_hist.remove(0);
                    }
                }
                step = t * dot(&d, &d).sqrt();
                z = zt;
                f = ft;
                g = gt;
            }
            Method::GradientDescent => {
                let mut tries = 0;
                loop {
                    let zt: Vec<f64> = z.iter().zip(&g).map(|(a, b)| a - gamma * b / cv).collect();
                    let (ft, gt) = eval(&zt)?;
                    if ft > f && opts.halve_on_increase && tries < opts.max_backtracks {
                        gamma *= 0.5;
                        tries += 1;
                        continue;
                    }
                    step = gamma * norm(&g);
                    z = zt;
                    f = ft;
                    g = gt;
                    break;
                }
            }
        }
        let gn = norm(&g);
        let rec = IterRecord { iter, value: f, grad_norm: gn, step, wall_ms: start.elapsed().as_secs_f64() * 1e3 };
        observe(&cons.from_free(&z), &rec);
        history.push(rec);
        converged = gn <= opts.grad_tol;
    }
    let v = cons.from_free(&z);
    let stack_norm = (v.as_slice().iter().map(|x| x * x).sum::<f64>() * cv).sqrt();
    Ok(OptimState { v, iterations: iter, converged, history, stack_norm })
}
