//! The semi-discrete elliptic system and the weighted Tikhonov functional.
//!
//! For the stack `V = (v_0, …, v_k)` the residual at an interior node is
//!
//! ```text
//! L_i = Δv_i + 2∇v_i·∇w_ε + 2h ∇v_i·Σ_{j≤i} ∇v_j + (v_i − v_{i+1})/h     (0 ≤ i < k)
//! L_k = Δv_k + 2∇v_k·∇w_ε + 2h ∇v_k·Σ_{j≤k} ∇v_j + (v_{k−1}+v_{k−2}+v_{k−3}−3v_k)/(6h)
//! ```
//!
//! with second-order central differences and no Volterra sum for `i = 0`.
//! The functional is
//! `J = e^{−2λc} Σ_i Σ_x L_i² e^{2λx1²} |cell| + α ‖V‖²`, where the norm
//! sums squared forward differences of all orders up to `reg_order`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{FieldStack, ScalarField, SpatialGrid, TimeGrid, MAX_DIM};

/// `e^{2λ x1²}`.
pub fn carleman_weight(x1: f64, lambda: f64) -> f64 {
    (2.0 * lambda * x1 * x1).exp()
}

/// The zero-potential solution at `t = ε`: `w_ε = ln u0(·, ε)` and its gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct BackgroundTerms {
    pub epsilon: f64,
    pub w_eps: ScalarField,
    /// `grad_w_eps[a][node] = −x_a/(2ε)`
    pub grad_w_eps: Vec<Vec<f64>>,
}

impl BackgroundTerms {
    pub fn new(grid: &SpatialGrid, epsilon: f64) -> Self {
        let n = grid.dim();
        let c = n as f64 * (2.0 * (std::f64::consts::PI * epsilon).sqrt()).ln();
        let w_eps = ScalarField::from_fn(grid, |x| -x.iter().map(|v| v * v).sum::<f64>() / (4.0 * epsilon) - c);
        let grad_w_eps =
            (0..n).map(|a| (0..grid.len()).map(|i| -grid.point(i)[a] / (2.0 * epsilon)).collect()).collect();
        BackgroundTerms { epsilon, w_eps, grad_w_eps }
    }
}

/// How penalty differences are scaled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DifferenceScaling {
    /// Plain differences `v[j+1] − v[j]`.
    Raw,
    /// Difference quotients, i.e. divided by the spacing per order, so the
    /// penalty approximates the continuous Sobolev norm.
    Derivative,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CarlemanParams {
    pub lambda: f64,
    pub alpha: f64,
    pub c: f64,
    pub reg_order: usize,
    pub scaling: DifferenceScaling,
}

impl Default for CarlemanParams {
    fn default() -> Self {
        CarlemanParams { lambda: 3.0, alpha: 3e-5, c: 5.0, reg_order: 3, scaling: DifferenceScaling::Derivative }
    }
}

impl CarlemanParams {
    /// Range checks used for user-facing configuration.
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 1.0 && self.lambda.is_finite()) {
            return Err(Error::validation("carleman.lambda", format!("must be >= 1, got {}", self.lambda)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::validation("carleman.alpha", format!("must lie in (0, 1), got {}", self.alpha)));
        }
        if !self.c.is_finite() {
            return Err(Error::validation("carleman.c", "must be finite"));
        }
        if !(self.reg_order == 2 || self.reg_order == 3) {
            return Err(Error::validation("carleman.reg_order", format!("must be 2 or 3, got {}", self.reg_order)));
        }
        Ok(())
    }
}

/// Dense n-d array used by the penalty.
struct Arr {
    shape: [usize; MAX_DIM],
    data: Vec<f64>,
}

impl Arr {
    fn strides(shape: [usize; MAX_DIM]) -> [usize; MAX_DIM] {
        [shape[1] * shape[2], shape[2], 1]
    }

    /// Forward difference along `axis`; the axis shrinks by one.
    fn diff(&self, axis: usize, scale: f64) -> Arr {
        let mut shape = self.shape;
        shape[axis] -= 1;
        let st_in = Arr::strides(self.shape);
        let st_out = Arr::strides(shape);
        let mut data = vec![0.0; shape.iter().product()];
        for i in 0..shape[0] {
            for j in 0..shape[1] {
                for k in 0..shape[2] {
                    let p = i * st_in[0] + j * st_in[1] + k;
                    data[i * st_out[0] + j * st_out[1] + k] = (self.data[p + st_in[axis]] - self.data[p]) * scale;
                }
            }
        }
        Arr { shape, data }
    }

    /// Adjoint of [`Arr::diff`]; the axis grows by one.
    fn diff_adjoint(&self, axis: usize, scale: f64) -> Arr {
        let mut shape = self.shape;
        shape[axis] += 1;
        let st_in = Arr::strides(self.shape);
        let st_out = Arr::strides(shape);
        let mut data = vec![0.0; shape.iter().product()];
        for i in 0..self.shape[0] {
            for j in 0..self.shape[1] {
                for k in 0..self.shape[2] {
                    let y = self.data[i * st_in[0] + j * st_in[1] + k] * scale;
                    let q = i * st_out[0] + j * st_out[1] + k;
                    data[q + st_out[axis]] += y;
                    data[q] -= y;
                }
            }
        }
        Arr { shape, data }
    }
}

/// All multi-indices `β` with `|β| ≤ order` over `n` axes.
fn multi_indices(n: usize, order: usize) -> Vec<[usize; MAX_DIM]> {
    let mut out = Vec::new();
    for b0 in 0..=order {
        for b1 in 0..=order - b0 {
            if n == 2 {
                out.push([b0, b1, 0]);
            } else {
                for b2 in 0..=order - b0 - b1 {
                    out.push([b0, b1, b2]);
                }
            }
        }
    }
    out
}

/// Per-layer intermediate quantities of the residual evaluation.
struct Forward {
    /// `g[i][a][p]`: central gradient of layer i (interior nodes)
    g: Vec<Vec<Vec<f64>>>,
    /// `s[i][a][p] = Σ_{j≤i} g[j][a][p]`
    s: Vec<Vec<Vec<f64>>>,
    /// `l[i][p]`
    l: Vec<Vec<f64>>,
}

/// The discrete functional for a fixed grid, time grid and parameters.
///
/// An optional reference stack `R` shifts the problem: the residual term
/// uses `L(V) − L(R)` and the penalty uses `V − R`. With `R` the stack of
/// the zero-potential solution, the semi-discretization error that `R`
/// itself carries is removed from the fit. Without a reference this is the
/// plain functional.
#[derive(Clone, Debug)]
pub struct Functional {
    grid: SpatialGrid,
    time: TimeGrid,
    bg: BackgroundTerms,
    params: CarlemanParams,
    interior: Vec<usize>,
    /// `e^{2λx1² − 2λc}·|cell|` per node (zero on the boundary)
    weight: Vec<f64>,
    betas: Vec<[usize; MAX_DIM]>,
    include_residual: bool,
    reference: Option<FieldStack>,
    reference_residual: Option<Vec<Vec<f64>>>,
}

impl Functional {
    pub fn new(grid: &SpatialGrid, time: &TimeGrid, bg: &BackgroundTerms, params: &CarlemanParams) -> Result<Self> {
        grid.check_same(bg.w_eps.grid())?;
        if !(params.reg_order <= 3) {
            return Err(Error::validation("carleman.reg_order", "at most 3"));
        }
        let d = grid.domain();
        let x1max = d.lo(0).abs().max(d.hi(0).abs());
        if params.lambda * x1max * x1max > 300.0 {
            return Err(Error::validation(
                "carleman.lambda",
                format!(
                    "λ·x1² = {:.1} > 300 would overflow the weight; shift or rescale the x1 axis, or lower λ",
                    params.lambda * x1max * x1max
                ),
            ));
        }
        let cv = grid.cell_volume();
        let weight = (0..grid.len())
            .map(|i| {
                if grid.is_interior(i) {
                    let x1 = grid.point(i)[0];
                    (2.0 * params.lambda * (x1 * x1 - params.c)).exp() * cv
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Functional {
            grid: grid.clone(),
            time: time.clone(),
            bg: bg.clone(),
            params: params.clone(),
            interior: grid.interior_nodes(),
            weight,
            betas: multi_indices(grid.dim(), params.reg_order),
            include_residual: true,
            reference: None,
            reference_residual: None,
        })
    }

    /// Shifts the functional by a reference stack (see the type docs).
    pub fn with_reference(mut self, reference: FieldStack) -> Result<Self> {
        self.check_stack(&reference)?;
        let f = self.forward(&reference);
        self.reference_residual = Some(f.l);
        self.reference = Some(reference);
        Ok(self)
    }

    /// Drops the weighted residual term, leaving only `α‖V‖²`.
    pub fn penalty_only(mut self) -> Self {
        self.include_residual = false;
        self
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn background(&self) -> &BackgroundTerms {
        &self.bg
    }

    pub fn params(&self) -> &CarlemanParams {
        &self.params
    }

    pub fn reference(&self) -> Option<&FieldStack> {
        self.reference.as_ref()
    }

    fn check_stack(&self, v: &FieldStack) -> Result<()> {
        self.grid.check_same(v.grid())?;
        if v.layers() != self.time.k() + 1 {
            return Err(Error::GridMismatch(format!(
                "stack has {} layers, time grid needs {}",
                v.layers(),
                self.time.k() + 1
            )));
        }
        Ok(())
    }

    fn forward(&self, v: &FieldStack) -> Forward {
        let n = self.grid.dim();
        let nn = self.grid.len();
        let k = self.time.k();
        let h = self.time.h();
        let mut g = vec![vec![vec![0.0; nn]; n]; k + 1];
        let mut s = vec![vec![vec![0.0; nn]; n]; k + 1];
        let mut l = vec![vec![0.0; nn]; k + 1];
        for i in 0..=k {
            let vi = v.layer(i);
            for &p in &self.interior {
                let mut lap = 0.0;
                for a in 0..n {
                    let st = self.grid.stride(a);
                    let d = self.grid.spacing(a);
                    lap += (vi[p + st] + vi[p - st] - 2.0 * vi[p]) / (d * d);
                    g[i][a][p] = (vi[p + st] - vi[p - st]) / (2.0 * d);
                    s[i][a][p] = g[i][a][p] + if i > 0 { s[i - 1][a][p] } else { 0.0 };
                }
                let mut r = lap;
                for a in 0..n {
                    r += 2.0 * g[i][a][p] * self.bg.grad_w_eps[a][p];
                    if i > 0 {
                        r += 2.0 * h * g[i][a][p] * s[i][a][p];
                    }
                }
                r += if i < k {
                    (vi[p] - v.get(i + 1, p)) / h
                } else {
                    (v.get(k - 1, p) + v.get(k - 2, p) + v.get(k - 3, p) - 3.0 * vi[p]) / (6.0 * h)
                };
                l[i][p] = r;
            }
        }
        Forward { g, s, l }
    }

    /// `L_0 … L_k` on interior nodes (zero on the boundary).
    pub fn residuals(&self, v: &FieldStack) -> Result<FieldStack> {
        self.check_stack(v)?;
        let f = self.forward(v);
        FieldStack::from_layers(&self.grid, f.l)
    }

    fn penalty_scale(&self, beta: &[usize; MAX_DIM], axis: usize) -> f64 {
        let _ = beta;
        match self.params.scaling {
            DifferenceScaling::Raw => 1.0,
            DifferenceScaling::Derivative => 1.0 / self.grid.spacing(axis),
        }
    }

    fn shifted_layer(&self, v: &FieldStack, i: usize) -> Arr {
        let data = match &self.reference {
            Some(r) => v.layer(i).iter().zip(r.layer(i)).map(|(a, b)| a - b).collect(),
            None => v.layer(i).to_vec(),
        };
        Arr { shape: self.grid.shape3(), data }
    }

    /// `D^β` applied to one layer.
    fn apply_beta(&self, u: Arr, beta: &[usize; MAX_DIM]) -> Arr {
        let mut d = u;
        for a in 0..self.grid.dim() {
            for _ in 0..beta[a] {
                d = d.diff(a, self.penalty_scale(beta, a));
            }
        }
        d
    }

    /// `‖V − R‖²` (or `‖V‖²` without reference): the discrete Sobolev norm
    /// used by the penalty, `Σ_β Σ (D^β U)² |cell|`.
    pub fn penalty_norm_sq(&self, v: &FieldStack) -> f64 {
        let cv = self.grid.cell_volume();
        let mut total = 0.0;
        for i in 0..v.layers() {
            for beta in &self.betas {
                let d = self.apply_beta(self.shifted_layer(v, i), beta);
                total += d.data.iter().map(|x| x * x).sum::<f64>() * cv;
            }
        }
        total
    }

    /// Sobolev norm of a difference of two stacks (no reference shift).
    pub fn norm_sq_of_difference(&self, v1: &FieldStack, v2: &FieldStack) -> f64 {
        let cv = self.grid.cell_volume();
        let mut total = 0.0;
        for i in 0..v1.layers() {
            let u = Arr {
                shape: self.grid.shape3(),
                data: v1.layer(i).iter().zip(v2.layer(i)).map(|(a, b)| a - b).collect(),
            };
            for beta in &self.betas {
                let d = self.apply_beta(Arr { shape: u.shape, data: u.data.clone() }, beta);
                total += d.data.iter().map(|x| x * x).sum::<f64>() * cv;
            }
        }
        total
    }

    fn residual_value(&self, f: &Forward) -> f64 {
        if !self.include_residual {
            return 0.0;
        }
        let mut total = 0.0;
        for (i, li) in f.l.iter().enumerate() {
            for &p in &self.interior {
                let r = li[p] - self.reference_residual.as_ref().map_or(0.0, |rr| rr[i][p]);
                total += self.weight[p] * r * r;
            }
        }
        total
    }

    /// Weighted residual part only.
    pub fn residual_term(&self, v: &FieldStack) -> Result<f64> {
        self.check_stack(v)?;
        Ok(self.residual_value(&self.forward(v)))
    }

    pub fn value(&self, v: &FieldStack) -> Result<f64> {
        self.check_stack(v)?;
        let f = self.forward(v);
        Ok(self.residual_value(&f) + self.params.alpha * self.penalty_norm_sq(v))
    }

    /// `J(V)` and `∂J/∂V` with respect to every node value, boundary nodes
    /// included. The optimizer folds this onto its free coordinates.
    pub fn value_and_gradient(&self, v: &FieldStack) -> Result<(f64, FieldStack)> {
        self.check_stack(v)?;
        let n = self.grid.dim();
        let nn = self.grid.len();
        let k = self.time.k();
        let h = self.time.h();
        let f = self.forward(v);
        let mut value = self.residual_value(&f);
        let mut grad = FieldStack::zeros(&self.grid, k + 1);

        if self.include_residual {
            // μ_i = ∂J/∂L_i
            let mu: Vec<Vec<f64>> = (0..=k)
                .map(|i| {
                    let mut m = vec![0.0; nn];
                    for &p in &self.interior {
                        let r = f.l[i][p] - self.reference_residual.as_ref().map_or(0.0, |rr| rr[i][p]);
                        m[p] = 2.0 * self.weight[p] * r;
                    }
                    m
                })
                .collect();
            // t[a][p] = Σ_{l ≥ max(i,1)} μ_l g_l, accumulated from the top layer down
            let mut tail = vec![vec![0.0; nn]; n];
            for i in (0..=k).rev() {
                if i >= 1 {
                    for a in 0..n {
                        for &p in &self.interior {
                            tail[a][p] += mu[i][p] * f.g[i][a][p];
                        }
                    }
                }
                let gl = grad.layer_mut(i);
                for &p in &self.interior {
                    let m = mu[i][p];
                    for a in 0..n {
                        let st = self.grid.stride(a);
                        let d = self.grid.spacing(a);
                        // Laplacian
                        let c = m / (d * d);
                        gl[p + st] += c;
                        gl[p - st] += c;
                        gl[p] -= 2.0 * c;
                        // every term multiplying the central gradient of layer i
                        let mut cg = 2.0 * m * self.bg.grad_w_eps[a][p] + 2.0 * h * tail[a][p];
                        if i >= 1 {
                            cg += 2.0 * h * m * f.s[i][a][p];
                        }
                        let c = cg / (2.0 * d);
                        gl[p + st] += c;
                        gl[p - st] -= c;
                    }
                }
                // time stencils
                for &p in &self.interior {
                    let m = mu[i][p];
                    if i < k {
                        grad.as_mut_slice()[i * nn + p] += m / h;
                        grad.as_mut_slice()[(i + 1) * nn + p] -= m / h;
                    } else {
                        let c = m / (6.0 * h);
                        for j in [k - 1, k - 2, k - 3] {
                            grad.as_mut_slice()[j * nn + p] += c;
                        }
                        grad.as_mut_slice()[k * nn + p] -= 3.0 * c;
                    }
                }
            }
        }

        if self.params.alpha != 0.0 {
            let cv = self.grid.cell_volume();
            let mut pen = 0.0;
            for i in 0..=k {
                let mut acc = vec![0.0; nn];
                for beta in &self.betas {
                    let d = self.apply_beta(self.shifted_layer(v, i), beta);
                    pen += d.data.iter().map(|x| x * x).sum::<f64>() * cv;
                    let mut back = d;
                    for a in (0..n).rev() {
                        for _ in 0..beta[a] {
                            back = back.diff_adjoint(a, self.penalty_scale(beta, a));
                        }
                    }
                    for (x, y) in acc.iter_mut().zip(&back.data) {
                        *x += y;
                    }
                }
                let gl = grad.layer_mut(i);
                for (x, y) in gl.iter_mut().zip(&acc) {
                    *x += 2.0 * self.params.alpha * cv * y;
                }
            }
            value += self.params.alpha * pen;
        }
        Ok((value, grad))
    }

    /// Bregman gap `J(V2) − J(V1) − ⟨J′(V1), V2 − V1⟩`. Both stacks must carry
    /// the same boundary values.
    pub fn convexity_probe(&self, v1: &FieldStack, v2: &FieldStack) -> Result<f64> {
        self.check_stack(v1)?;
        self.check_stack(v2)?;
        for i in 0..v1.layers() {
            for p in self.grid.boundary_nodes() {
                if v1.get(i, p) != v2.get(i, p) {
                    return Err(Error::validation(
                        "convexity_probe",
                        format!("stacks differ on boundary node {p} of layer {i}"),
                    ));
                }
            }
        }
        let (j1, g1) = self.value_and_gradient(v1)?;
        let j2 = self.value(v2)?;
        let dir: f64 = g1.as_slice().iter().zip(v2.as_slice().iter().zip(v1.as_slice())).map(|(g, (b, a))| g * (b - a)).sum();
        Ok(j2 - j1 - dir)
    }
}

/// The stack of the zero-potential solution as the method sees it: the time
/// stencils applied to `ln u0(x, t_i)` at every node.
pub fn zero_potential_stack(grid: &SpatialGrid, tg: &TimeGrid) -> FieldStack {
    let n = grid.dim();
    let s: Vec<Vec<f64>> = tg
        .nodes()
        .iter()
        .map(|&t| (0..grid.len()).map(|i| crate::forward_sim::log_heat_kernel(&grid.point(i)[..n], t)).collect())
        .collect();
    FieldStack::from_layers(grid, crate::data_model::time_stencil(&s, tg.h())).expect("shapes match")
}

/// The continuous derivative `∂t ln u0 = |x|²/(4t²) − n/(2t)` at each `t_i`.
pub fn zero_potential_derivative_stack(grid: &SpatialGrid, tg: &TimeGrid) -> FieldStack {
    let n = grid.dim();
    let layers = tg
        .nodes()
        .iter()
        .map(|&t| {
            (0..grid.len())
                .map(|i| {
                    let r2: f64 = grid.point(i)[..n].iter().map(|v| v * v).sum();
                    r2 / (4.0 * t * t) - n as f64 / (2.0 * t)
                })
                .collect()
        })
        .collect();
    FieldStack::from_layers(grid, layers).expect("shapes match")
}

/// Two stacks with identical boundary values and random interiors, every
/// layer with discrete L2 norm at most `radius`. With `smooth`, each layer is
/// a random combination of low sine modes instead of i.i.d. node values.
pub fn random_boundary_matched_pair<R: Rng>(
    grid: &SpatialGrid,
    layers: usize,
    radius: f64,
    smooth: bool,
    rng: &mut R,
) -> (FieldStack, FieldStack) {
    let n = grid.dim();
    let cv = grid.cell_volume();
    let d = grid.domain();
    let field = |rng: &mut R| -> Vec<f64> {
        if smooth {
            let modes: Vec<([usize; MAX_DIM], f64, [f64; MAX_DIM])> = (0..6)
                .map(|_| {
                    let mut m = [1; MAX_DIM];
                    let mut ph = [0.0; MAX_DIM];
                    for a in 0..n {
                        m[a] = rng.gen_range(1..=3);
                        ph[a] = rng.gen_range(0.0..std::f64::consts::TAU);
                    }
                    (m, rng.gen_range(-1.0..1.0), ph)
                })
                .collect();
            (0..grid.len())
                .map(|p| {
                    let x = grid.point(p);
                    modes
                        .iter()
                        .map(|(m, c, ph)| {
                            c * (0..n)
                                .map(|a| {
                                    let s = (x[a] - d.lo(a)) / (d.hi(a) - d.lo(a));
                                    (std::f64::consts::PI * m[a] as f64 * s + ph[a]).sin()
                                })
                                .product::<f64>()
                        })
                        .sum()
                })
                .collect()
        } else {
            (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()
        }
    };
    let mut v1 = FieldStack::zeros(grid, layers);
    let mut v2 = FieldStack::zeros(grid, layers);
    for i in 0..layers {
        let base = field(rng);
        let other = field(rng);
        let a: Vec<f64> = base.clone();
        let b: Vec<f64> =
            (0..grid.len()).map(|p| if grid.is_boundary(p) { base[p] } else { other[p] }).collect();
        let norm = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() * cv).sqrt();
        let scale = radius * rng.gen_range(0.0..1.0f64).max(1e-3) / norm(&a).max(norm(&b)).max(1e-300);
        for p in 0..grid.len() {
            v1.set(i, p, a[p] * scale);
            v2.set(i, p, b[p] * scale);
        }
    }
    (v1, v2)
}
