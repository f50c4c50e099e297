//! Domains, uniform grids, boundary faces and time partitions.
//!
//! Nodes are enumerated row-major with x1 slowest:
//! `idx = (i1 * N2 + i2) * N3 + i3`. In two dimensions the third axis
//! has a single node and never shows up in coordinates. Every other module
//! relies on this ordering, including the file formats.

use crate::error::{Error, Result};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;

/// Axis-aligned box `(lo, hi)` in 2 or 3 dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    n: usize,
    lo: [f64; MAX_DIM],
    hi: [f64; MAX_DIM],
}

impl Domain {
    pub fn new(lo: &[f64], hi: &[f64]) -> Result<Self> {
        let n = lo.len();
        if !(n == 2 || n == 3) {
            return Err(Error::validation("domain.n", format!("dimension must be 2 or 3, got {n}")));
        }
        if hi.len() != n {
            return Err(Error::validation("domain.hi", "lo and hi must have the same length"));
        }
        let mut l = [0.0; MAX_DIM];
        let mut h = [1.0; MAX_DIM];
        for a in 0..n {
            if !(lo[a].is_finite() && hi[a].is_finite() && lo[a] < hi[a]) {
                return Err(Error::validation(
                    format!("domain.lo[{a}]"),
                    format!("need lo < hi, got {} and {}", lo[a], hi[a]),
                ));
            }
            l[a] = lo[a];
            h[a] = hi[a];
        }
        Ok(Domain { n, lo: l, hi: h })
    }

    /// The cube `(1, 2)^n` used throughout the numerical experiments.
    pub fn standard(n: usize) -> Result<Self> {
        Domain::new(&vec![1.0; n], &vec![2.0; n])
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lo(&self, axis: usize) -> f64 {
        self.lo[axis]
    }

    pub fn hi(&self, axis: usize) -> f64 {
        self.hi[axis]
    }

    pub fn center(&self) -> Vec<f64> {
        (0..self.n).map(|a| 0.5 * (self.lo[a] + self.hi[a])).collect()
    }

    /// Closed-box membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        (0..self.n).all(|a| x[a] >= self.lo[a] && x[a] <= self.hi[a])
    }
}

/// The two pieces of ∂Ω: the measurement face `x1 = hi[0]` and the rest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryFace {
    Gamma0,
    Gamma1,
}

/// Face membership of a boundary node. Edges and corners on the
/// measurement face belong to both.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FaceSet {
    pub gamma0: bool,
    pub gamma1: bool,
}

impl FaceSet {
    pub fn contains(&self, face: BoundaryFace) -> bool {
        match face {
            BoundaryFace::Gamma0 => self.gamma0,
            BoundaryFace::Gamma1 => self.gamma1,
        }
    }
}

/// Uniform node grid on a [`Domain`].
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialGrid {
    domain: Domain,
    counts: [usize; MAX_DIM],
    spacing: [f64; MAX_DIM],
    strides: [usize; MAX_DIM],
}

impl SpatialGrid {
    /// Builds a grid with `counts[a]` nodes on axis `a`, boundaries included.
    ///
    /// At least four nodes per axis are needed: the Neumann constraint uses
    /// a three-point one-sided stencil and the penalty uses third differences.
    pub fn new(domain: Domain, counts: &[usize]) -> Result<Self> {
        let n = domain.dim();
        if counts.len() != n {
            return Err(Error::validation(
                "grid.counts",
                format!("expected {n} node counts, got {}", counts.len()),
            ));
        }
        let mut c = [1usize; MAX_DIM];
        let mut s = [1.0; MAX_DIM];
        for a in 0..n {
            if counts[a] < 4 {
                return Err(Error::validation(
                    format!("grid.counts[{a}]"),
                    format!(
                        "need at least 4 nodes per axis for the one-sided Neumann stencil and \
                         third-order differences, got {}",
                        counts[a]
                    ),
                ));
            }
            c[a] = counts[a];
            s[a] = (domain.hi(a) - domain.lo(a)) / (counts[a] - 1) as f64;
        }
        let strides = [c[1] * c[2], c[2], 1];
        Ok(SpatialGrid { domain, counts: c, spacing: s, strides })
    }

    /// `N` nodes per axis on `(1, 2)^n`.
    pub fn standard(n: usize, nodes: usize) -> Result<Self> {
        SpatialGrid::new(Domain::standard(n)?, &vec![nodes; n])
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn count(&self, axis: usize) -> usize {
        self.counts[axis]
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts[..self.dim()]
    }

    /// Counts padded to three axes (trailing axes have one node).
    pub fn shape3(&self) -> [usize; MAX_DIM] {
        self.counts
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.spacing[axis]
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing[a]).product()
    }

    pub fn multi_index(&self, idx: usize) -> [usize; MAX_DIM] {
        [idx / self.strides[0], (idx / self.strides[1]) % self.counts[1], idx % self.counts[2]]
    }

    pub fn flat_index(&self, m: [usize; MAX_DIM]) -> usize {
        m[0] * self.strides[0] + m[1] * self.strides[1] + m[2]
    }

    /// Coordinate of node `i` on `axis`; computed from the integer index so
    /// it is bit-reproducible.
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        if i + 1 == self.counts[axis] {
            self.domain.hi(axis)
        } else {
            self.domain.lo(axis) + i as f64 * self.spacing[axis]
        }
    }

    /// Node coordinates, padded with zeros beyond `dim()`.
    pub fn point(&self, idx: usize) -> [f64; MAX_DIM] {
        let m = self.multi_index(idx);
        let mut p = [0.0; MAX_DIM];
        for a in 0..self.dim() {
            p[a] = self.coord(a, m[a]);
        }
        p
    }

    /// Index of the node closest to `x` (clamped into the grid).
    pub fn nearest_index(&self, x: &[f64]) -> usize {
        let mut m = [0usize; MAX_DIM];
        for a in 0..self.dim() {
            let r = ((x[a] - self.domain.lo(a)) / self.spacing[a]).round();
            m[a] = r.clamp(0.0, (self.counts[a] - 1) as f64) as usize;
        }
        self.flat_index(m)
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let m = self.multi_index(idx);
        (0..self.dim()).any(|a| m[a] == 0 || m[a] + 1 == self.counts[a])
    }

    pub fn is_interior(&self, idx: usize) -> bool {
        !self.is_boundary(idx)
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_interior(i)).collect()
    }

    /// Boundary nodes in grid order; this is the node order of Dirichlet data.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_boundary(i)).collect()
    }

    /// Nodes of the measurement face `x1 = hi[0]` in grid order; this is the
    /// node order of Neumann data.
    pub fn gamma0_nodes(&self) -> Vec<usize> {
        let last = self.counts[0] - 1;
        (0..self.len()).filter(|&i| self.multi_index(i)[0] == last).collect()
    }

    /// Faces a boundary node belongs to.
    pub fn classify_boundary(&self, idx: usize) -> Result<FaceSet> {
        if idx >= self.len() {
            return Err(Error::validation("node", format!("index {idx} out of range")));
        }
        if !self.is_boundary(idx) {
            return Err(Error::validation("node", format!("node {idx} is interior")));
        }
        let m = self.multi_index(idx);
        let gamma0 = m[0] + 1 == self.counts[0];
        let gamma1 = m[0] == 0 || (1..self.dim()).any(|a| m[a] == 0 || m[a] + 1 == self.counts[a]);
        Ok(FaceSet { gamma0, gamma1 })
    }

    /// Whether two grids describe the same nodes.
    pub fn same_nodes(&self, other: &SpatialGrid) -> bool {
        self.dim() == other.dim()
            && self.counts == other.counts
            && (0..self.dim()).all(|a| {
                self.domain.lo(a) == other.domain.lo(a) && self.domain.hi(a) == other.domain.hi(a)
            })
    }

    pub fn check_same(&self, other: &SpatialGrid) -> Result<()> {
        if self.same_nodes(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{:?} on {:?}..{:?} vs {:?} on {:?}..{:?}",
                self.counts(),
                &self.domain.lo[..self.dim()],
                &self.domain.hi[..self.dim()],
                other.counts(),
                &other.domain.lo[..other.dim()],
                &other.domain.hi[..other.dim()],
            )))
        }
    }
}

/// Nodal values of one function on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: SpatialGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: SpatialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn zeros(grid: &SpatialGrid) -> Self {
        ScalarField { grid: grid.clone(), values: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: &SpatialGrid, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let n = grid.dim();
        let values = (0..grid.len()).map(|i| f(&grid.point(i)[..n])).collect();
        ScalarField { grid: grid.clone(), values }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Largest value over interior nodes (`-inf` if there are none).
    pub fn max_interior(&self) -> f64 {
        (0..self.grid.len())
            .filter(|&i| self.grid.is_interior(i))
            .map(|i| self.values[i])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `k + 1` layers of nodal values sharing one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldStack {
    grid: SpatialGrid,
    layers: usize,
    data: Vec<f64>,
}

impl FieldStack {
    pub fn zeros(grid: &SpatialGrid, layers: usize) -> Self {
        FieldStack { grid: grid.clone(), layers, data: vec![0.0; layers * grid.len()] }
    }

    pub fn from_layers(grid: &SpatialGrid, layers: Vec<Vec<f64>>) -> Result<Self> {
        let nn = grid.len();
        let mut data = Vec::with_capacity(layers.len() * nn);
        for (i, l) in layers.iter().enumerate() {
            if l.len() != nn {
                return Err(Error::GridMismatch(format!(
                    "layer {i} has {} values, grid has {nn} nodes",
                    l.len()
                )));
            }
            data.extend_from_slice(l);
        }
        Ok(FieldStack { grid: grid.clone(), layers: layers.len(), data })
    }

    pub fn from_vec(grid: &SpatialGrid, layers: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != layers * grid.len() {
            return Err(Error::GridMismatch(format!(
                "stack data has {} values, expected {}",
                data.len(),
                layers * grid.len()
            )));
        }
        Ok(FieldStack { grid: grid.clone(), layers, data })
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    /// Number of layers, i.e. `k + 1`.
    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn layer(&self, i: usize) -> &[f64] {
        let nn = self.grid.len();
        &self.data[i * nn..(i + 1) * nn]
    }

    pub fn layer_mut(&mut self, i: usize) -> &mut [f64] {
        let nn = self.grid.len();
        &mut self.data[i * nn..(i + 1) * nn]
    }

    pub fn layer_field(&self, i: usize) -> ScalarField {
        ScalarField { grid: self.grid.clone(), values: self.layer(i).to_vec() }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, layer: usize, node: usize) -> f64 {
        self.data[layer * self.grid.len() + node]
    }

    pub fn set(&mut self, layer: usize, node: usize, v: f64) {
        let nn = self.grid.len();
        self.data[layer * nn + node] = v;
    }

    /// Discrete L2 norm over all layers, `sqrt(Σ v² · cellvol)`.
    pub fn l2_norm(&self) -> f64 {
        (self.data.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// The time partition `t_i = ε + i·h`, `h = (T − ε)/k`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    epsilon: f64,
    t_final: f64,
    k: usize,
}

impl TimeGrid {
    /// `k >= 4` because the endpoint stencil reaches back to `t_{k-3}`.
    pub fn new(epsilon: f64, t_final: f64, k: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::validation("epsilon", format!("must be positive, got {epsilon}")));
        }
        if !(t_final > epsilon && t_final.is_finite()) {
            return Err(Error::validation(
                "T",
                format!("final time {t_final} must exceed epsilon {epsilon}"),
            ));
        }
        if k < 4 {
            return Err(Error::validation(
                "nt",
                format!("need k >= 4 time steps (the endpoint stencil uses t_(k-3)), got {k}"),
            ));
        }
        Ok(TimeGrid { epsilon, t_final, k })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn h(&self) -> f64 {
        (self.t_final - self.epsilon) / self.k as f64
    }

    /// `t_i`, computed directly (not accumulated); `t_k` is exactly `T`.
    pub fn node(&self, i: usize) -> f64 {
        if i == self.k {
            self.t_final
        } else {
            self.epsilon + i as f64 * (self.t_final - self.epsilon) / self.k as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.k).map(|i| self.node(i)).collect()
    }
}
