//! From the minimizer stack to `a(x)`, and error metrics.

use crate::carleman_core::BackgroundTerms;
use crate::error::{Error, Result};
use crate::geometry::{FieldStack, ScalarField, SpatialGrid, TimeGrid};
use crate::phantom::Phantom;

/// `w_i = h·Σ_{j≤i} v_j + w_ε`.
pub fn accumulate_w(v: &FieldStack, bg: &BackgroundTerms, tg: &TimeGrid) -> Result<FieldStack> {
    let grid = v.grid();
    grid.check_same(bg.w_eps.grid())?;
    let h = tg.h();
    let mut w = FieldStack::zeros(grid, v.layers());
    let mut acc = vec![0.0; grid.len()];
    for i in 0..v.layers() {
        let l = w.layer_mut(i);
        for p in 0..grid.len() {
            acc[p] += h * v.get(i, p);
            l[p] = acc[p] + bg.w_eps.values()[p];
        }
    }
    Ok(w)
}

/// Numerator of the first term.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecoveryForm {
    /// `(w_k − w_ε)/(T − ε)`, the time average of `w_t`.
    W,
    /// `(v_k − v_0)/(T − ε)`, kept for comparison only.
    V,
}

fn laplace_and_grad_sq(grid: &SpatialGrid, w: &[f64], p: usize) -> f64 {
    let mut s = 0.0;
    for a in 0..grid.dim() {
        let st = grid.stride(a);
        let d = grid.spacing(a);
        s += (w[p + st] + w[p - st] - 2.0 * w[p]) / (d * d);
        let g = (w[p + st] - w[p - st]) / (2.0 * d);
        s += g * g;
    }
    s
}

/// `a = (w_k − w_ε)/(T−ε) − h/(T−ε)·Σ_i (Δw_i + |∇w_i|²)` on interior
/// nodes, zero on the boundary. `v` is only read by [`RecoveryForm::V`].
pub fn recover_coefficient(
    w: &FieldStack,
    v: &FieldStack,
    bg: &BackgroundTerms,
    tg: &TimeGrid,
    form: RecoveryForm,
) -> Result<ScalarField> {
    let grid = w.grid();
    grid.check_same(v.grid())?;
    let k = tg.k();
    if w.layers() != k + 1 || v.layers() != k + 1 {
        return Err(Error::GridMismatch(format!("expected {} layers", k + 1)));
    }
    let span = tg.t_final() - tg.epsilon();
    let h = tg.h();
    let mut a = ScalarField::zeros(grid);
    for p in grid.interior_nodes() {
        let first = match form {
            RecoveryForm::W => w.get(k, p) - bg.w_eps.values()[p],
            RecoveryForm::V => v.get(k, p) - v.get(0, p),
        };
        let sum: f64 = (0..=k).map(|i| laplace_and_grad_sq(grid, w.layer(i), p)).sum();
        a.values_mut()[p] = first / span - h / span * sum;
    }
    Ok(a)
}

/// `w` layers and `a` from a minimizer stack. With a reference stack the
/// result is `R(V) − R(V_ref)`: the recovery of the reference, which
/// carries only discretization error, is subtracted.
pub fn reconstruct(
    v: &FieldStack,
    reference: Option<&FieldStack>,
    bg: &BackgroundTerms,
    tg: &TimeGrid,
    form: RecoveryForm,
) -> Result<(ScalarField, FieldStack)> {
    let w = accumulate_w(v, bg, tg)?;
    let mut a = recover_coefficient(&w, v, bg, tg, form)?;
    if let Some(r) = reference {
        let wr = accumulate_w(r, bg, tg)?;
        let ar = recover_coefficient(&wr, r, bg, tg, form)?;
        a.values_mut().iter_mut().zip(ar.values()).for_each(|(x, y)| *x -= y);
    }
    Ok((a, w))
}

/// Floor of the denominator of the relative error.
pub const TINY: f64 = 1e-12;

/// Error measures of a reconstruction against its phantom.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub rel_l2_err: f64,
    pub max_value: f64,
    pub max_value_rel_err: f64,
    pub iou_at_half_max: f64,
    /// Distance between the centroid of `{a ≥ max/2}` and the mask centroid,
    /// NaN when either set is empty.
    pub centroid_offset: f64,
}

impl Metrics {
    pub const NAMES: [&'static str; 5] =
        ["rel_l2_err", "max_value", "max_value_rel_err", "iou_at_half_max", "centroid_offset"];

    pub fn values(&self) -> [f64; 5] {
        [self.rel_l2_err, self.max_value, self.max_value_rel_err, self.iou_at_half_max, self.centroid_offset]
    }

    /// `name = value` lines.
    pub fn to_text(&self) -> String {
        Metrics::NAMES.iter().zip(self.values()).map(|(n, v)| format!("{n} = {v:e}\n")).collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut vals = [f64::NAN; 5];
        let mut seen = [false; 5];
        let mut offset = 0;
        for line in text.lines() {
            let t = line.trim();
            if !t.is_empty() && !t.starts_with('#') {
                let (k, v) = t.split_once('=').ok_or_else(|| Error::parse(offset, "expected name = value"))?;
                if let Some(i) = Metrics::NAMES.iter().position(|n| *n == k.trim()) {
                    vals[i] = v.trim().parse().map_err(|_| Error::parse(offset, format!("bad number '{}'", v.trim())))?;
                    seen[i] = true;
                }
            }
            offset += line.len() + 1;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::parse(text.len(), format!("missing metric '{}'", Metrics::NAMES[i])));
        }
        Ok(Metrics {
            rel_l2_err: vals[0],
            max_value: vals[1],
            max_value_rel_err: vals[2],
            iou_at_half_max: vals[3],
            centroid_offset: vals[4],
        })
    }
}

fn centroid(grid: &SpatialGrid, set: &[bool]) -> Option<Vec<f64>> {
    let n = grid.dim();
    let mut c = vec![0.0; n];
    let mut count = 0usize;
    for (p, _) in set.iter().enumerate().filter(|(_, &s)| s) {
        let x = grid.point(p);
        c.iter_mut().zip(&x[..n]).for_each(|(a, b)| *a += b);
        count += 1;
    }
    (count > 0).then(|| c.iter().map(|v| v / count as f64).collect())
}

/// Metrics of `a_comp` against the phantom; negative values are optionally
/// clipped to zero first.
pub fn metrics(a_comp: &ScalarField, phantom: &Phantom, clip_negative: bool) -> Result<Metrics> {
    let grid = a_comp.grid();
    grid.check_same(phantom.grid())?;
    let comp: Vec<f64> =
        a_comp.values().iter().map(|&v| if clip_negative { v.max(0.0) } else { v }).collect();
    let truth = phantom.values().values();
    let diff: f64 = comp.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum();
    let norm: f64 = truth.iter().map(|b| b * b).sum();
    let rel_l2_err = diff.sqrt() / norm.sqrt().max(TINY);

    let interior = grid.interior_nodes();
    let max_value = interior.iter().map(|&p| comp[p]).fold(f64::NEG_INFINITY, f64::max);
    let true_max = truth.iter().copied().fold(0.0, f64::max);
    let max_value_rel_err =
        if true_max > 0.0 { (max_value - true_max).abs() / true_max } else { max_value.abs() };

    let mut set = vec![false; grid.len()];
    if max_value > 0.0 {
        for &p in &interior {
            set[p] = comp[p] >= 0.5 * max_value;
        }
    }
    let mask = phantom.mask();
    let inter = set.iter().zip(mask).filter(|(a, b)| **a && **b).count();
    let union = set.iter().zip(mask).filter(|(a, b)| **a || **b).count();
    let iou_at_half_max = if union == 0 { 1.0 } else { inter as f64 / union as f64 };
    let centroid_offset = match (centroid(grid, &set), centroid(grid, mask)) {
        (Some(a), Some(b)) => a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
        _ => f64::NAN,
    };
    Ok(Metrics { rel_l2_err, max_value, max_value_rel_err, iou_at_half_max, centroid_offset })
}
