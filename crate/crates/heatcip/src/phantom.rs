//! Ground-truth coefficients: letter-shaped inclusions and image masks.
//!
//! Glyphs live in a unit box `(u, v) ∈ [0,1]²` where `u` runs along x1 and
//! `v` along x2 (so `v` is "up" in rendered images). The box is mapped onto
//! the central half of Ω on both axes. A node joins the mask when at least
//! half of its dual cell is covered, which keeps the inclusion area stable
//! under refinement. A one-node ring along ∂Ω is always zero.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::{ScalarField, SpatialGrid};
use crate::io::GrayImage;

/// Stroke width in domain units.
pub const STROKE: f64 = 0.08;

/// Fraction of each axis covered by the glyph box.
pub const GLYPH_EXTENT: f64 = 0.5;

const SUBSAMPLES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Letter {
    A,
    B,
    Omega,
    SZ,
    L,
    K,
}

impl Letter {
    pub const ALL: [Letter; 6] = [Letter::A, Letter::B, Letter::Omega, Letter::SZ, Letter::L, Letter::K];
}

impl FromStr for Letter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "A" => Ok(Letter::A),
            "B" => Ok(Letter::B),
            "OMEGA" | "Ω" => Ok(Letter::Omega),
            "SZ" => Ok(Letter::SZ),
            "L" => Ok(Letter::L),
            "K" => Ok(Letter::K),
            _ => Err(Error::validation(
                "phantom.letter",
                format!("unknown glyph '{s}' (expected one of A, B, Omega, SZ, L, K)"),
            )),
        }
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Letter::A => "A",
            Letter::B => "B",
            Letter::Omega => "Omega",
            Letter::SZ => "SZ",
            Letter::L => "L",
            Letter::K => "K",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug)]
enum Shape {
    Rect { u0: f64, u1: f64, v0: f64, v1: f64 },
    /// Straight stroke of full width `w` between two points, flat caps.
    Bar { a: (f64, f64), b: (f64, f64), w: f64 },
}

impl Shape {
    fn contains(&self, u: f64, v: f64) -> bool {
        match *self {
            Shape::Rect { u0, u1, v0, v1 } => u >= u0 && u <= u1 && v >= v0 && v <= v1,
            Shape::Bar { a, b, w } => {
                let (dx, dy) = (b.0 - a.0, b.1 - a.1);
                let len2 = dx * dx + dy * dy;
                let t = ((u - a.0) * dx + (v - a.1) * dy) / len2;
                if !(0.0..=1.0).contains(&t) {
                    return false;
                }
                let (px, py) = (a.0 + t * dx - u, a.1 + t * dy - v);
                px * px + py * py <= 0.25 * w * w
            }
        }
    }
}

fn rect(u0: f64, u1: f64, v0: f64, v1: f64) -> Shape {
    Shape::Rect { u0, u1, v0, v1 }
}

fn bar(a: (f64, f64), b: (f64, f64), w: f64) -> Shape {
    Shape::Bar { a, b, w }
}

/// Glyph outline as a union of shapes; `s` is the stroke width in glyph units.
fn glyph_shapes(letter: Letter, s: f64) -> Vec<Shape> {
    let m = 0.5;
    match letter {
        Letter::B => vec![
            rect(0.0, s, 0.0, 1.0),
            rect(0.0, 0.85, 1.0 - s, 1.0),
            rect(0.0, 0.85, m - s / 2.0, m + s / 2.0),
            rect(0.0, 1.0, 0.0, s),
            rect(0.85 - s, 0.85, m, 1.0),
            rect(1.0 - s, 1.0, 0.0, m),
        ],
        Letter::A => vec![
            bar((s / 2.0, 0.0), (0.5, 1.0), s),
            bar((1.0 - s / 2.0, 0.0), (0.5, 1.0), s),
            rect(0.25, 0.75, 0.35, 0.35 + s),
        ],
        Letter::L => vec![rect(0.0, s, 0.0, 1.0), rect(0.0, 0.8, 0.0, s)],
        Letter::K => vec![
            rect(0.0, s, 0.0, 1.0),
            bar((s, m), (1.0, 1.0), s),
            bar((s, m), (1.0, 0.0), s),
        ],
        Letter::Omega => vec![
            rect(0.15, 0.85, 1.0 - s, 1.0),
            rect(0.0, s, 0.35, 0.85),
            rect(1.0 - s, 1.0, 0.35, 0.85),
            bar((s / 2.0, 0.85), (0.15, 1.0 - s / 2.0), s),
            bar((1.0 - s / 2.0, 0.85), (0.85, 1.0 - s / 2.0), s),
            bar((s / 2.0, 0.35), (0.3, s / 2.0), s),
            bar((1.0 - s / 2.0, 0.35), (0.7, s / 2.0), s),
            rect(0.05, 0.35, 0.0, s),
            rect(0.65, 0.95, 0.0, s),
        ],
        Letter::SZ => {
            let w = 0.45;
            let z0 = 0.55;
            vec![
                // S
                rect(0.0, w, 1.0 - s, 1.0),
                rect(0.0, s, m, 1.0),
                rect(0.0, w, m - s / 2.0, m + s / 2.0),
                rect(w - s, w, 0.0, m),
                rect(0.0, w, 0.0, s),
                // Z
                rect(z0, 1.0, 1.0 - s, 1.0),
                rect(z0, 1.0, 0.0, s),
                bar((1.0 - s / 2.0, 1.0 - s), (z0 + s / 2.0, s), s),
            ]
        }
    }
}

/// Ground-truth coefficient on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    values: ScalarField,
    mask: Vec<bool>,
    a_inside: f64,
}

impl Phantom {
    pub fn zero(grid: &SpatialGrid) -> Self {
        Phantom { values: ScalarField::zeros(grid), mask: vec![false; grid.len()], a_inside: 0.0 }
    }

    /// Builds a phantom from a node mask; boundary nodes are cleared.
    pub fn from_mask(grid: &SpatialGrid, mut mask: Vec<bool>, a_inside: f64) -> Result<Self> {
        if !(a_inside >= 0.0 && a_inside.is_finite()) {
            return Err(Error::validation("phantom.amplitude", format!("must be >= 0, got {a_inside}")));
        }
        if mask.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "mask has {} entries, grid has {} nodes",
                mask.len(),
                grid.len()
            )));
        }
        for (i, m) in mask.iter_mut().enumerate() {
            if grid.is_boundary(i) {
                *m = false;
            }
        }
        let values = mask.iter().map(|&m| if m { a_inside } else { 0.0 }).collect();
        Ok(Phantom { values: ScalarField::new(grid.clone(), values)?, mask, a_inside })
    }

    pub fn grid(&self) -> &SpatialGrid {
        self.values.grid()
    }

    pub fn values(&self) -> &ScalarField {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn a_inside(&self) -> f64 {
        self.a_inside
    }

    pub fn mask_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Coefficient at an arbitrary point: the value of the nearest grid node
    /// inside the closed domain, zero outside.
    pub fn value_at(&self, x: &[f64]) -> f64 {
        let grid = self.grid();
        if !grid.domain().contains(x) {
            return 0.0;
        }
        self.values.values()[grid.nearest_index(x)]
    }
}

/// Rasterizes a built-in glyph with amplitude `a_inside`.
pub fn letter_phantom(grid: &SpatialGrid, letter: Letter, a_inside: f64) -> Result<Phantom> {
    let d = grid.domain();
    let lx = d.hi(0) - d.lo(0);
    let ly = d.hi(1) - d.lo(1);
    let box_u = (d.lo(0) + 0.5 * (1.0 - GLYPH_EXTENT) * lx, GLYPH_EXTENT * lx);
    let box_v = (d.lo(1) + 0.5 * (1.0 - GLYPH_EXTENT) * ly, GLYPH_EXTENT * ly);
    let s = STROKE / (GLYPH_EXTENT * lx.min(ly));
    let shapes = glyph_shapes(letter, s);
    let inside = |x1: f64, x2: f64| {
        let u = (x1 - box_u.0) / box_u.1;
        let v = (x2 - box_v.0) / box_v.1;
        shapes.iter().any(|sh| sh.contains(u, v))
    };

    let mut mask = vec![false; grid.len()];
    for (idx, m) in mask.iter_mut().enumerate() {
        if grid.is_boundary(idx) {
            continue;
        }
        let p = grid.point(idx);
        let (h1, h2) = (grid.spacing(0), grid.spacing(1));
        let mut hits = 0usize;
        for a in 0..SUBSAMPLES {
            for b in 0..SUBSAMPLES {
                let x1 = p[0] + h1 * ((a as f64 + 0.5) / SUBSAMPLES as f64 - 0.5);
                let x2 = p[1] + h2 * ((b as f64 + 0.5) / SUBSAMPLES as f64 - 0.5);
                if inside(x1, x2) {
                    hits += 1;
                }
            }
        }
        let mut frac = hits as f64 / (SUBSAMPLES * SUBSAMPLES) as f64;
        if grid.dim() == 3 {
            frac *= slab_coverage(grid, p[2]);
        }
        *m = frac >= 0.5;
    }
    Phantom::from_mask(grid, mask, a_inside)
}

/// Fraction of the dual cell around `x3` lying in the central third of x3.
fn slab_coverage(grid: &SpatialGrid, x3: f64) -> f64 {
    let d = grid.domain();
    let l = d.hi(2) - d.lo(2);
    let (s0, s1) = (d.lo(2) + l / 3.0, d.lo(2) + 2.0 * l / 3.0);
    let h = grid.spacing(2);
    let (c0, c1) = (x3 - 0.5 * h, x3 + 0.5 * h);
    ((c1.min(s1) - c0.max(s0)).max(0.0)) / h
}

/// Phantom from a grayscale picture: dark pixels (below 50% gray) are
/// inside. The picture covers Ω with its top row at `x2 = hi`; three
/// dimensional grids use the picture on every x3 slice of the central third.
pub fn mask_from_image(grid: &SpatialGrid, image: &GrayImage, a_inside: f64) -> Result<Phantom> {
    if image.width == 0 || image.height == 0 {
        return Err(Error::parse(0, "empty image"));
    }
    let d = grid.domain();
    let threshold = image.maxval as f64 / 2.0;
    let mut mask = vec![false; grid.len()];
    for (idx, m) in mask.iter_mut().enumerate() {
        let p = grid.point(idx);
        let fx = (p[0] - d.lo(0)) / (d.hi(0) - d.lo(0));
        let fy = (d.hi(1) - p[1]) / (d.hi(1) - d.lo(1));
        let col = ((fx * image.width as f64) as usize).min(image.width - 1);
        let row = ((fy * image.height as f64) as usize).min(image.height - 1);
        let dark = (image.pixels[row * image.width + col] as f64) < threshold;
        let in_slab = grid.dim() == 2 || slab_coverage(grid, p[2]) >= 0.5;
        *m = dark && in_slab;
    }
    Phantom::from_mask(grid, mask, a_inside)
}
