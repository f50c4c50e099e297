//! Run configuration.
//!
//! TOML with one table per concern. Every key has a default, so an empty
//! file is a valid configuration. Environment variables of the form
//! `HEATCIP_<SECTION>__<KEY>` override single keys, e.g.
//! `HEATCIP_CARLEMAN__LAMBDA=2`; values are parsed as TOML and fall back to
//! plain strings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::carleman_core::{CarlemanParams, DifferenceScaling};
use crate::data_model::DiscretizeOptions;
use crate::error::{Error, Result};
use crate::forward_sim::{AuxShape, ForwardParams, TimeScheme};
use crate::geometry::{Domain, SpatialGrid, TimeGrid};
use crate::optimizer::{InitialGuess, Method, OptimOptions};
use crate::phantom::{letter_phantom, mask_from_image, Letter, Phantom};
use crate::reconstruct::RecoveryForm;

pub const ENV_PREFIX: &str = "HEATCIP_";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    /// Node count per axis; a single entry applies to every axis.
    pub nodes: Vec<usize>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { n: 2, nodes: vec![20], lo: vec![1.0], hi: vec![2.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    pub t_final: f64,
    pub nt: usize,
    pub epsilon: f64,
}

impl Default for TimeSection {
    fn default() -> Self {
        TimeSection { t_final: 4.0, nt: 20, epsilon: 0.01 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceMode {
    /// Fit relative to the zero-potential stack.
    Background,
    /// The plain functional.
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalingName {
    Raw,
    Derivative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarlemanSection {
    pub lambda: f64,
    pub alpha: f64,
    pub c: f64,
    pub reg_order: usize,
    pub scaling: ScalingName,
    pub reference: ReferenceMode,
}

impl Default for CarlemanSection {
    fn default() -> Self {
        CarlemanSection {
            lambda: 3.0,
            alpha: 3e-5,
            c: 5.0,
            reg_order: 3,
            scaling: ScalingName::Derivative,
            reference: ReferenceMode::Background,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub sigma: f64,
    pub seed: u64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection { sigma: 0.0, seed: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSection {
    /// Built-in glyph name, or `"zero"` for `a ≡ 0`.
    pub letter: String,
    pub amplitude: f64,
    /// PGM mask; overrides `letter` when set.
    pub image: Option<PathBuf>,
}

impl Default for PhantomSection {
    fn default() -> Self {
        PhantomSection { letter: "B".into(), amplitude: 2.0, image: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeName {
    Box,
    Ball,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeName {
    CrankNicolson,
    ImplicitEuler,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForwardSection {
    pub shape: ShapeName,
    pub center: Option<Vec<f64>>,
    pub radius: f64,
    pub mesh: f64,
    pub steps: usize,
    pub xi: f64,
    pub scheme: SchemeName,
    pub euler_startup: usize,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub record_from: f64,
}

impl Default for ForwardSection {
    fn default() -> Self {
        let p = ForwardParams::default();
        ForwardSection {
            shape: ShapeName::Box,
            center: None,
            radius: p.radius,
            mesh: p.mesh,
            steps: p.steps,
            xi: p.xi,
            scheme: SchemeName::CrankNicolson,
            euler_startup: p.euler_startup,
            cg_tol: p.cg_tol,
            cg_max_iter: p.cg_max_iter,
            record_from: p.record_from,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Lbfgs,
    Gd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialName {
    Decay,
    Reference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub method: MethodName,
    pub grad_tol: f64,
    pub max_iters: usize,
    pub lbfgs_memory: usize,
    pub armijo: f64,
    pub max_backtracks: usize,
    pub gamma: f64,
    pub halve_on_increase: bool,
    pub initial: InitialName,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let o = OptimOptions::default();
        OptimizerSection {
            method: MethodName::Lbfgs,
            grad_tol: o.grad_tol,
            max_iters: o.max_iters,
            lbfgs_memory: o.lbfgs_memory,
            armijo: o.armijo,
            max_backtracks: o.max_backtracks,
            gamma: o.gamma,
            halve_on_increase: o.halve_on_increase,
            initial: InitialName::Decay,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormName {
    W,
    V,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoverySection {
    pub form: FormName,
    pub clip_negative: bool,
    pub anchor_t0: bool,
}

impl Default for RecoverySection {
    fn default() -> Self {
        RecoverySection { form: FormName::W, clip_negative: false, anchor_t0: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Concurrent runs; 0 means one per available core.
    pub workers: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { workers: 0 }
    }
}

/// Everything a run needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InverseConfig {
    pub output_dir: PathBuf,
    pub grid: GridSection,
    pub time: TimeSection,
    pub carleman: CarlemanSection,
    pub noise: NoiseSection,
    pub phantom: PhantomSection,
    pub forward: ForwardSection,
    pub optimizer: OptimizerSection,
    pub recovery: RecoverySection,
    pub sweep: SweepSection,
}

impl Default for InverseConfig {
    fn default() -> Self {
        InverseConfig {
            output_dir: PathBuf::from("out"),
            grid: GridSection::default(),
            time: TimeSection::default(),
            carleman: CarlemanSection::default(),
            noise: NoiseSection::default(),
            phantom: PhantomSection::default(),
            forward: ForwardSection::default(),
            optimizer: OptimizerSection::default(),
            recovery: RecoverySection::default(),
            sweep: SweepSection::default(),
        }
    }
}

fn toml_error(text: &str, e: toml::de::Error) -> Error {
    let offset = e.span().map_or(text.len(), |s| s.start);
    Error::parse(offset, e.message())
}

/// Parses a value as TOML, falling back to a bare string.
fn parse_scalar(raw: &str) -> toml::Value {
    let wrapped = format!("x = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("x").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn per_axis(v: &[f64], n: usize, field: &str) -> Result<Vec<f64>> {
    match v.len() {
        1 => Ok(vec![v[0]; n]),
        l if l == n => Ok(v.to_vec()),
        l => Err(Error::validation(field, format!("expected 1 or {n} entries, got {l}"))),
    }
}

impl InverseConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| toml_error(text, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        InverseConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Sets one key given as `section.key` (or a top-level key).
    pub fn set(&mut self, path: &str, raw: &str) -> Result<()> {
        let mut table: toml::Table = toml::Table::try_from(&*self).expect("config serializes");
        let parts: Vec<&str> = path.split('.').collect();
        let value = parse_scalar(raw);
        match parts.as_slice() {
            [key] => {
                table.insert(key.to_string(), value);
            }
            [section, key] => {
                let sec = table
                    .entry(section.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()));
                match sec {
                    toml::Value::Table(t) => {
                        t.insert(key.to_string(), value);
                    }
                    _ => return Err(Error::validation(path, "not a section")),
                }
            }
            _ => return Err(Error::validation(path, "expected 'section.key'")),
        }
        let updated: InverseConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::validation(path, e.message()))?;
        *self = updated;
        Ok(())
    }

    /// Applies `HEATCIP_<SECTION>__<KEY>` overrides from the given variables.
    pub fn apply_env<I>(&mut self, vars: I) -> Result<()>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut pairs: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|k| (k.to_ascii_lowercase().replace("__", "."), v)))
            .collect();
        pairs.sort();
        for (k, v) in pairs {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<SpatialGrid> {
        let n = self.grid.n;
        if !(n == 2 || n == 3) {
            return Err(Error::validation("grid.n", format!("must be 2 or 3, got {n}")));
        }
        let lo = per_axis(&self.grid.lo, n, "grid.lo")?;
        let hi = per_axis(&self.grid.hi, n, "grid.hi")?;
        let nodes: Vec<usize> = match self.grid.nodes.len() {
            1 => vec![self.grid.nodes[0]; n],
            l if l == n => self.grid.nodes.clone(),
            l => return Err(Error::validation("grid.nodes", format!("expected 1 or {n} entries, got {l}"))),
        };
        let domain = Domain::new(&lo, &hi).map_err(|e| relabel(e, "grid"))?;
        SpatialGrid::new(domain, &nodes).map_err(|e| relabel(e, "grid.nodes"))
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        let t = &self.time;
        if !(t.epsilon > 0.0) {
            return Err(Error::validation("time.epsilon", "must be positive"));
        }
        if !(t.epsilon < t.t_final) {
            return Err(Error::validation(
                "time.epsilon",
                format!("must be smaller than time.t_final ({} >= {})", t.epsilon, t.t_final),
            ));
        }
        if t.nt < 4 {
            return Err(Error::validation("time.nt", format!("must be at least 4, got {}", t.nt)));
        }
        TimeGrid::new(t.epsilon, t.t_final, t.nt).map_err(|e| relabel(e, "time"))
    }

    pub fn carleman(&self) -> CarlemanParams {
        CarlemanParams {
            lambda: self.carleman.lambda,
            alpha: self.carleman.alpha,
            c: self.carleman.c,
            reg_order: self.carleman.reg_order,
            scaling: match self.carleman.scaling {
                ScalingName::Raw => DifferenceScaling::Raw,
                ScalingName::Derivative => DifferenceScaling::Derivative,
            },
        }
    }

    pub fn forward(&self) -> ForwardParams {
        let f = &self.forward;
        ForwardParams {
            shape: match f.shape {
                ShapeName::Box => AuxShape::Box,
                ShapeName::Ball => AuxShape::Ball,
            },
            center: f.center.clone(),
            radius: f.radius,
            mesh: f.mesh,
            steps: f.steps,
            t_final: self.time.t_final,
            xi: f.xi,
            scheme: match f.scheme {
                SchemeName::CrankNicolson => TimeScheme::CrankNicolson,
                SchemeName::ImplicitEuler => TimeScheme::ImplicitEuler,
            },
            euler_startup: f.euler_startup,
            cg_tol: f.cg_tol,
            cg_max_iter: f.cg_max_iter,
            record_from: f.record_from,
        }
    }

    pub fn optimizer(&self) -> OptimOptions {
        let o = &self.optimizer;
        OptimOptions {
            method: match o.method {
                MethodName::Lbfgs => Method::Lbfgs,
                MethodName::Gd => Method::GradientDescent,
            },
            grad_tol: o.grad_tol,
            max_iters: o.max_iters,
            lbfgs_memory: o.lbfgs_memory,
            armijo: o.armijo,
            max_backtracks: o.max_backtracks,
            gamma: o.gamma,
            halve_on_increase: o.halve_on_increase,
        }
    }

    pub fn initial_guess(&self) -> InitialGuess {
        match self.optimizer.initial {
            InitialName::Decay => InitialGuess::Decay,
            InitialName::Reference => InitialGuess::Reference,
        }
    }

    pub fn recovery_form(&self) -> RecoveryForm {
        match self.recovery.form {
            FormName::W => RecoveryForm::W,
            FormName::V => RecoveryForm::V,
        }
    }

    pub fn discretize_options(&self) -> DiscretizeOptions {
        DiscretizeOptions { anchor_t0: self.recovery.anchor_t0 }
    }

    /// The ground truth named by the `phantom` section.
    pub fn phantom(&self, grid: &SpatialGrid) -> Result<Phantom> {
        if let Some(path) = &self.phantom.image {
            let img = crate::io::GrayImage::read(path)?;
            return mask_from_image(grid, &img, self.phantom.amplitude).map_err(|e| relabel(e, "phantom"));
        }
        if self.phantom.letter.eq_ignore_ascii_case("zero") {
            return Ok(Phantom::zero(grid));
        }
        let letter: Letter = self.phantom.letter.parse()?;
        letter_phantom(grid, letter, self.phantom.amplitude).map_err(|e| relabel(e, "phantom"))
    }

    /// Checks every section; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        let tg = self.time_grid()?;
        self.carleman().validate()?;
        if !(0.0..1.0).contains(&self.noise.sigma) {
            return Err(Error::validation("noise.sigma", format!("must lie in [0, 1), got {}", self.noise.sigma)));
        }
        if !(self.phantom.amplitude >= 0.0 && self.phantom.amplitude.is_finite()) {
            return Err(Error::validation("phantom.amplitude", "must be a finite number >= 0"));
        }
        if self.phantom.image.is_none() && !self.phantom.letter.eq_ignore_ascii_case("zero") {
            self.phantom.letter.parse::<Letter>()?;
        }
        self.forward().validate().map_err(|e| relabel(e, "forward"))?;
        if !(self.forward.record_from < tg.node(1)) {
            return Err(Error::validation(
                "forward.record_from",
                format!("must be below the first measured time t_1 = {}", tg.node(1)),
            ));
        }
        if let Some(c) = &self.forward.center {
            if c.len() != grid.dim() {
                return Err(Error::validation("forward.center", format!("needs {} coordinates", grid.dim())));
            }
        }
        self.optimizer().validate()?;
        if grid.count(0) < 4 {
            return Err(Error::validation("grid.nodes", "need at least 4 nodes along x1"));
        }
        Ok(())
    }

    /// Writes the configuration as TOML.
    pub fn write_snapshot(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_bytes(path.as_ref(), self.to_toml().as_bytes())
    }
}

/// Prefixes the field path of a validation error with a section name.
fn relabel(e: Error, section: &str) -> Error {
    match e {
        Error::Validation { field, message } if !field.starts_with(section) => {
            Error::Validation { field: format!("{section}.{field}"), message }
        }
        other => other,
    }
}
