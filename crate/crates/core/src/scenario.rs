//! Scenario configuration, shipped presets, run orchestration and CSV output.
//!
//! Configs are JSON. Every section carries its own `units` block and all
//! values in it are read in those units; [`parse_config`] converts the
//! whole document to metres and hours. A normalized config keeps `m`/`h`
//! unit blocks, so writing it back and reloading is the identity.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{build_stencils, Face, NodeCloud, SegmentKind, SegmentSpec, Side};
use crate::constitutive::{Gardner, SoilModel, VanGenuchten};
use crate::diagnostics::{
    boundary_flux, estimate_order, net_inflow, rmse, total_mass, FluxSample, FluxSeries, MassTracker,
};
use crate::error::{CloudError, DiagnosticsError, OperatorError, ParamError, StepError};
use crate::linalg::SparseSolver;
use crate::operators::{RbfKernel, StencilSystem};
use crate::root_uptake::{interpolate_psi3, FeddesParams, RootDistribution, RootProfile, SimplifiedSink};
use crate::scalar::Real;
use crate::stepper::{
    advance_with, BoundaryCondition, BoundaryData, FluxSpec, IncrementNorm, InitialGuess, PicardControls, Problem,
    Scheme, SimulationState, Uptake,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthUnit {
    M,
    Cm,
    Mm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    S,
    Min,
    H,
    Day,
}

/// Units of one config section.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Units {
    pub length: LengthUnit,
    pub time: TimeUnit,
}

impl Units {
    pub const INTERNAL: Units = Units { length: LengthUnit::M, time: TimeUnit::H };

    /// Metres per length unit.
    pub fn length_factor(&self) -> f64 {
        match self.length {
            LengthUnit::M => 1.0,
            LengthUnit::Cm => 0.01,
            LengthUnit::Mm => 0.001,
        }
    }

    /// Hours per time unit.
    pub fn time_factor(&self) -> f64 {
        match self.time {
            TimeUnit::S => 1.0 / 3600.0,
            TimeUnit::Min => 1.0 / 60.0,
            TimeUnit::H => 1.0,
            TimeUnit::Day => 24.0,
        }
    }

    fn conv(&self) -> Conv {
        Conv { l: self.length_factor(), t: self.time_factor() }
    }
}

#[derive(Clone, Copy)]
struct Conv {
    l: f64,
    t: f64,
}

impl Conv {
    fn len(&self, x: f64) -> f64 {
        if self.l == 1.0 {
            x
        } else {
            x * self.l
        }
    }
    fn per_len(&self, x: f64) -> f64 {
        if self.l == 1.0 {
            x
        } else {
            x / self.l
        }
    }
    fn time(&self, x: f64) -> f64 {
        if self.t == 1.0 {
            x
        } else {
            x * self.t
        }
    }
    fn per_time(&self, x: f64) -> f64 {
        if self.t == 1.0 {
            x
        } else {
            x / self.t
        }
    }
    fn speed(&self, x: f64) -> f64 {
        self.per_time(self.len(x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Free-form remarks, e.g. which values are assumptions.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub geometry: GeometryConfig,
    pub soil: SoilConfig,
    pub uptake: UptakeConfig,
    pub boundaries: BoundariesConfig,
    pub initial: InitialConfig,
    pub numerics: NumericsConfig,
    pub outputs: OutputsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub units: Units,
    pub dimension: usize,
    /// Box size per axis, vertical axis last.
    pub extents: Vec<f64>,
    /// Nodes per axis.
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum SoilConfig {
    VanGenuchten {
        units: Units,
        theta_r: f64,
        theta_s: f64,
        alpha: f64,
        n: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        m: Option<f64>,
        k_s: f64,
    },
    Gardner {
        units: Units,
        theta_r: f64,
        theta_s: f64,
        alpha: f64,
        k_s: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UptakeConfig {
    None,
    /// `r0` on `l1 ≤ z ≤ l` (elevations).
    Stepwise {
        units: Units,
        r0: f64,
        l1: f64,
        l: f64,
    },
    /// `r0·exp(β(z − top))`.
    Exponential {
        units: Units,
        r0: f64,
        beta: f64,
    },
    Feddes {
        units: Units,
        psi1: f64,
        psi2: f64,
        psi3_low: f64,
        psi3_high: f64,
        psi4: f64,
        r2_low: f64,
        r2_high: f64,
        tp: f64,
        /// Overrides the demand-interpolated ψ₃.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        psi3: Option<f64>,
        roots: RootsConfig,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RootShape {
    Uniform,
    Linear,
    Tabulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RootsConfig {
    pub profile: RootShape,
    pub depth: f64,
    /// `[depth, density]` rows for the tabulated profile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundariesConfig {
    pub units: Units,
    /// Boundary nodes go to the first segment that contains them.
    pub segments: Vec<SegmentConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentConfig {
    /// `bottom`, `top`, `left`, `right`, `front` or `back`.
    pub face: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<RangeConfig>,
    pub condition: ConditionConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeConfig {
    /// `x`, `y` or `z`.
    pub axis: String,
    pub min: f64,
    pub max: f64,
}

/// Flux values are outward normal fluxes: negative means water enters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConditionConfig {
    Dirichlet {
        psi: f64,
    },
    Flux {
        q: f64,
    },
    /// `q0 + delta·exp(k1·t)`.
    ExponentialFlux {
        q0: f64,
        delta: f64,
        k1: f64,
    },
    FreeDrainage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    Constant {
        units: Units,
        psi: f64,
    },
    /// `ψ = psi_bottom − z`.
    Hydrostatic {
        units: Units,
        psi_bottom: f64,
    },
    /// `[z, psi]` rows, linear in between and constant outside.
    Tabulated {
        units: Units,
        points: Vec<[f64; 2]>,
    },
    /// Steady column carrying the outward flux `top_flux` through the
    /// surface, with the simplified sink active.
    SteadyFlux {
        units: Units,
        top_flux: f64,
        psi_bottom: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsConfig {
    pub units: Units,
    pub dt: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    /// Shape parameter [1/length].
    pub epsilon: f64,
    pub n_s: usize,
    /// Picard increment tolerance [length].
    pub tol: f64,
    pub max_iters: usize,
    #[serde(default)]
    pub norm: IncrementNorm,
    #[serde(default)]
    pub initial_guess: InitialGuess,
    #[serde(default)]
    pub max_halvings: usize,
    #[serde(default = "one")]
    pub output_stride: usize,
    #[serde(default)]
    pub axisymmetric: bool,
    /// Grid layers feeding the normal derivative on flux faces.
    #[serde(default = "two")]
    pub flux_layers: usize,
}

fn two() -> usize {
    2
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    pub units: Units,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
    pub profile_times: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), message: message.into() }
}

impl From<ParamError> for ConfigError {
    fn from(e: ParamError) -> Self {
        invalid(e.field, e.message)
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("stencil construction failed: {0}")]
    Cloud(#[from] CloudError),
    #[error("operator construction failed: {0}")]
    Operator(#[from] OperatorError),
    #[error("step {step} (t = {t} h) failed")]
    Step {
        step: usize,
        t: f64,
        #[source]
        source: StepError,
    },
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    pub fn is_validation(&self) -> bool {
        matches!(self, RunError::Config(ConfigError::Invalid { .. } | ConfigError::Parse { .. }))
    }

    pub fn is_non_convergence(&self) -> bool {
        matches!(self, RunError::Step { source, .. } if source.is_non_convergence())
    }
}

fn io_err(path: &Path, source: std::io::Error) -> RunError {
    RunError::Io { path: path.display().to_string(), source }
}

/// Parses, validates and normalizes a JSON config.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let cfg = cfg.normalized();
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse_config(&text)
}

/// Pretty JSON that [`parse_config`] reads back to the same config.
pub fn write_config(cfg: &ScenarioConfig) -> String {
    let mut s = serde_json::to_string_pretty(cfg).expect("config serializes");
    s.push('\n');
    s
}

impl ScenarioConfig {
    /// The same scenario expressed in metres and hours.
    pub fn normalized(&self) -> ScenarioConfig {
        let mut c = self.clone();
        let m = Units::INTERNAL;

        let g = c.geometry.units.conv();
        c.geometry.extents.iter_mut().for_each(|x| *x = g.len(*x));
        c.geometry.units = m;

        c.soil = match c.soil {
            SoilConfig::VanGenuchten { units, theta_r, theta_s, alpha, n, m: mv, k_s } => {
                let u = units.conv();
                SoilConfig::VanGenuchten {
                    units: m,
                    theta_r,
                    theta_s,
                    alpha: u.per_len(alpha),
                    n,
                    m: mv,
                    k_s: u.speed(k_s),
                }
            }
            SoilConfig::Gardner { units, theta_r, theta_s, alpha, k_s } => {
                let u = units.conv();
                SoilConfig::Gardner { units: m, theta_r, theta_s, alpha: u.per_len(alpha), k_s: u.speed(k_s) }
            }
        };

        c.uptake = match c.uptake {
            UptakeConfig::None => UptakeConfig::None,
            UptakeConfig::Stepwise { units, r0, l1, l } => {
                let u = units.conv();
                UptakeConfig::Stepwise { units: m, r0: u.per_time(r0), l1: u.len(l1), l: u.len(l) }
            }
            UptakeConfig::Exponential { units, r0, beta } => {
                let u = units.conv();
                UptakeConfig::Exponential { units: m, r0: u.per_time(r0), beta: u.per_len(beta) }
            }
            UptakeConfig::Feddes { units, psi1, psi2, psi3_low, psi3_high, psi4, r2_low, r2_high, tp, psi3, roots } => {
                let u = units.conv();
                UptakeConfig::Feddes {
                    units: m,
                    psi1: u.len(psi1),
                    psi2: u.len(psi2),
                    psi3_low: u.len(psi3_low),
                    psi3_high: u.len(psi3_high),
                    psi4: u.len(psi4),
                    r2_low: u.speed(r2_low),
                    r2_high: u.speed(r2_high),
                    tp: u.speed(tp),
                    psi3: psi3.map(|v| u.len(v)),
                    roots: RootsConfig {
                        profile: roots.profile,
                        depth: u.len(roots.depth),
                        table: roots.table.map(|t| t.into_iter().map(|[d, b]| [u.len(d), u.per_len(b)]).collect()),
                    },
                }
            }
        };

        let b = c.boundaries.units.conv();
        for s in &mut c.boundaries.segments {
            if let Some(r) = &mut s.range {
                r.min = b.len(r.min);
                r.max = b.len(r.max);
            }
            s.condition = match s.condition {
                ConditionConfig::Dirichlet { psi } => ConditionConfig::Dirichlet { psi: b.len(psi) },
                ConditionConfig::Flux { q } => ConditionConfig::Flux { q: b.speed(q) },
                ConditionConfig::ExponentialFlux { q0, delta, k1 } => {
                    ConditionConfig::ExponentialFlux { q0: b.speed(q0), delta: b.speed(delta), k1: b.per_time(k1) }
                }
                ConditionConfig::FreeDrainage => ConditionConfig::FreeDrainage,
            };
        }
        c.boundaries.units = m;

        c.initial = match c.initial {
            InitialConfig::Constant { units, psi } => InitialConfig::Constant { units: m, psi: units.conv().len(psi) },
            InitialConfig::Hydrostatic { units, psi_bottom } => {
                InitialConfig::Hydrostatic { units: m, psi_bottom: units.conv().len(psi_bottom) }
            }
            InitialConfig::Tabulated { units, points } => {
                let u = units.conv();
                InitialConfig::Tabulated {
                    units: m,
                    points: points.into_iter().map(|[z, p]| [u.len(z), u.len(p)]).collect(),
                }
            }
            InitialConfig::SteadyFlux { units, top_flux, psi_bottom } => {
                let u = units.conv();
                InitialConfig::SteadyFlux { units: m, top_flux: u.speed(top_flux), psi_bottom: u.len(psi_bottom) }
            }
        };

        let n = c.numerics.units.conv();
        c.numerics.dt = n.time(c.numerics.dt);
        c.numerics.t_final = n.time(c.numerics.t_final);
        c.numerics.epsilon = n.per_len(c.numerics.epsilon);
        c.numerics.tol = n.len(c.numerics.tol);
        c.numerics.units = m;

        let o = c.outputs.units.conv();
        c.outputs.profile_times.iter_mut().for_each(|t| *t = o.time(*t));
        c.outputs.units = m;
        c
    }

    /// Checks everything that can be checked without building the cloud.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = &self.geometry;
        if !(1..=3).contains(&g.dimension) {
            return Err(invalid("geometry.dimension", format!("must be 1, 2 or 3, got {}", g.dimension)));
        }
        if g.extents.len() != g.dimension || g.counts.len() != g.dimension {
            return Err(invalid("geometry", "extents and counts need one entry per dimension"));
        }
        if let Some(e) = g.extents.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return Err(invalid("geometry.extents", format!("must be positive, got {e}")));
        }
        if let Some(c) = g.counts.iter().find(|c| **c < 3) {
            return Err(invalid("geometry.counts", format!("need at least 3 nodes per axis, got {c}")));
        }

        let n = &self.numerics;
        if !(n.dt > 0.0 && n.dt.is_finite()) {
            return Err(invalid("numerics.dt", format!("must be positive, got {}", n.dt)));
        }
        if !(n.t_final > n.dt) {
            return Err(invalid("numerics.t_final", format!("must exceed dt, got {}", n.t_final)));
        }
        step_count(n.t_final, n.dt)?;
        if !(n.epsilon > 0.0 && n.epsilon.is_finite()) {
            return Err(invalid("numerics.epsilon", format!("must be positive, got {}", n.epsilon)));
        }
        if n.n_s < 2 * g.dimension + 1 {
            return Err(invalid(
                "numerics.n_s",
                format!("need at least {} nodes per stencil, got {}", 2 * g.dimension + 1, n.n_s),
            ));
        }
        if n.max_iters == 0 {
            return Err(invalid("numerics.max_iters", "must be at least 1"));
        }
        if n.max_halvings > 5 {
            return Err(invalid("numerics.max_halvings", format!("at most 5, got {}", n.max_halvings)));
        }
        if n.output_stride == 0 {
            return Err(invalid("numerics.output_stride", "must be at least 1"));
        }
        if n.flux_layers == 0 {
            return Err(invalid("numerics.flux_layers", "must be at least 1"));
        }
        if n.axisymmetric && g.dimension != 2 {
            return Err(invalid("numerics.axisymmetric", "only available in 2-D"));
        }
        self.controls::<f64>().validate()?;

        if let Some(t) = self.outputs.profile_times.iter().find(|t| !(**t >= 0.0 && **t <= n.t_final * (1.0 + 1e-12))) {
            return Err(invalid("outputs.profile_times", format!("{t} lies outside [0, t_final]")));
        }

        self.soil_model::<f64>()?;
        if let UptakeConfig::Feddes { roots, .. } = &self.uptake {
            if !(roots.depth > 0.0) {
                return Err(invalid("uptake.roots.depth", "must be positive"));
            }
            if (roots.profile == RootShape::Tabulated) != roots.table.is_some() {
                return Err(invalid("uptake.roots.table", "required for, and only for, the tabulated profile"));
            }
        }
        self.uptake_params::<f64>()?;

        if self.boundaries.segments.is_empty() {
            return Err(invalid("boundaries.segments", "at least one segment required"));
        }
        for (k, s) in self.boundaries.segments.iter().enumerate() {
            self.segment_spec::<f64>(k, s)?;
        }
        if let InitialConfig::Tabulated { points, .. } = &self.initial {
            if points.is_empty() || points.windows(2).any(|w| !(w[0][0] < w[1][0])) {
                return Err(invalid("initial.points", "need rows with strictly increasing z"));
            }
        }
        Ok(())
    }

    pub fn controls<T: Real>(&self) -> PicardControls<T> {
        let n = &self.numerics;
        PicardControls {
            tol: T::lit(n.tol),
            max_iters: n.max_iters,
            norm: n.norm,
            initial_guess: n.initial_guess,
            max_halvings: n.max_halvings,
        }
    }

    pub fn soil_model<T: Real>(&self) -> Result<SoilModel<T>, ConfigError> {
        let model = match self.soil {
            SoilConfig::VanGenuchten { theta_r, theta_s, alpha, n, m, k_s, .. } => {
                let (tr, ts, a, nn, ks) = (T::lit(theta_r), T::lit(theta_s), T::lit(alpha), T::lit(n), T::lit(k_s));
                // Quoted m values are rounded; accept them close to 1 - 1/n.
                if let Some(m) = m {
                    let exact = 1.0 - 1.0 / n;
                    if !((m - exact).abs() <= 5e-5) {
                        return Err(invalid("soil.m", format!("must equal 1 - 1/n = {exact:.6}, got {m}")));
                    }
                }
                let vg = VanGenuchten::new(tr, ts, a, nn, ks);
                SoilModel::VanGenuchten(vg.map_err(|e| prefixed("soil", e))?)
            }
            SoilConfig::Gardner { theta_r, theta_s, alpha, k_s, .. } => SoilModel::Gardner(
                Gardner::new(T::lit(theta_r), T::lit(theta_s), T::lit(alpha), T::lit(k_s))
                    .map_err(|e| prefixed("soil", e))?,
            ),
        };
        Ok(model)
    }

    fn top(&self) -> f64 {
        *self.geometry.extents.last().unwrap_or(&0.0)
    }

    fn uptake_params<T: Real>(&self) -> Result<Option<UptakeParams<T>>, ConfigError> {
        let p = match self.uptake {
            UptakeConfig::None => None,
            UptakeConfig::Stepwise { r0, l1, l, .. } => {
                let s = SimplifiedSink::Stepwise { r0: T::lit(r0), l1: T::lit(l1), l: T::lit(l) };
                s.validate().map_err(|e| prefixed("uptake", e))?;
                Some(UptakeParams::Simplified(s))
            }
            UptakeConfig::Exponential { r0, beta, .. } => {
                let s = SimplifiedSink::Exponential { r0: T::lit(r0), beta: T::lit(beta), top: T::lit(self.top()) };
                s.validate().map_err(|e| prefixed("uptake", e))?;
                Some(UptakeParams::Simplified(s))
            }
            UptakeConfig::Feddes { psi1, psi2, psi3_low, psi3_high, psi4, r2_low, r2_high, tp, psi3, .. } => {
                let params = FeddesParams {
                    psi1: T::lit(psi1),
                    psi2: T::lit(psi2),
                    psi3_low: T::lit(psi3_low),
                    psi3_high: T::lit(psi3_high),
                    psi4: T::lit(psi4),
                    r2_low: T::lit(r2_low),
                    r2_high: T::lit(r2_high),
                    tp: T::lit(tp),
                };
                params.validate().map_err(|e| prefixed("uptake", e))?;
                let psi3 = psi3.map(T::lit).unwrap_or_else(|| interpolate_psi3(&params));
                Some(UptakeParams::Feddes(params, psi3))
            }
        };
        Ok(p)
    }

    fn segment_spec<T: Real>(&self, k: usize, s: &SegmentConfig) -> Result<SegmentSpec<T>, ConfigError> {
        let dim = self.geometry.dimension;
        let field = format!("boundaries.segments[{k}]");
        let face = Face::from_name(&s.face, dim)
            .ok_or_else(|| invalid(format!("{field}.face"), format!("unknown face `{}` in {dim}-D", s.face)))?;
        let range = match &s.range {
            None => None,
            Some(r) => {
                let axis = match (r.axis.as_str(), dim) {
                    ("x", 2 | 3) => 0,
                    ("y", 3) => 1,
                    ("z", _) => dim - 1,
                    _ => return Err(invalid(format!("{field}.range.axis"), format!("unknown axis `{}`", r.axis))),
                };
                if axis == face.axis {
                    return Err(invalid(format!("{field}.range.axis"), "must be tangential to the face"));
                }
                if !(r.min <= r.max) {
                    return Err(invalid(format!("{field}.range"), "min must not exceed max"));
                }
                Some((axis, T::lit(r.min), T::lit(r.max)))
            }
        };
        let kind = match s.condition {
            ConditionConfig::Dirichlet { .. } => SegmentKind::Dirichlet,
            _ => SegmentKind::Neumann,
        };
        if matches!(s.condition, ConditionConfig::FreeDrainage) && face.axis + 1 != dim {
            return Err(invalid(format!("{field}.condition"), "free drainage applies to top or bottom faces"));
        }
        Ok(SegmentSpec { face, range, kind })
    }
}

fn prefixed(section: &str, e: ParamError) -> ConfigError {
    invalid(format!("{section}.{}", e.field), e.message)
}

fn step_count(t_final: f64, dt: f64) -> Result<usize, ConfigError> {
    let n = (t_final / dt).round();
    if (n * dt - t_final).abs() > 1e-9 * t_final {
        return Err(invalid("numerics.t_final", format!("must be a whole number of steps of {dt}")));
    }
    Ok(n as usize)
}

enum UptakeParams<T> {
    Simplified(SimplifiedSink<T>),
    Feddes(FeddesParams<T>, T),
}

/// A config turned into solver objects.
#[derive(Debug, Clone)]
pub struct Scenario<T> {
    pub name: String,
    pub problem: Problem<T>,
    pub psi0: Vec<T>,
    pub scheme: Scheme,
    pub dt: T,
    pub steps: usize,
    pub controls: PicardControls<T>,
    pub output_stride: usize,
    /// Step indices at which profiles are written, ascending and unique.
    pub profile_steps: Vec<usize>,
}

pub fn build_scenario<T: Real>(cfg: &ScenarioConfig) -> Result<Scenario<T>, RunError> {
    let cfg = cfg.normalized();
    cfg.validate()?;
    let g = &cfg.geometry;
    let extents: Vec<T> = g.extents.iter().map(|&e| T::lit(e)).collect();
    let specs = cfg
        .boundaries
        .segments
        .iter()
        .enumerate()
        .map(|(k, s)| cfg.segment_spec::<T>(k, s))
        .collect::<Result<Vec<_>, _>>()?;
    let cloud = NodeCloud::tensor_grid(&extents, &g.counts, &specs)?;

    let stencils = build_stencils(&cloud, cfg.numerics.n_s)?;
    let kernel = RbfKernel::new(T::lit(cfg.numerics.epsilon))?;
    let system =
        StencilSystem::with_flux_layers(kernel, &cloud, stencils, cfg.numerics.axisymmetric, cfg.numerics.flux_layers)?;
    let model = cfg.soil_model::<T>()?;
    let weights = cloud.quadrature_weights();

    let uptake = match (cfg.uptake_params::<T>()?, &cfg.uptake) {
        (None, _) => Uptake::None,
        (Some(UptakeParams::Simplified(s)), _) => Uptake::Simplified(s),
        (Some(UptakeParams::Feddes(params, psi3)), UptakeConfig::Feddes { roots, .. }) => {
            let profile = match roots.profile {
                RootShape::Uniform => RootProfile::Uniform,
                RootShape::Linear => RootProfile::Linear,
                RootShape::Tabulated => {
                    RootProfile::Tabulated(roots.table.iter().flatten().map(|&[d, b]| (T::lit(d), T::lit(b))).collect())
                }
            };
            let depth: Vec<T> = (0..cloud.len()).map(|i| cloud.depth(i)).collect();
            let roots = RootDistribution::new(profile, T::lit(roots.depth), &depth, &weights)
                .map_err(|e| prefixed("uptake.roots", e))?;
            Uptake::Feddes { params, roots, psi3 }
        }
        (Some(UptakeParams::Feddes(..)), _) => unreachable!("Feddes parameters come from a Feddes section"),
    };

    let bc = BoundaryData {
        segments: cfg
            .boundaries
            .segments
            .iter()
            .map(|s| match s.condition {
                ConditionConfig::Dirichlet { psi } => BoundaryCondition::Dirichlet(T::lit(psi)),
                ConditionConfig::Flux { q } => BoundaryCondition::Flux(FluxSpec::Constant(T::lit(q))),
                ConditionConfig::ExponentialFlux { q0, delta, k1 } => BoundaryCondition::Flux(FluxSpec::Exponential {
                    q0: T::lit(q0),
                    delta: T::lit(delta),
                    k1: T::lit(k1),
                }),
                ConditionConfig::FreeDrainage => BoundaryCondition::FreeDrainage,
            })
            .collect(),
    };
    let problem = Problem::new(cloud, system, model, uptake, bc).map_err(ConfigError::from)?;
    let psi0 = initial_profile(&cfg, &problem)?;

    let steps = step_count(cfg.numerics.t_final, cfg.numerics.dt)?;
    let mut profile_steps: Vec<usize> =
        cfg.outputs.profile_times.iter().map(|&t| ((t / cfg.numerics.dt).round() as usize).min(steps)).collect();
    profile_steps.sort_unstable();
    profile_steps.dedup();

    Ok(Scenario {
        name: cfg.name.clone(),
        problem,
        psi0,
        scheme: cfg.numerics.scheme,
        dt: T::lit(cfg.numerics.dt),
        steps,
        controls: cfg.controls(),
        output_stride: cfg.numerics.output_stride,
        profile_steps,
    })
}

fn initial_profile<T: Real>(cfg: &ScenarioConfig, problem: &Problem<T>) -> Result<Vec<T>, ConfigError> {
    let cloud = &problem.cloud;
    let zs: Vec<f64> = (0..cloud.len()).map(|i| cloud.z(i).as_f64()).collect();
    let psi: Vec<f64> = match &cfg.initial {
        InitialConfig::Constant { psi, .. } => vec![*psi; zs.len()],
        InitialConfig::Hydrostatic { psi_bottom, .. } => zs.iter().map(|z| psi_bottom - z).collect(),
        InitialConfig::Tabulated { points, .. } => zs.iter().map(|&z| interp_rows(points, z)).collect(),
        InitialConfig::SteadyFlux { top_flux, psi_bottom, .. } => {
            let sink = match &problem.uptake {
                Uptake::None => None,
                Uptake::Simplified(s) => Some(*s),
                Uptake::Feddes { .. } => {
                    return Err(invalid("initial", "steady_flux needs a simplified sink or none"));
                }
            };
            let v = cloud.vertical_axis();
            let nz = cloud.counts()[v];
            let h = cloud.spacing()[v].as_f64();
            let column = steady_column(&problem.model, sink.as_ref(), *top_flux, *psi_bottom, nz, h, cfg.top())?;
            (0..cloud.len()).map(|i| column[cloud.grid_index(i)[v]]).collect()
        }
    };
    Ok(psi.into_iter().map(T::lit).collect())
}

fn interp_rows(points: &[[f64; 2]], z: f64) -> f64 {
    let first = points[0];
    let last = points[points.len() - 1];
    if z <= first[0] {
        return first[1];
    }
    if z >= last[0] {
        return last[1];
    }
    let k = points.partition_point(|p| p[0] <= z);
    let (a, b) = (points[k - 1], points[k]);
    a[1] + (b[1] - a[1]) * (z - a[0]) / (b[0] - a[0])
}

/// Integrates `ψ' = −1 − q_z(z)/K(ψ)` upward from the bottom with RK4,
/// where `q_z(z) = top_flux + ∫_z^top s`.
fn steady_column<T: Real>(
    model: &SoilModel<T>,
    sink: Option<&SimplifiedSink<T>>,
    top_flux: f64,
    psi_bottom: f64,
    nz: usize,
    h: f64,
    top: f64,
) -> Result<Vec<f64>, ConfigError> {
    const SUB: usize = 16;
    let q = |z: f64| top_flux + sink.map_or(0.0, |s| s.integral_above(T::lit(z), T::lit(top)).as_f64());
    let f = |z: f64, psi: f64| -1.0 - q(z) / model.conductivity(T::lit(psi)).as_f64();
    let mut out = Vec::with_capacity(nz);
    let mut psi = psi_bottom;
    out.push(psi);
    let dz = h / SUB as f64;
    for k in 1..nz {
        for j in 0..SUB {
            let z = (k - 1) as f64 * h + j as f64 * dz;
            let k1 = f(z, psi);
            let k2 = f(z + 0.5 * dz, psi + 0.5 * dz * k1);
            let k3 = f(z + 0.5 * dz, psi + 0.5 * dz * k2);
            let k4 = f(z + dz, psi + dz * k3);
            psi += dz / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        if !psi.is_finite() {
            return Err(invalid("initial.top_flux", "no steady profile carries this flux"));
        }
        out.push(psi);
    }
    Ok(out)
}

/// Nodal fields at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSnapshot {
    pub t: f64,
    pub psi: Vec<f64>,
    pub theta: Vec<f64>,
    pub sink: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub name: String,
    pub dim: usize,
    /// Node coordinates, vertical last.
    pub coords: Vec<Vec<f64>>,
    pub profiles: Vec<ProfileSnapshot>,
    pub series: FluxSeries,
    pub final_psi: Vec<f64>,
    pub final_theta: Vec<f64>,
    pub t_reached: f64,
    pub steps_done: usize,
    pub picard_total: usize,
    /// Largest mass-balance residual over all committed steps.
    pub max_balance_residual: f64,
    pub wall_seconds: f64,
}

/// A run that stopped early, with what was recorded before the failure.
#[derive(Debug)]
pub struct RunFailure {
    pub partial: RunResult,
    pub error: RunError,
}

fn fields<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

struct Recorder<'a, T> {
    problem: &'a Problem<T>,
    tracker: MassTracker,
    result: RunResult,
}

impl<'a, T: Real> Recorder<'a, T> {
    fn balance(&self, psi: &[T], theta: &[T], t: T) -> (f64, f64, f64) {
        let p = self.problem;
        let mass = total_mass(theta, &p.weights).map(|m| m.as_f64()).unwrap_or(f64::NAN);
        let inflow = net_inflow(p, psi, t).as_f64();
        let s = p.uptake.sink(&p.cloud, psi);
        let sink = s.iter().zip(&p.weights).map(|(a, w)| a.as_f64() * w.as_f64()).sum();
        (mass, inflow, sink)
    }

    fn sample(&self, psi: &[T], t: T, mass: f64, iters: usize) -> FluxSample {
        let p = self.problem;
        let v = p.cloud.vertical_axis();
        let (tp, ta) = p.uptake.transpiration(&p.cloud, psi, &p.weights);
        FluxSample {
            t: t.as_f64(),
            mass,
            top_flux: boundary_flux(&p.cloud, &p.model, psi, Face::new(v, Side::High)).as_f64(),
            bottom_flux: boundary_flux(&p.cloud, &p.model, psi, Face::new(v, Side::Low)).as_f64(),
            tp: tp.as_f64(),
            ta: ta.as_f64(),
            picard_iters: iters,
            balance_residual: self.tracker.report().balance_residual,
        }
    }

    fn profile(&mut self, state: &SimulationState<T>) {
        let p = self.problem;
        self.result.profiles.push(ProfileSnapshot {
            t: state.t.as_f64(),
            psi: fields(&state.psi_n),
            theta: fields(&state.theta_n),
            sink: fields(&p.uptake.sink(&p.cloud, &state.psi_n)),
        });
    }
}

/// Runs a built scenario to its final time.
pub fn simulate<T: Real>(sc: &Scenario<T>) -> Result<RunResult, Box<RunFailure>> {
    let start = Instant::now();
    let p = &sc.problem;
    let mut state = SimulationState::new(p, sc.psi0.clone(), T::zero());
    let dim = p.cloud.dim();
    let coords = (0..p.len()).map(|i| fields(p.cloud.point(i))).collect();

    let mut rec = Recorder {
        problem: p,
        tracker: MassTracker::new(0.0, 0.0, 0.0, 0.0),
        result: RunResult {
            name: sc.name.clone(),
            dim,
            coords,
            profiles: Vec::new(),
            series: FluxSeries::default(),
            final_psi: Vec::new(),
            final_theta: Vec::new(),
            t_reached: 0.0,
            steps_done: 0,
            picard_total: 0,
            max_balance_residual: 0.0,
            wall_seconds: 0.0,
        },
    };
    let (m0, in0, s0) = rec.balance(&state.psi_n, &state.theta_n, state.t);
    rec.tracker = MassTracker::new(0.0, m0, in0, s0);
    let first = rec.sample(&state.psi_n, state.t, m0, 0);
    rec.result.series.samples.push(first);
    if sc.profile_steps.first() == Some(&0) {
        rec.profile(&state);
    }

    let mut solver = SparseSolver::new();
    let mut failure = None;
    for n in 1..=sc.steps {
        let report = match advance_with(sc.scheme, p, &mut state, sc.dt, &sc.controls, &mut solver) {
            Ok(r) => r,
            Err(source) => {
                failure = Some(RunError::Step { step: n, t: state.t.as_f64(), source });
                break;
            }
        };
        // Pin the clock to n·dt so long runs do not drift.
        state.t = T::lit(n as f64 * sc.dt.as_f64());
        if let Some(i) = state.psi_n.iter().position(|v| !v.is_finite()) {
            let source = StepError::NonFinite { node: i, t: state.t.as_f64() };
            failure = Some(RunError::Step { step: n, t: state.t.as_f64(), source });
            break;
        }
        rec.result.picard_total += report.iterations;
        rec.result.steps_done = n;
        let (m, inflow, sink) = rec.balance(&state.psi_n, &state.theta_n, state.t);
        let r = rec.tracker.record(state.t.as_f64(), m, inflow, sink).balance_residual;
        rec.result.max_balance_residual = rec.result.max_balance_residual.max(r);
        if n % sc.output_stride == 0 || n == sc.steps {
            let s = rec.sample(&state.psi_n, state.t, m, report.iterations);
            rec.result.series.samples.push(s);
        }
        if sc.profile_steps.binary_search(&n).is_ok() {
            rec.profile(&state);
        }
    }

    let mut result = rec.result;
    result.final_psi = fields(&state.psi_n);
    result.final_theta = fields(&state.theta_n);
    result.t_reached = state.t.as_f64();
    result.wall_seconds = start.elapsed().as_secs_f64();
    match failure {
        None => Ok(result),
        Some(error) => Err(Box::new(RunFailure { partial: result, error })),
    }
}

/// Builds and runs a config in `f64`, writing outputs when `out_dir` is set.
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: Option<&Path>) -> Result<RunResult, RunError> {
    let sc = build_scenario::<f64>(cfg)?;
    let outcome = simulate(&sc);
    let (result, error) = match outcome {
        Ok(r) => (r, None),
        Err(f) => (f.partial, Some(f.error)),
    };
    if let Some(dir) = out_dir {
        write_outputs(dir, cfg, &result, error.as_ref())?;
    }
    match error {
        None => Ok(result),
        Some(e) => Err(e),
    }
}

/// Output directory for a config: `--out-dir` wins over `outputs.directory`.
pub fn output_dir(cfg: &ScenarioConfig, flag: Option<&Path>) -> Option<PathBuf> {
    flag.map(Path::to_path_buf).or_else(|| cfg.outputs.directory.as_ref().map(PathBuf::from))
}

/// Full-precision number: 17 significant digits.
fn num(out: &mut String, x: f64) {
    let _ = write!(out, "{x:.16e}");
}

pub fn profiles_csv(r: &RunResult) -> String {
    let mut s = String::from("t,");
    match r.dim {
        1 => {}
        2 => s.push_str("x,"),
        _ => s.push_str("x,y,"),
    }
    s.push_str("z,psi,theta,sink\n");
    for p in &r.profiles {
        for (i, c) in r.coords.iter().enumerate() {
            num(&mut s, p.t);
            for &x in c {
                s.push(',');
                num(&mut s, x);
            }
            for v in [p.psi[i], p.theta[i], p.sink[i]] {
                s.push(',');
                num(&mut s, v);
            }
            s.push('\n');
        }
    }
    s
}

pub fn diagnostics_csv(r: &RunResult) -> String {
    let mut s = String::from("t,mass,top_flux,bottom_flux,Tp,Ta,picard_iters,balance_residual\n");
    for d in &r.series.samples {
        for v in [d.t, d.mass, d.top_flux, d.bottom_flux, d.tp, d.ta] {
            num(&mut s, v);
            s.push(',');
        }
        let _ = write!(s, "{},", d.picard_iters);
        num(&mut s, d.balance_residual);
        s.push('\n');
    }
    s
}

fn failure_row(e: &RunError) -> String {
    let msg = e.to_string().replace('\n', " ");
    format!("# FAILED: {msg}\n")
}

fn write_file(path: &Path, body: &str) -> Result<(), RunError> {
    let mut f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(body.as_bytes()).and_then(|_| f.flush()).map_err(|e| io_err(path, e))
}

/// Writes `profiles.csv`, `diagnostics.csv` and `meta.json`.
pub fn write_outputs(
    dir: &Path,
    cfg: &ScenarioConfig,
    r: &RunResult,
    error: Option<&RunError>,
) -> Result<(), RunError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut profiles = profiles_csv(r);
    let mut diagnostics = diagnostics_csv(r);
    if let Some(e) = error {
        profiles.push_str(&failure_row(e));
        diagnostics.push_str(&failure_row(e));
    }
    write_file(&dir.join("profiles.csv"), &profiles)?;
    write_file(&dir.join("diagnostics.csv"), &diagnostics)?;
    let meta = serde_json::json!({
        "name": r.name,
        "status": if error.is_some() { "failed" } else { "ok" },
        "error": error.map(|e| e.to_string()),
        "version": env!("CARGO_PKG_VERSION"),
        "scalar": "f64",
        "threads": rayon::current_num_threads(),
        "steps": r.steps_done,
        "t_reached_h": r.t_reached,
        "picard_iterations": r.picard_total,
        "max_balance_residual": r.max_balance_residual,
        "wall_seconds": r.wall_seconds,
        "config": cfg.normalized(),
    });
    let text = serde_json::to_string_pretty(&meta).expect("manifest serializes") + "\n";
    write_file(&dir.join("meta.json"), &text)
}

/// Final-time fields from a refined run, sampled back onto the base grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub psi: Vec<f64>,
    pub theta: Vec<f64>,
    pub dt: f64,
    pub refine_time: usize,
    pub refine_space: usize,
}

/// Runs `cfg` with `dt / refine_time` and `refine_space` times more grid
/// intervals per axis. Refined grids nest the base grid, so sampling back is
/// plain injection.
pub fn make_reference(cfg: &ScenarioConfig, refine_time: usize, refine_space: usize) -> Result<Reference, RunError> {
    if refine_time == 0 || refine_space == 0 {
        return Err(invalid("refinement", "factors must be at least 1").into());
    }
    let base = cfg.normalized();
    base.validate()?;
    let mut fine = base.clone();
    fine.numerics.dt = base.numerics.dt / refine_time as f64;
    fine.geometry.counts = base.geometry.counts.iter().map(|&n| (n - 1) * refine_space + 1).collect();
    fine.outputs.profile_times.clear();
    fine.numerics.output_stride = usize::MAX;
    let sc = build_scenario::<f64>(&fine)?;
    let r = simulate(&sc).map_err(|f| f.error)?;

    let counts = &base.geometry.counts;
    let fine_counts = &fine.geometry.counts;
    let total: usize = counts.iter().product();
    let mut idx = Vec::with_capacity(total);
    for lin in 0..total {
        let mut rem = lin;
        let mut fine_lin = 0;
        let mut stride = 1;
        for (a, &n) in counts.iter().enumerate() {
            let g = rem % n;
            rem /= n;
            fine_lin += g * refine_space * stride;
            stride *= fine_counts[a];
        }
        idx.push(fine_lin);
    }
    Ok(Reference {
        psi: idx.iter().map(|&i| r.final_psi[i]).collect(),
        theta: idx.iter().map(|&i| r.final_theta[i]).collect(),
        dt: fine.numerics.dt,
        refine_time,
        refine_space,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub scheme: Scheme,
    pub dt: f64,
    /// RMSE of θ against the reference at the final time.
    pub rmse: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub rows: Vec<StudyRow>,
    /// Fitted order per scheme.
    pub orders: Vec<(Scheme, f64)>,
    pub reference_dt: f64,
    /// The reference every row was measured against.
    pub reference: Reference,
}

impl StudyReport {
    pub fn order(&self, scheme: Scheme) -> Option<f64> {
        self.orders.iter().find(|(s, _)| *s == scheme).map(|(_, o)| *o)
    }

    /// `scheme,dt,rmse,order,wall_seconds`, one row per run.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("scheme,dt,rmse,order,wall_seconds\n");
        for r in &self.rows {
            let name = match r.scheme {
                Scheme::Bdf1 => "bdf1",
                Scheme::Bdf2 => "bdf2",
            };
            s.push_str(name);
            for v in [r.dt, r.rmse, self.order(r.scheme).unwrap_or(f64::NAN), r.wall_seconds] {
                s.push(',');
                num(&mut s, v);
            }
            s.push('\n');
        }
        s
    }
}

/// Runs every `(scheme, dt)` pair and fits the order per scheme against a
/// BDF2 reference computed with `min(dts) / reference_factor`.
pub fn convergence_study(
    cfg: &ScenarioConfig,
    dts: &[f64],
    schemes: &[Scheme],
    reference_factor: usize,
) -> Result<StudyReport, RunError> {
    if dts.len() < 3 {
        return Err(invalid("dts", format!("need at least 3 time steps, got {}", dts.len())).into());
    }
    if schemes.is_empty() {
        return Err(invalid("schemes", "need at least one scheme").into());
    }
    let mut dts = dts.to_vec();
    dts.sort_by(|a, b| b.total_cmp(a));
    if dts.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(invalid("dts", "time steps must be distinct").into());
    }
    let base = cfg.normalized();
    let quiet = |dt: f64, scheme: Scheme| {
        let mut c = base.clone();
        c.numerics.dt = dt;
        c.numerics.scheme = scheme;
        c.numerics.output_stride = usize::MAX;
        c.outputs.profile_times.clear();
        c
    };
    let dt_min = *dts.last().expect("non-empty");
    let reference = make_reference(&quiet(dt_min, Scheme::Bdf2), reference_factor, 1)?;

    let mut rows = Vec::new();
    let mut orders = Vec::new();
    for &scheme in schemes {
        let mut errs = Vec::with_capacity(dts.len());
        for &dt in &dts {
            let sc = build_scenario::<f64>(&quiet(dt, scheme))?;
            let r = simulate(&sc).map_err(|f| f.error)?;
            let e = rmse(&r.final_theta, &reference.theta)?;
            errs.push(e);
            rows.push(StudyRow { scheme, dt, rmse: e, wall_seconds: r.wall_seconds });
        }
        orders.push((scheme, estimate_order(&errs, &dts)?));
    }
    Ok(StudyReport { rows, orders, reference_dt: reference.dt, reference })
}

/// Shipped scenario files.
pub const PRESETS: &[(&str, &str)] = &[
    ("test1_constant_flux", include_str!("../presets/test1_constant_flux.json")),
    ("test1_constant_flux_alpha01", include_str!("../presets/test1_constant_flux_alpha01.json")),
    ("test1_varying_flux", include_str!("../presets/test1_varying_flux.json")),
    ("test1_varying_flux_alpha01", include_str!("../presets/test1_varying_flux_alpha01.json")),
    ("test2_pasture", include_str!("../presets/test2_pasture.json")),
    ("test2_wheat", include_str!("../presets/test2_wheat.json")),
    ("test3", include_str!("../presets/test3.json")),
    ("hydrostatic_loam", include_str!("../presets/hydrostatic_loam.json")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

/// Raw JSON of a preset, as shipped.
pub fn preset_source(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn load_preset(name: &str) -> Result<ScenarioConfig, ConfigError> {
    let src = preset_source(name).ok_or_else(|| invalid("preset", format!("unknown preset `{name}`")))?;
    parse_config(src)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_factors() {
        let u = Units { length: LengthUnit::Cm, time: TimeUnit::Day }.conv();
        assert!((u.speed(0.5) - 0.005 / 24.0).abs() < 1e-18);
        assert!((u.per_len(0.1) - 10.0).abs() < 1e-12);
        assert_eq!(u.time(2.0), 48.0);
    }

    #[test]
    fn every_preset_validates_and_round_trips() {
        for name in preset_names() {
            let c = load_preset(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            let back = parse_config(&write_config(&c)).unwrap();
            assert_eq!(back, c, "{name}");
        }
    }

    #[test]
    fn pasture_table_values_after_conversion() {
        let c = load_preset("test2_pasture").unwrap();
        let UptakeConfig::Feddes { psi1, psi2, psi4, tp, .. } = c.uptake else { panic!("feddes expected") };
        assert_eq!((psi1, psi2, psi4), (-0.1, -0.25, -80.0));
        assert!((tp - 0.004 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_key_is_named() {
        let src = preset_source("test1_constant_flux").unwrap().replacen("\"n_s\"", "\"n_ss\"", 1);
        let e = parse_config(&src).unwrap_err();
        assert!(matches!(e, ConfigError::Parse { .. }));
        assert!(e.to_string().contains("n_ss"), "{e}");
    }

    #[test]
    fn nonpositive_dt_is_rejected() {
        let mut c = load_preset("test1_constant_flux").unwrap();
        c.numerics.dt = 0.0;
        let e = c.validate().unwrap_err();
        assert!(matches!(&e, ConfigError::Invalid { field, .. } if field == "numerics.dt"), "{e}");
    }

    #[test]
    fn tabulated_interpolation() {
        let pts = [[0.0, -1.0], [1.0, -2.0], [3.0, -2.0]];
        assert_eq!(interp_rows(&pts, -1.0), -1.0);
        assert_eq!(interp_rows(&pts, 0.5), -1.5);
        assert_eq!(interp_rows(&pts, 2.0), -2.0);
        assert_eq!(interp_rows(&pts, 9.0), -2.0);
    }

    #[test]
    fn steady_column_without_flux_is_hydrostatic() {
        let m = SoilModel::Gardner(Gardner::<f64>::new(0.2, 0.45, 1.0, 0.01).unwrap());
        let col = steady_column(&m, None, 0.0, 0.0, 11, 0.1, 1.0).unwrap();
        for (k, p) in col.iter().enumerate() {
            assert!((p + 0.1 * k as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn steady_column_carries_its_flux() {
        // Central differences of the profile must give back the imposed flux.
        let m = SoilModel::Gardner(Gardner::<f64>::new(0.2, 0.45, 1.0, 0.01).unwrap());
        let h = 0.01;
        let col = steady_column(&m, None, -0.004, 0.0, 101, h, 1.0).unwrap();
        for k in 1..100 {
            let dpsi = (col[k + 1] - col[k - 1]) / (2.0 * h);
            let q = -m.conductivity(col[k]) * (dpsi + 1.0);
            assert!((q + 0.004).abs() < 1e-6, "{k}: {q}");
        }
    }

    #[test]
    fn study_needs_three_steps() {
        let c = load_preset("test1_constant_flux").unwrap();
        let e = convergence_study(&c, &[0.1], &[Scheme::Bdf2], 16).unwrap_err();
        assert!(e.is_validation());
    }
}
