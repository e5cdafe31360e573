//! JSON run configuration and the report document written for each solve.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::{BoundingBox, Domain, DomainSpec, Point};
use crate::operator::{OperatorDescriptor, OperatorTau};
use crate::solver::{FlowParams, FlowReport, GridSpec, InitialData};
use crate::{Error, Result};

/// An angle written either as a number of radians or as an expression such
/// as `"pi/4"`, `"3pi/8"` or `"0.5"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Angle {
    Radians(f64),
    Expr(String),
}

impl Angle {
    pub fn radians(&self) -> Result<f64> {
        match self {
            Angle::Radians(r) => Ok(*r),
            Angle::Expr(s) => parse_angle(s),
        }
    }
}

/// Parses `x`, `pi`, `k·pi`, `pi/d` or `k·pi/d` (also with `π` and `*`).
///
/// Divisions by powers of two are exact, so `"pi/4"` and `"pi/2"` hit the
/// branch points of the operator family exactly.
pub fn parse_angle(text: &str) -> Result<f64> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let s = s.to_ascii_lowercase().replace('π', "pi");
    let bad = || Error::Config(format!("cannot parse angle {text:?}"));
    let Some(at) = s.find("pi") else {
        return s.parse::<f64>().map_err(|_| bad());
    };
    let coef = s[..at].trim_end_matches('*');
    let coef = if coef.is_empty() {
        1.0
    } else {
        coef.parse::<f64>().map_err(|_| bad())?
    };
    let rest = &s[at + 2..];
    let denom = if rest.is_empty() {
        1.0
    } else {
        rest.strip_prefix('/')
            .ok_or_else(bad)?
            .parse::<f64>()
            .map_err(|_| bad())?
    };
    Ok(coef * PI / denom)
}

/// Grid spacing (directly or as a cell count across Ω) and an optional box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundingBox>,
}

impl GridConfig {
    pub fn cells(cells: usize) -> Self {
        Self {
            h: None,
            cells: Some(cells),
            bounds: None,
        }
    }

    pub fn build(&self, omega: &Domain) -> Result<GridSpec> {
        match (self.h, self.cells) {
            (Some(h), None) => GridSpec::new(omega, h, self.bounds),
            (None, Some(cells)) if cells >= 4 => {
                let b = self.bounds.unwrap_or_else(|| omega.bounding_box());
                let span = (b.max[0] - b.min[0]).max(b.max[1] - b.min[1]);
                GridSpec::new(omega, span / cells as f64, Some(b))
            }
            (None, Some(cells)) => Err(Error::Config(format!("grid.cells = {cells} is too small"))),
            _ => Err(Error::Config("grid needs exactly one of `h` or `cells`".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialMode {
    #[default]
    Auto,
    Quadratic,
    Radial,
    Bump,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialDataConfig {
    #[serde(default)]
    pub mode: InitialMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub M: Option<[[f64; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
}

/// Radial profile weight used when `alpha` is not given.
pub const DEFAULT_RADIAL_ALPHA: f64 = 0.5;
/// Bump height used when `amplitude` is not given.
pub const DEFAULT_BUMP_AMPLITUDE: f64 = 0.05;

impl InitialDataConfig {
    pub fn to_initial_data(&self) -> Result<InitialData> {
        match self.mode {
            InitialMode::Auto => Ok(InitialData::Auto),
            InitialMode::Quadratic => {
                let m = self.M.ok_or_else(|| Error::Config("quadratic u0 needs `M`".into()))?;
                Ok(InitialData::Quadratic {
                    m,
                    b: self.b.unwrap_or([0.0, 0.0]),
                })
            }
            InitialMode::Radial => Ok(InitialData::Radial {
                alpha: self.alpha.unwrap_or(DEFAULT_RADIAL_ALPHA),
            }),
            InitialMode::Bump => Ok(InitialData::Bump {
                amplitude: self.amplitude.unwrap_or(DEFAULT_BUMP_AMPLITUDE),
            }),
        }
    }
}

/// Field dumps: `every = 0` writes only the final state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub fields: bool,
    #[serde(default)]
    pub every: usize,
}

fn default_cfl() -> f64 {
    FlowParams::default().cfl
}
fn default_tol_osc() -> f64 {
    FlowParams::default().tol_osc
}
fn default_tol_bc() -> f64 {
    FlowParams::default().tol_bc
}
fn default_max_steps() -> usize {
    FlowParams::default().max_steps
}
fn default_max_newton() -> usize {
    FlowParams::default().max_newton
}
fn default_max_sweeps() -> usize {
    FlowParams::default().max_sweeps
}
fn default_image_samples() -> usize {
    FlowParams::default().image_samples
}

/// Everything needed to reproduce one solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub tau: Angle,
    pub domain: DomainSpec,
    pub domain_tilde: DomainSpec,
    pub grid: GridConfig,
    #[serde(default)]
    pub u0: InitialDataConfig,
    #[serde(default = "default_tol_osc")]
    pub tol_osc: f64,
    #[serde(default = "default_tol_bc")]
    pub tol_bc: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_max_newton")]
    pub max_newton: usize,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
    #[serde(default = "default_image_samples")]
    pub image_samples: usize,
    #[serde(default)]
    pub output: OutputConfig,
    /// Wall-clock time makes reports differ between identical runs, so it is
    /// left out unless asked for.
    #[serde(default)]
    pub record_wall_time: bool,
}

impl FlowConfig {
    /// A config with default numerics.
    pub fn new(tau: Angle, domain: DomainSpec, domain_tilde: DomainSpec, grid: GridConfig) -> Self {
        let p = FlowParams::default();
        Self {
            tau,
            domain,
            domain_tilde,
            grid,
            u0: InitialDataConfig::default(),
            tol_osc: p.tol_osc,
            tol_bc: p.tol_bc,
            cfl: p.cfl,
            max_steps: p.max_steps,
            max_newton: p.max_newton,
            max_sweeps: p.max_sweeps,
            image_samples: p.image_samples,
            output: OutputConfig::default(),
            record_wall_time: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn tau(&self) -> Result<f64> {
        self.tau.radians()
    }

    pub fn validate(&self) -> Result<()> {
        OperatorTau::new(self.tau()?).map_err(|e| Error::Config(e.to_string()))?;
        let positive = [("tol_osc", self.tol_osc), ("tol_bc", self.tol_bc), ("cfl", self.cfl)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_newton == 0 || self.max_sweeps == 0 {
            return Err(Error::Config("max_newton and max_sweeps must be positive".into()));
        }
        if self.image_samples < crate::geometry::MIN_BOUNDARY_SAMPLES {
            return Err(Error::Config("image_samples is too small".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> FlowParams {
        FlowParams {
            cfl: self.cfl,
            tol_osc: self.tol_osc,
            tol_bc: self.tol_bc,
            max_steps: self.max_steps,
            max_newton: self.max_newton,
            max_sweeps: self.max_sweeps,
            image_samples: self.image_samples,
        }
    }
}

/// The report written by `solve`: flow summary, operator, config echo and
/// crate version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDocument {
    pub version: String,
    pub operator: OperatorDescriptor,
    #[serde(flatten)]
    pub report: FlowReport,
    pub config: FlowConfig,
}

impl SolveDocument {
    pub fn new(config: &FlowConfig, operator: OperatorDescriptor, report: FlowReport) -> Self {
        Self {
            version: crate::VERSION.to_string(),
            operator,
            report,
            config: config.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
