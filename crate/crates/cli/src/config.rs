//! Run configuration: TOML schema, defaults and validation.

use membrane_core::mesh::{build_mesh, tag_refuges};
use membrane_core::{AxisBox, CoefficientField, Geometry, MassKind, ProblemSpec, RefugeRegion, Subdomain};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_N: usize = 256;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 500;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("schema error at line {line}, key `{key}`: {message}")]
    Schema { line: usize, key: String, message: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Model(#[from] membrane_core::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    Interval,
    Rectangle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub kind: GeometryKind,
    #[serde(default = "unit")]
    pub x: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<[f64; 2]>,
    pub gamma: f64,
}

fn unit() -> [f64; 2] {
    [0.0, 1.0]
}

/// A number, `{ outside, inside }` switching on refuge nodes, or a table in `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Constant(f64),
    Piecewise { outside: f64, inside: f64 },
    Tabulated { xs: Vec<f64>, values: Vec<f64> },
}

impl FieldSpec {
    fn field(&self) -> CoefficientField {
        match self {
            FieldSpec::Constant(c) => CoefficientField::Constant(*c),
            FieldSpec::Piecewise { outside, inside } => CoefficientField::PiecewiseOnRefuge {
                outside: *outside,
                inside: *inside,
            },
            FieldSpec::Tabulated { xs, values } => CoefficientField::Tabulated {
                xs: xs.clone(),
                values: values.clone(),
            },
        }
    }
}

fn one() -> FieldSpec {
    FieldSpec::Constant(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSection {
    pub mu: f64,
    pub p: f64,
    #[serde(default = "one")]
    pub m1: FieldSpec,
    #[serde(default = "one")]
    pub m2: FieldSpec,
    #[serde(default = "one")]
    pub a1: FieldSpec,
    #[serde(default = "one")]
    pub a2: FieldSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoxSpec {
    Interval([f64; 2]),
    Rectangle([[f64; 2]; 2]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefugeSection {
    pub subdomain: u8,
    #[serde(rename = "box")]
    pub bounds: BoxSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassSpec {
    #[default]
    Lumped,
    Consistent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    #[serde(default = "default_n")]
    pub n_per_side: usize,
    /// Cells in `y` for rectangles; defaults to `n_per_side`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ny: Option<usize>,
    #[serde(default)]
    pub mass: MassSpec,
}

fn default_n() -> usize {
    DEFAULT_N
}

impl Default for MeshSection {
    fn default() -> Self {
        MeshSection {
            n_per_side: DEFAULT_N,
            ny: None,
            mass: MassSpec::Lumped,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_iters")]
    pub max_iters: usize,
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_iters() -> usize {
    DEFAULT_MAX_ITERS
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            tol: DEFAULT_TOL,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandName {
    Eigen,
    LambdaStar,
    LambdaInfinity,
    Solve,
    Branch,
    AlphaSweep,
    Blowup,
    LargeSolution,
    Validate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RampSpec {
    All,
    Winners,
    WinnersLoserFree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandSection {
    pub name: CommandName,
    /// `eigen`: crowding strength of the potential `α a`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// `solve`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// `branch`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_grid: Option<Vec<f64>>,
    /// `alpha_sweep`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_list: Option<Vec<f64>>,
    /// `blowup` and `large_solution`; defaults to `λ∞ (1 - 0.1·2^-j)`, `j = 0..6`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_list: Option<Vec<f64>>,
    /// `large_solution`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramp: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramp_mode: Option<RampSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stagnation_tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_dir() -> String {
    "out".into()
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_dir(),
            formats: default_formats(),
        }
    }
}

/// The document as written, with defaults filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometrySection,
    pub coefficients: CoefficientSection,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub refuges: Vec<RefugeSection>,
    #[serde(default)]
    pub mesh: MeshSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub command: CommandSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn schema_error(text: &str, e: toml::de::Error) -> ConfigError {
    let message = e.message().to_string();
    let key = message.split('`').nth(1).unwrap_or("").to_string();
    let line = e.span().map(|s| line_of(text, s.start)).unwrap_or(0);
    ConfigError::Schema { line, key, message }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| schema_error(text, e))?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable as TOML")
    }

    pub fn geometry(&self) -> Result<Geometry, ConfigError> {
        let g = &self.geometry;
        match (g.kind, g.y) {
            (GeometryKind::Interval, None) => Ok(Geometry::Interval {
                x_lo: g.x[0],
                x_hi: g.x[1],
                gamma: g.gamma,
            }),
            (GeometryKind::Rectangle, Some(y)) => Ok(Geometry::Rectangle {
                x_lo: g.x[0],
                x_hi: g.x[1],
                y_lo: y[0],
                y_hi: y[1],
                gamma: g.gamma,
            }),
            (GeometryKind::Interval, Some(_)) => Err(ConfigError::Invariant("geometry.y is only valid for rectangles".into())),
            (GeometryKind::Rectangle, None) => Err(ConfigError::Invariant("geometry.y is required for rectangles".into())),
        }
    }

    pub fn spec(&self) -> Result<ProblemSpec, ConfigError> {
        let c = &self.coefficients;
        let mut refuges = Vec::with_capacity(self.refuges.len());
        for r in &self.refuges {
            let sub = Subdomain::from_index(usize::from(r.subdomain).wrapping_sub(1))
                .ok_or_else(|| ConfigError::Invariant(format!("refuge subdomain must be 1 or 2, got {}", r.subdomain)))?;
            let bounds = match (&r.bounds, self.geometry.kind) {
                (BoxSpec::Interval([lo, hi]), GeometryKind::Interval) => AxisBox::interval(*lo, *hi),
                (BoxSpec::Rectangle([x, y]), GeometryKind::Rectangle) => AxisBox::rect((x[0], x[1]), (y[0], y[1])),
                _ => return Err(ConfigError::Invariant("refuge box dimension does not match the geometry".into())),
            };
            refuges.push(RefugeRegion::new(sub, bounds));
        }
        Ok(ProblemSpec {
            geometry: self.geometry()?,
            mu: c.mu,
            p: c.p,
            m: [c.m1.field(), c.m2.field()],
            a: [c.a1.field(), c.a2.field()],
            refuges,
        })
    }

    pub fn ny(&self) -> usize {
        match self.geometry.kind {
            GeometryKind::Interval => 0,
            GeometryKind::Rectangle => self.mesh.ny.unwrap_or(self.mesh.n_per_side),
        }
    }

    pub fn mass_kind(&self) -> MassKind {
        match self.mesh.mass {
            MassSpec::Lumped => MassKind::Lumped,
            MassSpec::Consistent => MassKind::Consistent,
        }
    }

    /// Model and schema constraints beyond what the TOML types enforce.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let c = &self.coefficients;
        if !(c.p > 1.0) {
            return Err(ConfigError::Invariant(format!("p must exceed 1, got {}", c.p)));
        }
        if !(c.mu >= 0.0) {
            return Err(ConfigError::Invariant(format!("mu must be non-negative, got {}", c.mu)));
        }
        if !(self.solver.tol > 0.0) {
            return Err(ConfigError::Invariant(format!("solver.tol must be positive, got {}", self.solver.tol)));
        }
        if self.solver.max_iters == 0 {
            return Err(ConfigError::Invariant("solver.max_iters must be positive".into()));
        }
        if self.output.formats.is_empty() {
            return Err(ConfigError::Invariant("output.formats must name at least one format".into()));
        }
        let spec = self.spec()?;
        spec.validate()?;
        let mesh = build_mesh(spec.geometry, self.mesh.n_per_side, self.ny())?;
        tag_refuges(&mesh, &spec.refuges)?;
        self.validate_command(&spec)
    }

    fn validate_command(&self, spec: &ProblemSpec) -> Result<(), ConfigError> {
        let cmd = &self.command;
        let missing = |key: &str| ConfigError::Invariant(format!("command.{key} is required for {:?}", cmd.name));
        let needs_refuges = |what: &str| {
            if spec.refuges.is_empty() {
                Err(ConfigError::Invariant(format!("{what} needs at least one refuge")))
            } else {
                Ok(())
            }
        };
        match cmd.name {
            CommandName::Solve => {
                cmd.lambda.ok_or_else(|| missing("lambda"))?;
            }
            CommandName::Branch => {
                let grid = cmd.lambda_grid.as_ref().ok_or_else(|| missing("lambda_grid"))?;
                ascending(grid, "command.lambda_grid")?;
            }
            CommandName::AlphaSweep => {
                needs_refuges("alpha_sweep")?;
                let list = cmd.alpha_list.as_ref().ok_or_else(|| missing("alpha_list"))?;
                ascending(list, "command.alpha_list")?;
                if list.iter().any(|a| *a < 0.0) {
                    return Err(ConfigError::Invariant("alpha values must be non-negative".into()));
                }
            }
            CommandName::Blowup | CommandName::LargeSolution => {
                needs_refuges("blowup and large_solution")?;
                if let Some(list) = &cmd.lambda_list {
                    ascending(list, "command.lambda_list")?;
                }
                if let Some(ramp) = &cmd.ramp {
                    ascending(ramp, "command.ramp")?;
                }
            }
            _ => {}
        }
        Ok(())
    }
}

fn ascending(values: &[f64], key: &str) -> Result<(), ConfigError> {
    if values.is_empty() {
        return Err(ConfigError::Invariant(format!("{key} must not be empty")));
    }
    if values.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(ConfigError::Invariant(format!("{key} must be strictly ascending")));
    }
    Ok(())
}
