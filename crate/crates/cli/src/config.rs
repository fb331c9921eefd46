//! Experiment configuration, read from TOML.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use weakkam::grid::{Coords, GridTorus};
use weakkam::model::{
    kinetic_lagrangian, mane_lagrangian, potential_lagrangian, Lagrangian, Potential, VectorField,
};

/// Model families understood by `model.family`.
pub const MODEL_FAMILIES: &[&str] = &["kinetic", "mane", "mechanical"];

/// Vector fields understood by `model.params.field` for the `mane` family.
pub const FIELDS: &[&str] = &[
    "zero",
    "constant",
    "sin",
    "sin_gradient",
    "neg_grad",
    "neg_grad_cos",
    "table",
];

/// Potentials understood by `model.params.potential`.
pub const POTENTIALS: &[&str] = &["cos", "zero"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub aubry: AubryConfig,
    #[serde(default)]
    pub dimension: DimensionConfig,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub regularizer: RegularizerConfig,
    #[serde(default)]
    pub ferry: Option<FerryConfig>,
    #[serde(default)]
    pub outputs: OutputConfig,
    /// Stages run by the `all` subcommand, in order.
    #[serde(default = "default_stages")]
    pub stages: Vec<String>,
    #[serde(default)]
    pub seed: u64,
}

fn default_stages() -> Vec<String> {
    ["critical", "weakkam", "barrier", "aubry", "quotient", "dimension"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: String,
    #[serde(default)]
    pub params: BTreeMap<String, toml::Value>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub n: usize,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    /// Step duration; the grid spacing when absent.
    pub tau: Option<f64>,
    /// Largest step length; four spacings when absent.
    pub stencil_radius: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    /// Zero selects 50 sweeps per grid point.
    pub max_iter: usize,
    /// Power window `[horizon, 2·horizon]` for the barrier cross-check; zero
    /// skips it.
    pub horizon: usize,
    /// Random initial functions tried besides the zero function.
    pub random_starts: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 0,
            horizon: 0,
            random_starts: 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EtaMode {
    /// A small absolute threshold covering floating-point rounding.
    Roundoff,
    /// The value of `aubry.eta`.
    Fixed,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct AubryConfig {
    pub eta_mode: EtaMode,
    pub eta: Option<f64>,
    /// Eight squared spacings when absent.
    pub merge_threshold: Option<f64>,
}

impl Default for AubryConfig {
    fn default() -> Self {
        Self {
            eta_mode: EtaMode::Roundoff,
            eta: None,
            merge_threshold: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct DimensionConfig {
    /// Explicit descending radii; otherwise halvings of the largest δ.
    pub scales: Option<Vec<f64>>,
    pub levels: usize,
    /// Window for the quadratic bound on δ.
    pub window: f64,
}

impl Default for DimensionConfig {
    fn default() -> Self {
        Self {
            scales: None,
            levels: 9,
            window: 0.1,
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    /// Flow time per chain step; the grid spacing when absent.
    pub dt: Option<f64>,
    /// Chain tolerance; 1.5 spacings when absent.
    pub eps: Option<f64>,
    /// Integration substeps per chain step; 4 when absent.
    pub substeps: Option<usize>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularizerConfig {
    pub stages: usize,
    pub tol: f64,
}

impl Default for RegularizerConfig {
    fn default() -> Self {
        Self {
            stages: 4,
            tol: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CollapseCurve {
    Segment,
    Circle,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CollapseConfig {
    pub curve: CollapseCurve,
    pub counts: Vec<usize>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FerryConfig {
    /// CSV with one point per row; relative paths resolve against the config
    /// file.
    pub points: Option<PathBuf>,
    pub p: f64,
    #[serde(default = "default_metric")]
    pub metric: weakkam::geometry::PointMetric,
    pub collapse: Option<CollapseConfig>,
}

fn default_metric() -> weakkam::geometry::PointMetric {
    weakkam::geometry::PointMetric::Euclidean
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Any of "csv" and "json".
    pub formats: Vec<String>,
    /// Full barrier matrices are written up to this many grid points.
    pub max_dense_points: usize,
    /// Also dump the kernel as CSV with a JSON sidecar.
    pub dump_kernel: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            formats: vec!["csv".into(), "json".into()],
            max_dense_points: 1024,
            dump_kernel: false,
        }
    }
}

impl OutputConfig {
    pub fn csv(&self) -> bool {
        self.formats.iter().any(|f| f == "csv")
    }

    pub fn json(&self) -> bool {
        self.formats.iter().any(|f| f == "json")
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file. Relative paths (output directory,
    /// ferry points, field table) resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: Self = toml::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(toml::Value::String(t)) = cfg.model.params.get_mut("table") {
            if Path::new(t.as_str()).is_relative() {
                *t = base.join(&*t).to_string_lossy().into_owned();
            }
        }
        if cfg.outputs.directory.is_relative() {
            cfg.outputs.directory = base.join(&cfg.outputs.directory);
        }
        if let Some(ferry) = cfg.ferry.as_mut() {
            if let Some(p) = ferry.points.as_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.grid()?;
        self.lagrangian()?;
        let s = self.spacing();
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => Err(bad(format!("{name} must be positive, got {x}"))),
            _ => Ok(()),
        };
        positive("kernel.tau", self.kernel.tau)?;
        positive("kernel.stencil_radius", self.kernel.stencil_radius)?;
        if self.stencil_radius() < s {
            return Err(bad(format!(
                "kernel.stencil_radius {} is below the grid spacing {s}",
                self.stencil_radius()
            )));
        }
        positive("solver.tol", Some(self.solver.tol))?;
        positive("aubry.merge_threshold", self.aubry.merge_threshold)?;
        match (self.aubry.eta_mode, self.aubry.eta) {
            (EtaMode::Fixed, None) => return Err(bad("aubry.eta_mode = \"fixed\" needs aubry.eta")),
            (_, Some(e)) if !(e >= 0.0) => return Err(bad(format!("aubry.eta must be nonnegative, got {e}"))),
            _ => {}
        }
        if let Some(scales) = &self.dimension.scales {
            if scales.is_empty() || scales.iter().any(|r| !(*r > 0.0)) {
                return Err(bad("dimension.scales must be nonempty and positive"));
            }
            if scales.windows(2).any(|w| w[1] > w[0]) {
                return Err(bad("dimension.scales must be descending"));
            }
        }
        if self.dimension.levels == 0 {
            return Err(bad("dimension.levels must be at least 1"));
        }
        positive("dimension.window", Some(self.dimension.window))?;
        positive("dynamics.dt", self.dynamics.dt)?;
        positive("dynamics.eps", self.dynamics.eps)?;
        if self.dynamics.substeps == Some(0) {
            return Err(bad("dynamics.substeps must be at least 1"));
        }
        if self.regularizer.stages == 0 {
            return Err(bad("regularizer.stages must be at least 1"));
        }
        positive("regularizer.tol", Some(self.regularizer.tol))?;
        if let Some(f) = &self.ferry {
            if !(f.p >= 1.0 && f.p.is_finite()) {
                return Err(bad(format!("ferry.p must be at least 1, got {}", f.p)));
            }
            if f.points.is_none() && f.collapse.is_none() {
                return Err(bad("ferry needs points, collapse or both"));
            }
            if let Some(c) = &f.collapse {
                if c.counts.is_empty() || c.counts.contains(&0) {
                    return Err(bad("ferry.collapse.counts must be nonempty and positive"));
                }
            }
        }
        for f in &self.outputs.formats {
            if f != "csv" && f != "json" {
                return Err(bad(format!("unknown output format {f:?}; expected csv or json")));
            }
        }
        for stage in &self.stages {
            if !crate::pipeline::STAGES.contains(&stage.as_str()) {
                return Err(bad(format!(
                    "unknown stage {stage:?}; expected one of {}",
                    crate::pipeline::STAGES.join(", ")
                )));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridTorus, ConfigError> {
        GridTorus::new(self.grid.dim, self.grid.n).map_err(|e| bad(e.to_string()))
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.grid.n as f64
    }

    pub fn tau(&self) -> f64 {
        self.kernel.tau.unwrap_or_else(|| self.spacing())
    }

    pub fn stencil_radius(&self) -> f64 {
        self.kernel.stencil_radius.unwrap_or(4.0 * self.spacing())
    }

    pub fn eta(&self) -> f64 {
        match self.aubry.eta_mode {
            EtaMode::Roundoff => self.aubry.eta.unwrap_or(weakkam::aubry::DEFAULT_ETA),
            EtaMode::Fixed => self.aubry.eta.unwrap_or(0.0),
        }
    }

    pub fn merge_threshold(&self) -> f64 {
        self.aubry
            .merge_threshold
            .unwrap_or(8.0 * self.spacing() * self.spacing())
    }

    pub fn chain_dt(&self) -> f64 {
        self.dynamics.dt.unwrap_or_else(|| self.spacing())
    }

    pub fn chain_eps(&self) -> f64 {
        self.dynamics.eps.unwrap_or(1.5 * self.spacing())
    }

    pub fn chain_substeps(&self) -> usize {
        self.dynamics.substeps.unwrap_or(4)
    }

    fn param_f64(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.model.params.get(key) {
            None => Ok(default),
            Some(toml::Value::Float(v)) => Ok(*v),
            Some(toml::Value::Integer(v)) => Ok(*v as f64),
            Some(other) => Err(bad(format!("model.params.{key} must be a number, got {other}"))),
        }
    }

    fn param_str(&self, key: &str) -> Result<Option<&str>, ConfigError> {
        match self.model.params.get(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s)),
            Some(other) => Err(bad(format!("model.params.{key} must be a string, got {other}"))),
        }
    }

    fn check_params(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        for key in self.model.params.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(bad(format!(
                    "model family {:?} has no parameter {key:?}; allowed: [{}]",
                    self.model.family,
                    allowed.join(", ")
                )));
            }
        }
        Ok(())
    }

    fn axis(&self) -> Result<Option<usize>, ConfigError> {
        match self.model.params.get("axis") {
            None => Ok(None),
            Some(toml::Value::Integer(a)) if (0..self.grid.dim as i64).contains(a) => Ok(Some(*a as usize)),
            Some(other) => Err(bad(format!(
                "model.params.axis must be an axis index below {}, got {other}",
                self.grid.dim
            ))),
        }
    }

    fn cosine(&self) -> Result<Potential, ConfigError> {
        Ok(Potential::cosine(
            self.param_f64("amplitude", 1.0)?,
            self.param_f64("wavenumber", 1.0)?,
            self.axis()?,
        ))
    }

    /// The vector field of a `mane` model.
    pub fn vector_field(&self) -> Result<Option<VectorField>, ConfigError> {
        if self.model.family != "mane" {
            return Ok(None);
        }
        let dim = self.grid.dim;
        let field = match self.param_str("field")?.unwrap_or("zero") {
            "zero" => VectorField::zero(dim),
            "constant" => {
                let comps: Vec<f64> = match self.model.params.get("components") {
                    None => vec![1.0; dim],
                    Some(toml::Value::Array(a)) => a
                        .iter()
                        .map(|v| match v {
                            toml::Value::Float(x) => Ok(*x),
                            toml::Value::Integer(x) => Ok(*x as f64),
                            _ => Err(bad("model.params.components must be numbers")),
                        })
                        .collect::<Result<_, _>>()?,
                    Some(_) => return Err(bad("model.params.components must be an array")),
                };
                if comps.len() != dim {
                    return Err(bad(format!(
                        "model.params.components has {} entries for a {dim}-dimensional grid",
                        comps.len()
                    )));
                }
                VectorField::constant(&comps).map_err(|e| bad(e.to_string()))?
            }
            "sin" | "sin_gradient" => VectorField::sin_gradient(dim, self.param_f64("wavenumber", 1.0)?)
                .map_err(|e| bad(e.to_string()))?,
            "neg_grad_cos" => {
                VectorField::neg_grad(self.cosine()?, dim).map_err(|e| bad(e.to_string()))?
            }
            "neg_grad" => {
                let potential = match self.param_str("potential")?.unwrap_or("cos") {
                    "cos" => self.cosine()?,
                    "zero" => Potential::Zero,
                    other => {
                        return Err(bad(format!(
                            "unknown potential {other:?}; builtins: {}",
                            POTENTIALS.join(", ")
                        )))
                    }
                };
                VectorField::neg_grad(potential, dim).map_err(|e| bad(e.to_string()))?
            }
            "table" => {
                let path = self
                    .param_str("table")?
                    .ok_or_else(|| bad("field \"table\" needs model.params.table, a CSV path"))?;
                read_field_table(Path::new(path), self.grid()?)?
            }
            other => {
                return Err(bad(format!(
                    "unknown field {other:?}; builtins: {}",
                    FIELDS.join(", ")
                )))
            }
        };
        Ok(Some(field))
    }

    pub fn lagrangian(&self) -> Result<Lagrangian, ConfigError> {
        let dim = self.grid.dim;
        match self.model.family.as_str() {
            "kinetic" => {
                self.check_params(&[])?;
                Ok(kinetic_lagrangian(dim))
            }
            "mane" => {
                self.check_params(&[
                    "field",
                    "components",
                    "wavenumber",
                    "amplitude",
                    "axis",
                    "potential",
                    "table",
                ])?;
                let field = self.vector_field()?.expect("mane family has a field");
                Ok(mane_lagrangian(&field))
            }
            "mechanical" => {
                self.check_params(&["amplitude", "wavenumber", "axis"])?;
                Ok(potential_lagrangian(self.cosine()?, dim))
            }
            other => Err(bad(format!(
                "unknown model family {other:?}; builtins: {}",
                MODEL_FAMILIES.join(", ")
            ))),
        }
    }
}

/// Rows of grid index per axis followed by component per axis; no header,
/// `#` comments allowed. Every grid point appears exactly once.
pub fn read_field_table(path: &Path, grid: GridTorus) -> Result<VectorField, ConfigError> {
    let dim = grid.dim();
    let n = grid.n_per_axis();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(format!("field table {}: {e}", path.display())))?;
    let mut values: Vec<Option<Coords>> = vec![None; grid.point_count()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(format!("field table {}: {e}", path.display())))?;
        let line = rec.position().map_or(0, |p| p.line());
        let at = |msg: String| bad(format!("{}:{line}: {msg}", path.display()));
        if rec.len() != 2 * dim {
            return Err(at(format!("expected {} columns, got {}", 2 * dim, rec.len())));
        }
        let mut cells = [0i64; 2];
        for (a, cell) in cells.iter_mut().enumerate().take(dim) {
            let i: usize = rec[a].parse().map_err(|_| at(format!("bad index {:?}", &rec[a])))?;
            if i >= n {
                return Err(at(format!("index {i} outside 0..{n}")));
            }
            *cell = i as i64;
        }
        let comps = (dim..2 * dim)
            .map(|k| rec[k].parse::<f64>().map_err(|_| at(format!("bad component {:?}", &rec[k]))))
            .collect::<Result<Vec<_>, _>>()?;
        let idx = grid.index_of_cells(&cells[..dim]);
        if values[idx].replace(Coords::from_slice(&comps)).is_some() {
            return Err(at(format!("grid point {:?} listed twice", &cells[..dim])));
        }
    }
    let missing = values.iter().filter(|v| v.is_none()).count();
    if missing > 0 {
        return Err(bad(format!(
            "field table {} misses {missing} of {} grid points",
            path.display(),
            grid.point_count()
        )));
    }
    VectorField::from_table(grid, values.into_iter().map(Option::unwrap).collect())
        .map_err(|e| bad(e.to_string()))
}
