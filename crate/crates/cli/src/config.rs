//! Run configuration: a TOML document parsed completely before any work starts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use griffith_core::demo::StripSetup;
use griffith_core::energy::{LoadSpec, MaterialParams, Split};
use griffith_core::evolution::{AuditSettings, LoadProgram, RunOptions};
use griffith_core::grid::{Grid, Point, Rect, Side, SlitSpec};
use griffith_core::solve::SolverSettings;
use griffith_core::stability::{singular_value, CompetitorFamily, DEFAULT_TOL_BAND};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::Expr;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("override `{0}`: expected key.path=value")]
    Override(String),
    #[error("`{key}`: {msg}")]
    Invalid { key: String, msg: String },
    #[error("`{0}` is required for this command")]
    Missing(String),
}

pub(crate) fn invalid(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub material: MaterialConfig,
    #[serde(default)]
    pub loads: LoadsConfig,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub evolution: EvolutionConfig,
    #[serde(default)]
    pub stability: StabilityConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<SnapshotConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demo: Option<DemoConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub rect: Rect,
    pub resolution: [usize; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slit: Option<SlitSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialConfig {
    pub g_c: f64,
    pub delta: f64,
    pub eta: f64,
    pub mu_eq: f64,
    pub mu_neq: f64,
    pub split: Split,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        let p = MaterialParams::default();
        Self {
            g_c: p.g_c,
            delta: p.delta,
            eta: p.eta,
            mu_eq: p.mu_eq,
            mu_neq: p.mu_neq,
            split: Split::Full,
        }
    }
}

impl MaterialConfig {
    pub fn params(&self) -> MaterialParams {
        MaterialParams {
            g_c: self.g_c,
            delta: self.delta,
            eta: self.eta,
            mu_eq: self.mu_eq,
            mu_neq: self.mu_neq,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TractionConfig {
    pub side: Side,
    /// `g(x, y, t)`.
    pub g: Expr,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingularConfig {
    pub k: f64,
    pub tip: Point,
    /// Crack direction in radians; the slit direction at `tip` by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forward: Option<f64>,
}

/// Prescribed displacement on one side: `value(x, y, t)` plus an optional
/// singular field `K r^{1/2} sin(theta/2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirichletConfig {
    pub side: Side,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Expr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub singular: Option<SingularConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadsConfig {
    /// Body load `f(x, y, t)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub body: Option<Expr>,
    pub traction: Vec<TractionConfig>,
    pub dirichlet: Vec<DirichletConfig>,
    /// Explicit load times; otherwise `steps` uniform steps from 0 to `t_end`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    pub t_end: f64,
    pub steps: usize,
}

impl Default for LoadsConfig {
    fn default() -> Self {
        Self {
            body: None,
            traction: Vec::new(),
            dirichlet: Vec::new(),
            times: None,
            t_end: 1.0,
            steps: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    /// Relative total-energy increase per step above which an event is recorded.
    pub energy_tol: f64,
    /// Hold the damage at its initial (intact) state.
    pub freeze_damage: bool,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        let o = RunOptions::default();
        Self {
            energy_tol: o.energy_tol,
            freeze_damage: o.freeze_damage,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tips: Option<Vec<Point>>,
    /// Blow-up center for `blowup` and `identity-check`; the first tip by default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<Point>,
    pub ridge_threshold: f64,
    pub eps_list: Vec<f64>,
    pub r: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annulus: Option<[f64; 2]>,
    pub tol_band: f64,
    pub ball_fractions: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<CompetitorFamily>,
    /// Audit every step of a quasi-static run.
    pub audit_steps: bool,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        let a = AuditSettings::default();
        Self {
            tips: None,
            center: None,
            ridge_threshold: a.ridge_threshold,
            eps_list: a.eps_list,
            r: a.r,
            annulus: None,
            tol_band: DEFAULT_TOL_BAND,
            ball_fractions: a.ball_fractions,
            family: None,
            audit_steps: false,
        }
    }
}

impl StabilityConfig {
    pub fn audit(&self) -> AuditSettings {
        AuditSettings {
            tips: self.tips.clone(),
            ridge_threshold: self.ridge_threshold,
            eps_list: self.eps_list.clone(),
            r: self.r,
            annulus: self.annulus,
            tol_band: self.tol_band,
            ball_fractions: self.ball_fractions.clone(),
            competitors: self.family.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Also write legacy VTK files next to the CSV dumps.
    pub vtk: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            vtk: false,
        }
    }
}

/// Field dumps to analyze instead of a computed state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotConfig {
    pub u: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoConfig {
    pub amplitudes: Vec<f64>,
    #[serde(default)]
    pub strip: StripSetup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Command run for every parameter combination.
    pub command: String,
    /// Dotted config keys and the values to combine.
    pub values: BTreeMap<String, Vec<toml::Value>>,
}

/// Sets `key.path = value` in a TOML table; `value` is read as TOML and
/// falls back to a plain string.
pub fn set_key(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), ConfigError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::Override(key.to_string()));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| invalid(key, format!("`{p}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

pub fn parse_override(s: &str) -> Result<(String, toml::Value), ConfigError> {
    let (k, v) = s.split_once('=').ok_or_else(|| ConfigError::Override(s.to_string()))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(ConfigError::Override(s.to_string()));
    }
    let v = v.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {v}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(v.to_string()));
    Ok((k.to_string(), value))
}

impl RunConfig {
    /// Reads, applies overrides, parses and validates. Relative snapshot
    /// paths are resolved against the config's directory.
    pub fn load(path: &Path, overrides: &[(String, toml::Value)]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::from_text(&text, overrides, path)?;
        if let Some(s) = &mut cfg.snapshot {
            s.u = base.join(&s.u);
            s.v = s.v.as_ref().map(|v| base.join(v));
        }
        Ok(cfg)
    }

    pub fn from_text(
        text: &str,
        overrides: &[(String, toml::Value)],
        path: &Path,
    ) -> Result<Self, ConfigError> {
        let parse_err = |e: toml::de::Error| ConfigError::Parse {
            path: path.to_path_buf(),
            msg: e.to_string(),
        };
        let cfg: Self = if overrides.is_empty() {
            toml::from_str(text).map_err(parse_err)?
        } else {
            let mut table: toml::Table = toml::from_str(text).map_err(parse_err)?;
            for (k, v) in overrides {
                set_key(&mut table, k, v.clone())?;
            }
            let merged = toml::to_string(&table).map_err(|e| ConfigError::Parse {
                path: path.to_path_buf(),
                msg: e.to_string(),
            })?;
            toml::from_str(&merged).map_err(parse_err)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.material
            .params()
            .validate()
            .map_err(|e| invalid("material", e.to_string()))?;
        self.solver.validate().map_err(|e| invalid("solver", e.to_string()))?;
        if let Some(g) = &self.grid {
            if g.resolution.iter().any(|&n| n == 0) {
                return Err(invalid("grid.resolution", "cell counts must be positive"));
            }
            if !(g.rect.x1 > g.rect.x0 && g.rect.y1 > g.rect.y0) {
                return Err(invalid("grid.rect", "empty rectangle"));
            }
        }
        for (i, d) in self.loads.dirichlet.iter().enumerate() {
            if d.value.is_none() && d.singular.is_none() {
                return Err(invalid(
                    &format!("loads.dirichlet[{i}]"),
                    "needs `value` or `singular`",
                ));
            }
        }
        self.times()?;
        if !(self.evolution.energy_tol >= 0.0) {
            return Err(invalid("evolution.energy_tol", "must be nonnegative"));
        }
        let s = &self.stability;
        if s.eps_list.is_empty() || s.eps_list.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid("stability.eps_list", "must be nonempty and strictly decreasing"));
        }
        if !(s.r > 0.0) {
            return Err(invalid("stability.r", "must be positive"));
        }
        if let Some(d) = &self.demo {
            if d.amplitudes.len() < 2 {
                return Err(invalid("demo.amplitudes", "need at least two amplitudes"));
            }
        }
        if let Some(sw) = &self.sweep {
            if sw.command == "sweep" || crate::Command::from_name(&sw.command).is_none() {
                return Err(invalid("sweep.command", format!("unsupported command `{}`", sw.command)));
            }
            if sw.values.is_empty() || sw.values.values().any(|v| v.is_empty()) {
                return Err(invalid("sweep.values", "every key needs at least one value"));
            }
        }
        Ok(())
    }

    pub fn times(&self) -> Result<Vec<f64>, ConfigError> {
        let l = &self.loads;
        let times = match &l.times {
            Some(t) => t.clone(),
            None => {
                if l.steps == 0 {
                    return Err(invalid("loads.steps", "must be positive"));
                }
                (0..=l.steps).map(|k| l.t_end * k as f64 / l.steps as f64).collect()
            }
        };
        if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) || times.iter().any(|t| !t.is_finite()) {
            return Err(invalid("loads.times", "must be finite and strictly increasing"));
        }
        Ok(times)
    }

    pub fn grid(&self) -> Result<Arc<Grid>, ConfigError> {
        let g = self.grid.as_ref().ok_or_else(|| ConfigError::Missing("grid".into()))?;
        Grid::build(g.rect, g.resolution, g.slit.clone())
            .map(Arc::new)
            .map_err(|e| invalid("grid", e.to_string()))
    }

    /// Loads at time `t` on `grid`.
    pub fn loads_at(&self, grid: &Grid, t: f64) -> LoadSpec {
        let l = &self.loads;
        let mut spec = LoadSpec::none(grid);
        if let Some(f) = &l.body {
            spec = spec.with_body(grid, |p| f.eval(p[0], p[1], t));
        }
        for tr in &l.traction {
            spec = spec.with_traction(grid, tr.side, |p| tr.g.eval(p[0], p[1], t));
        }
        for d in &l.dirichlet {
            let forward = d.singular.map(|s| {
                s.forward
                    .or_else(|| griffith_core::stability::slit_forward_angle(grid, s.tip))
                    .unwrap_or(0.0)
            });
            spec = spec.with_dirichlet_side(grid, d.side, |p, probe| {
                let smooth = d.value.as_ref().map_or(0.0, |e| e.eval(p[0], p[1], t));
                let sing = d
                    .singular
                    .map_or(0.0, |s| singular_value(s.k, s.tip, forward.unwrap_or(0.0), p, probe));
                smooth + sing
            });
        }
        spec
    }

    pub fn program(&self, grid: &Grid) -> Result<LoadProgram, ConfigError> {
        LoadProgram::from_fn(self.times()?, |t| self.loads_at(grid, t))
            .map_err(|e| invalid("loads", e.to_string()))
    }

    pub fn demo(&self) -> Result<&DemoConfig, ConfigError> {
        self.demo.as_ref().ok_or_else(|| ConfigError::Missing("demo".into()))
    }
}
