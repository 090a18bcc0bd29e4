use std::path::Path;

use serde::{Deserialize, Serialize};
use ym2_core::field::TestGrid;
use ym2_core::lattice::AreaSpec;
use ym2_core::{ActionFamily, ActionKind, Group};

pub const MAX_RESOLUTION: u32 = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    GroupTables,
    ActionCheck,
    Segal,
    Llt,
    Sample,
    Charfun,
    Norms,
    Condition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AreaSpecName {
    Uniform,
    MorseSingular,
}

impl From<AreaSpecName> for AreaSpec {
    fn from(a: AreaSpecName) -> Self {
        match a {
            AreaSpecName::Uniform => AreaSpec::Uniform,
            AreaSpecName::MorseSingular => AreaSpec::MorseSingular,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub seed: u64,
    #[serde(default = "default_group")]
    pub group: Group,
    #[serde(default = "default_action")]
    pub action: ActionKind,
    #[serde(default = "default_genus")]
    pub genus: u32,
    /// Lattice resolution for single-lattice kinds.
    pub resolution: Option<u32>,
    /// Resolution ladder (charfun, norms) or convolution counts (llt).
    pub ladder: Option<Vec<u32>>,
    #[serde(default = "default_area")]
    pub total_area: f64,
    #[serde(default = "default_area_spec")]
    pub area_spec: AreaSpecName,
    pub c2max: Option<f64>,
    pub samples: Option<usize>,
    /// File stem for the CSV and JSON outputs; defaults to the kind name.
    pub output: Option<String>,

    /// segal: face areas (default: one face of `total_area`).
    pub areas: Option<Vec<f64>>,
    /// segal: class angles of the boundary holonomies.
    pub boundary_angles: Option<Vec<f64>>,
    /// action-check: time grid.
    pub times: Option<Vec<f64>>,
    /// llt: derivative order of the Sobolev-type norm.
    pub derivatives: Option<u32>,
    /// sample, condition: irrep indices.
    pub irreps: Option<Vec<i64>>,
    /// charfun: test function.
    pub test_function: Option<TestGrid>,
    /// charfun: allowed error at the finest resolution, on top of 4 standard errors.
    pub tolerance: Option<f64>,
    /// norms: Hölder exponent, integrability and corona exponent.
    pub alpha: Option<f64>,
    pub p: Option<f64>,
    pub s: Option<f64>,
    /// condition: sampling level and the observed face `[row, col]`.
    pub level: Option<usize>,
    pub face: Option<[usize; 2]>,
}

fn default_group() -> Group {
    Group::U1
}
fn default_action() -> ActionKind {
    ActionKind::Villain
}
fn default_genus() -> u32 {
    1
}
fn default_area() -> f64 {
    1.0
}
fn default_area_spec() -> AreaSpecName {
    AreaSpecName::Uniform
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn bad<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

impl ExperimentConfig {
    pub fn load(path: &Path, seed_override: Option<&str>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        if let Some(s) = seed_override {
            cfg.seed = s.trim().parse().map_err(|_| ConfigError(format!("YM2_SEED_OVERRIDE is not an integer: {s:?}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn family(&self) -> ActionFamily {
        let mut fam = ActionFamily::new(self.action, self.group);
        fam.c2max = self.c2max;
        fam
    }

    pub fn stem(&self) -> String {
        self.output.clone().unwrap_or_else(|| {
            serde_json::to_value(self.kind).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
        })
    }

    pub fn c2max_or(&self, d: f64) -> f64 {
        self.c2max.unwrap_or(d)
    }

    pub fn samples_or(&self, d: usize) -> usize {
        self.samples.unwrap_or(d)
    }

    pub fn resolution(&self) -> Result<u32, ConfigError> {
        self.resolution.ok_or_else(|| ConfigError(format!("{:?} needs `resolution`", self.kind)))
    }

    pub fn ladder(&self) -> Result<&[u32], ConfigError> {
        self.ladder.as_deref().ok_or_else(|| ConfigError(format!("{:?} needs `ladder`", self.kind)))
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if let Some(o) = &self.output {
            if o.is_empty() || o.contains(['/', '\\']) {
                return bad("`output` must be a plain file stem");
            }
        }
        if !(self.total_area > 0.0 && self.total_area.is_finite()) {
            return bad("`total_area` must be positive");
        }
        if let Some(c) = self.c2max {
            if !(c > 0.0 && c.is_finite()) {
                return bad("`c2max` must be positive");
            }
        }
        if self.samples == Some(0) {
            return bad("`samples` must be positive");
        }
        if let Some(n) = self.resolution {
            if n == 0 || n > MAX_RESOLUTION {
                return bad(format!("`resolution` must be in 1..={MAX_RESOLUTION}"));
            }
        }
        let lattice_kind = matches!(self.kind, Kind::Sample | Kind::Charfun | Kind::Norms | Kind::Condition);
        if lattice_kind && self.genus == 0 {
            return bad("lattice experiments need genus at least 1");
        }
        match self.kind {
            Kind::GroupTables | Kind::ActionCheck => {}
            Kind::Segal => {
                if let Some(a) = &self.areas {
                    if a.is_empty() || a.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                        return bad("`areas` must be a non-empty list of positive numbers");
                    }
                }
            }
            Kind::Llt => {
                let l = self.ladder()?;
                if l.is_empty() || l.contains(&0) {
                    return bad("`ladder` must list positive convolution counts");
                }
            }
            Kind::Sample | Kind::Condition => {
                self.resolution()?;
            }
            Kind::Charfun | Kind::Norms => {
                let l = self.ladder()?;
                if l.is_empty() || l.iter().any(|&n| n < 2 || n > MAX_RESOLUTION) {
                    return bad(format!("`ladder` resolutions must be in 2..={MAX_RESOLUTION}"));
                }
                if self.kind == Kind::Charfun {
                    let grid = self.test_function.as_ref().ok_or_else(|| ConfigError("charfun needs `test_function`".into()))?;
                    grid.validate().map_err(|e| ConfigError(e.to_string()))?;
                    if grid.direction.len() != self.group.dim() {
                        return bad(format!("`test_function.direction` needs {} components", self.group.dim()));
                    }
                }
                if self.kind == Kind::Norms && (self.alpha.is_none() || self.p.is_none()) {
                    return bad("norms needs `alpha` and `p`");
                }
            }
        }
        Ok(())
    }
}
