//! TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use riddle_core::dynamics::{IntervalMap, Observable, SkewProduct};
use riddle_core::expr::Expression;
use riddle_core::thermo::{Discretization, PotentialSpec};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub map: MapConfig,
    pub system: SystemConfig,
    #[serde(default)]
    pub discretization: DiscretizationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basin: Option<BasinConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loynes: Option<LoynesConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilityConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pressure: Option<PressureConfig>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Either `builtin = "doubling" | "linear-<b>"` or an explicit partition
/// with branch formulas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branches: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derivatives: Option<Vec<String>>,
}

/// One formula, or one per branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FormulaSpec {
    One(String),
    PerBranch(Vec<String>),
}

impl FormulaSpec {
    fn observable(&self, what: &str) -> Result<Observable, CliError> {
        let parsed = match self {
            FormulaSpec::One(s) => Observable::parse(s),
            FormulaSpec::PerBranch(v) => {
                let refs: Vec<&str> = v.iter().map(String::as_str).collect();
                Observable::parse_per_branch(&refs)
            }
        };
        parsed.map_err(|e| CliError::Config(format!("{what}: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub f: FormulaSpec,
    pub lambda: FormulaSpec,
    /// `"srb"` or a formula in `x`.
    #[serde(default = "default_potential")]
    pub potential: String,
    #[serde(default = "default_alpha")]
    pub holder_alpha: f64,
    /// Periodic orbit used as the expanding witness.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta_orbit: Option<Vec<f64>>,
}

fn default_potential() -> String {
    "srb".into()
}

fn default_alpha() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationConfig {
    pub method: String,
    pub n: usize,
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        DiscretizationConfig {
            method: "collocation".into(),
            n: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasinConfig {
    pub x_range: [f64; 2],
    pub t_range: [f64; 2],
    pub nx: usize,
    pub nt: usize,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub escape_threshold: Option<f64>,
    /// `"iterate"` (default) or `"graph"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classifier: Option<String>,
}

fn default_max_iter() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoynesConfig {
    pub samples: usize,
    pub m_grid: Vec<f64>,
}

/// A base point: a number or `"typical"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointX {
    Value(f64),
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityPoint {
    pub x: PointX,
    /// Absolute fibre coordinate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    /// Fibre coordinate relative to the graph, `t = u(x) + offset`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    pub samples_per_scale: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_schedule: Option<Vec<f64>>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    pub points: Vec<StabilityPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    /// Explicit grid; defaults to 81 points on `[−4, q* − 0.05]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub x_range: [f64; 2],
    pub points: usize,
    #[serde(default = "default_graph_tol")]
    pub tol: f64,
    #[serde(default = "default_max_terms")]
    pub max_terms: usize,
    /// Extra abscissae evaluated after the grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra: Option<Vec<f64>>,
}

fn default_graph_tol() -> f64 {
    1e-10
}

fn default_max_terms() -> usize {
    5000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PressureConfig {
    pub s_grid: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    /// Ulam size for the two-method comparison column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare_ulam: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serialisable")
    }

    /// SHA-256 of the canonical serialisation with `output_dir` blanked,
    /// since where results go does not change them.
    pub fn content_hash(&self) -> String {
        let canonical = RunConfig {
            output_dir: PathBuf::new(),
            ..self.clone()
        };
        hex::encode(Sha256::digest(canonical.to_toml().as_bytes()))
    }

    fn validate(&self) -> Result<(), CliError> {
        let m = &self.map;
        match (&m.builtin, &m.partition, &m.branches) {
            (Some(name), None, None) => {
                builtin_map(name)?;
            }
            (None, Some(p), Some(b)) => {
                if p.windows(2).any(|w| !(w[0] < w[1]))
                    || p.first() != Some(&0.0)
                    || p.last() != Some(&1.0)
                {
                    return Err(CliError::Config(
                        "map.partition must increase from 0 to 1".into(),
                    ));
                }
                if b.len() + 1 != p.len() {
                    return Err(CliError::Config(
                        "map.branches needs one formula per partition interval".into(),
                    ));
                }
            }
            _ => {
                return Err(CliError::Config(
                    "map needs either `builtin` or both `partition` and `branches`".into(),
                ))
            }
        }
        self.discretization()?;
        if let Some(st) = &self.stability {
            for p in &st.points {
                if let PointX::Keyword(k) = &p.x {
                    if k != "typical" {
                        return Err(CliError::Config(format!(
                            "stability point x must be a number or \"typical\", got {k:?}"
                        )));
                    }
                }
                if p.t.is_some() == p.offset.is_some() {
                    return Err(CliError::Config(
                        "each stability point needs exactly one of `t` or `offset`".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn base_map(&self) -> Result<IntervalMap, CliError> {
        let m = &self.map;
        if let Some(name) = &m.builtin {
            return builtin_map(name);
        }
        let partition = m.partition.clone().unwrap_or_default();
        let branches: Vec<&str> = m.branches.iter().flatten().map(String::as_str).collect();
        let derivs: Option<Vec<&str>> = m
            .derivatives
            .as_ref()
            .map(|d| d.iter().map(String::as_str).collect());
        IntervalMap::new(
            m.name.as_deref().unwrap_or("custom"),
            partition,
            &branches,
            derivs.as_deref(),
        )
        .map_err(|e| CliError::Config(e.to_string()))
    }

    /// The skew product; nonpositive `f` or `λ` is a hypothesis error.
    pub fn skew_product(&self) -> Result<SkewProduct, CliError> {
        let base = self.base_map()?;
        let f = self.system.f.observable("system.f")?;
        let lambda = self.system.lambda.observable("system.lambda")?;
        SkewProduct::new(
            base,
            f,
            lambda,
            self.system.holder_alpha,
            self.system.zeta_orbit.as_deref(),
        )
        .map_err(|e| match e {
            riddle_core::DynamicsError::Hypothesis(m) => CliError::Hypothesis(m),
            other => CliError::Config(other.to_string()),
        })
    }

    pub fn potential(&self) -> Result<PotentialSpec, CliError> {
        let p = self.system.potential.trim();
        if p.eq_ignore_ascii_case("srb") {
            Ok(PotentialSpec::srb())
        } else {
            Expression::parse(p)
                .map(PotentialSpec::custom)
                .map_err(|e| CliError::Config(format!("system.potential: {e}")))
        }
    }

    pub fn discretization(&self) -> Result<Discretization, CliError> {
        let d = &self.discretization;
        let disc = Discretization::from_name(&d.method, d.n).ok_or_else(|| {
            CliError::Config(format!(
                "discretization.method must be collocation or ulam, got {:?}",
                d.method
            ))
        })?;
        if d.n < 16 {
            return Err(CliError::Config(
                "discretization.n must be at least 16".into(),
            ));
        }
        Ok(disc)
    }
}

fn builtin_map(name: &str) -> Result<IntervalMap, CliError> {
    if name == "doubling" {
        return Ok(IntervalMap::doubling());
    }
    if let Some(b) = name.strip_prefix("linear-") {
        if let Ok(b) = b.parse::<usize>() {
            return IntervalMap::linear(b).map_err(|e| CliError::Config(e.to_string()));
        }
    }
    Err(CliError::Config(format!("unknown builtin map {name:?}")))
}
