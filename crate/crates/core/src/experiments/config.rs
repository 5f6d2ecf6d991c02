use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aggregation::{default_temperatures, AggregationConfig, TemperatureSample};
use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::perm::{self, Criterion, PermConfig};
use crate::regression::{DesignSpec, EvalSpec, TargetFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Gcv,
    Cv,
    Aggregate,
    AggregateJackknife,
    ErmOnGrid,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Gcv,
        Method::Cv,
        Method::Aggregate,
        Method::AggregateJackknife,
        Method::ErmOnGrid,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Gcv => "gcv",
            Method::Cv => "cv",
            Method::Aggregate => "aggregate",
            Method::AggregateJackknife => "aggregate-jackknife",
            Method::ErmOnGrid => "erm-on-grid",
        }
    }

    pub fn criterion(&self) -> Option<Criterion> {
        match self {
            Method::Gcv => Some(Criterion::Gcv),
            Method::Cv => Some(Criterion::Loocv),
            _ => None,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DesignConfig {
    UniformUnitCube { d: usize },
    UniformSymmetric { d: usize },
    DiscreteAtoms { atoms: Vec<Vec<f64>>, probs: Vec<f64> },
}

impl DesignConfig {
    pub fn build(&self) -> Result<DesignSpec> {
        match self {
            DesignConfig::UniformUnitCube { d } => Ok(DesignSpec::uniform_unit_cube(*d)),
            DesignConfig::UniformSymmetric { d } => Ok(DesignSpec::uniform_symmetric(*d)),
            DesignConfig::DiscreteAtoms { atoms, probs } => DesignSpec::discrete(atoms.clone(), probs.clone()),
        }
    }
}

/// `count` log-spaced smoothing parameters in `[min, max] * n^(-n_power)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HGridSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    #[serde(default)]
    pub n_power: f64,
}

impl Default for HGridSpec {
    /// 51 points over a factor 4096 in `h` (`256^3` in the ridge `n h^2`),
    /// shrinking like `n^-2`. This tracks the usual smoothing-spline `spar`
    /// range `[0, 1]` with knots at the data: there the ridge is
    /// `r 256^(3 spar - 1)` with `r` about `0.18 / n^3` on the unit interval.
    fn default() -> Self {
        Self {
            min: 0.0265,
            max: 0.0265 * 4096.0,
            count: 51,
            n_power: 2.0,
        }
    }
}

impl HGridSpec {
    pub fn values(&self, n: usize) -> Result<Vec<f64>> {
        let scale = (n as f64).powf(-self.n_power);
        perm::log_grid(self.min * scale, self.max * scale, self.count)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum EvalConfig {
    /// 10 001-node trapezoid in 1-d, 10^4 Monte Carlo draws otherwise.
    Auto,
    Grid { points: usize },
    MonteCarlo { draws: usize, seed: u64 },
}

impl EvalConfig {
    pub fn resolve(&self, design: &DesignSpec) -> EvalSpec {
        match *self {
            EvalConfig::Auto => EvalSpec::default_for(design),
            EvalConfig::Grid { points } => EvalSpec::Grid { points },
            EvalConfig::MonteCarlo { draws, seed } => EvalSpec::MonteCarlo { draws, seed },
        }
    }
}

fn default_rsnr() -> f64 {
    2.0
}
fn default_n_list() -> Vec<usize> {
    vec![20, 30, 50, 100]
}
fn default_reps() -> usize {
    200
}
fn default_methods() -> Vec<Method> {
    vec![Method::Gcv, Method::Cv, Method::AggregateJackknife]
}
fn default_j() -> usize {
    20
}
fn default_split() -> f64 {
    0.75
}
fn default_eval() -> EvalConfig {
    EvalConfig::Auto
}
fn default_design() -> DesignConfig {
    DesignConfig::UniformSymmetric { d: 1 }
}
fn default_true() -> bool {
    true
}

/// The benchmark protocol. JSON keys are the field names; missing keys take
/// the desk-scale defaults (200 replications, 20 jackknife splits).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub target: String,
    #[serde(default = "default_design")]
    pub design: DesignConfig,
    #[serde(default = "default_rsnr")]
    pub rsnr: f64,
    /// Noise level; when set it replaces the `rsnr` calibration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default = "default_n_list")]
    pub n_list: Vec<usize>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub h_grid: HGridSpec,
    #[serde(rename = "T_set", default = "default_temperatures")]
    pub t_set: Vec<f64>,
    #[serde(rename = "J", default = "default_j")]
    pub j: usize,
    #[serde(default = "default_split")]
    pub split_frac: f64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_eval")]
    pub eval_spec: EvalConfig,
    /// Kernel family; defaults to the cubic spline on the design support.
    #[serde(default)]
    pub kernel: Option<KernelFamily>,
    #[serde(default = "default_true")]
    pub intercept: bool,
    #[serde(default)]
    pub temperature_sample: TemperatureSample,
}

impl ExperimentConfig {
    /// Desk-scale benchmark protocol for `target`.
    pub fn desk_scale(target: &str) -> Self {
        Self {
            target: target.to_string(),
            design: default_design(),
            rsnr: default_rsnr(),
            sigma: None,
            n_list: default_n_list(),
            reps: default_reps(),
            methods: default_methods(),
            h_grid: HGridSpec::default(),
            t_set: default_temperatures(),
            j: default_j(),
            split_frac: default_split(),
            master_seed: 0,
            eval_spec: EvalConfig::Auto,
            kernel: None,
            intercept: true,
            temperature_sample: TemperatureSample::Train,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Parse {
                path: path.to_path_buf(),
                message: msg,
            },
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if self.n_list.is_empty() || self.n_list.iter().any(|n| *n < 2) {
            return bad("n_list must be nonempty with every n >= 2".into());
        }
        if self.methods.is_empty() {
            return bad("methods must be nonempty".into());
        }
        if !(self.split_frac > 0.0 && self.split_frac < 1.0) {
            return bad(format!("split_frac must lie in (0, 1), got {}", self.split_frac));
        }
        if !(self.rsnr > 0.0) {
            return bad(format!("rsnr must be positive, got {}", self.rsnr));
        }
        if let Some(s) = self.sigma {
            if !(s.is_finite() && s >= 0.0) {
                return bad(format!("sigma must be finite and >= 0, got {s}"));
            }
        }
        if self.j == 0 {
            return bad("J must be at least 1".into());
        }
        if self.t_set.is_empty() || self.t_set.iter().any(|t| !(*t > 0.0)) {
            return bad("T_set must contain positive temperatures".into());
        }
        self.h_grid.values(2).map_err(|e| Error::Config(e.to_string()))?;
        let target = self.target_function()?;
        let design = self.design.build().map_err(|e| Error::Config(e.to_string()))?;
        if target.domain().dim() != design.dim() {
            return bad("target and design dimensions differ".into());
        }
        self.kernel_spec(&design)?;
        Ok(())
    }

    pub fn target_function(&self) -> Result<TargetFunction> {
        TargetFunction::from_name(&self.target)
    }

    pub fn aggregation(&self) -> AggregationConfig {
        AggregationConfig {
            t_set: self.t_set.clone(),
            split_frac: self.split_frac,
            temperature_sample: self.temperature_sample,
        }
    }

    /// Kernel used by every method: the configured family, with spline and
    /// Brownian kernels stretched over the design support.
    pub fn kernel_spec(&self, design: &DesignSpec) -> Result<KernelSpec> {
        let d = design.dim();
        let family = match (self.kernel, d) {
            (Some(f), _) => f,
            (None, 1) => KernelFamily::CubicSpline,
            (None, _) => KernelFamily::Gaussian { width: 0.5 },
        };
        let spec = KernelSpec::new(family, d).map_err(|e| Error::Config(e.to_string()))?;
        match family {
            KernelFamily::CubicSpline | KernelFamily::Brownian => {
                let support = design.support();
                let (lo, hi) = (support.lo[0], support.hi[0]);
                if lo < hi {
                    spec.on_interval(lo, hi).map_err(|e| Error::Config(e.to_string()))
                } else {
                    spec.on_interval(lo - 0.5, lo + 0.5).map_err(|e| Error::Config(e.to_string()))
                }
            }
            _ => Ok(spec),
        }
    }

    pub fn perm_grid(&self, kernel: KernelSpec, n: usize) -> Result<Vec<PermConfig>> {
        Ok(self
            .h_grid
            .values(n)?
            .into_iter()
            .map(|h| PermConfig::new(kernel, h).with_intercept(self.intercept))
            .collect())
    }
}
