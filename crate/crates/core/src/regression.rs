//! The regression model `Y = f0(X) + sigma * eps`: target functions, design
//! laws, Gaussian noise, simulated samples and the two risks (empirical and
//! integrated) every estimator is judged by.

use std::fmt;
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::seed::{self, Rng};

/// Seed of the Monte Carlo stream used by [`calibrate_sigma`].
pub const CALIBRATION_SEED: u64 = 0x5EED_CA1B;
/// Draws used by [`calibrate_sigma`] on continuous designs.
pub const CALIBRATION_DRAWS: usize = 100_000;
/// Seed of the Monte Carlo stream used for risk evaluation on d > 1 designs.
pub const EVALUATION_SEED: u64 = 0xE7A1_0A7E;

/// A paired sample `(X_i, Y_i)`, points stored row-major in one buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    d: usize,
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Dataset {
    pub fn new(d: usize, xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if ys.is_empty() {
            return Err(Error::invalid("dataset must contain at least one observation"));
        }
        if xs.len() != d * ys.len() {
            return Err(Error::invalid(format!(
                "{} coordinates do not match {} responses in dimension {d}",
                xs.len(),
                ys.len()
            )));
        }
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        Ok(Self { d, xs, ys })
    }

    /// One-dimensional dataset from scalar covariates.
    pub fn from_1d(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        Self::new(1, xs, ys)
    }

    pub fn from_points(points: &[Vec<f64>], ys: Vec<f64>) -> Result<Self> {
        let d = points.first().map_or(0, Vec::len);
        if points.iter().any(|p| p.len() != d) {
            return Err(Error::invalid("points have inconsistent dimensions"));
        }
        Self::new(d, points.concat(), ys)
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.xs[i * self.d..(i + 1) * self.d]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.xs.chunks_exact(self.d)
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    /// Observations at `idx`, in the order given.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let mut xs = Vec::with_capacity(idx.len() * self.d);
        let mut ys = Vec::with_capacity(idx.len());
        for &i in idx {
            if i >= self.len() {
                return Err(Error::invalid(format!("index {i} out of range")));
            }
            xs.extend_from_slice(self.point(i));
            ys.push(self.ys[i]);
        }
        Self::new(self.d, xs, ys)
    }

    /// Same covariates, new responses.
    pub fn with_responses(&self, ys: Vec<f64>) -> Result<Self> {
        Self::new(self.d, self.xs.clone(), ys)
    }
}

/// Axis-aligned box `[lo_1, hi_1] x ... x [lo_d, hi_d]`; bounds may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn cube(d: usize, lo: f64, hi: f64) -> Self {
        Self {
            lo: vec![lo; d],
            hi: vec![hi; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::Domain {
                point: x.to_vec(),
                domain: self.to_string(),
            })
        }
    }
}

impl fmt::Display for BoxDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(lo, hi)| format!("[{lo}, {hi}]"))
            .collect();
        f.write_str(&parts.join(" x "))
    }
}

type CustomFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum TargetKind {
    /// `2 sin(1 + x) sin(2 pi x^2 + 1)` on `[-1, 1]`.
    HardSine,
    /// `(x + 1) sin(4 pi x^2)` on `[-1, 1]`.
    OscSine,
    Constant(f64),
    Custom { name: String, f: CustomFn },
}

/// The regression function `f0` together with the box it is defined on.
#[derive(Clone)]
pub struct TargetFunction {
    kind: TargetKind,
    domain: BoxDomain,
}

impl fmt::Debug for TargetFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetFunction")
            .field("name", &self.name())
            .field("domain", &self.domain)
            .finish()
    }
}

impl TargetFunction {
    pub fn hardsine() -> Self {
        Self {
            kind: TargetKind::HardSine,
            domain: BoxDomain::cube(1, -1.0, 1.0),
        }
    }

    pub fn oscsine() -> Self {
        Self {
            kind: TargetKind::OscSine,
            domain: BoxDomain::cube(1, -1.0, 1.0),
        }
    }

    /// Constant function on all of `R^d`.
    pub fn constant(c: f64, d: usize) -> Self {
        Self {
            kind: TargetKind::Constant(c),
            domain: BoxDomain::cube(d, f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn custom(
        name: impl Into<String>,
        domain: BoxDomain,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            kind: TargetKind::Custom {
                name: name.into(),
                f: Arc::new(f),
            },
            domain,
        }
    }

    /// Parses `hardsine`, `oscsine` or `constant:<c>` (one-dimensional).
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "hardsine" => Ok(Self::hardsine()),
            "oscsine" => Ok(Self::oscsine()),
            other => match other.strip_prefix("constant:") {
                Some(c) => c
                    .parse::<f64>()
                    .map(|c| Self::constant(c, 1))
                    .map_err(|_| Error::Config(format!("bad constant target '{other}'"))),
                None => Err(Error::Config(format!("unknown target '{other}'"))),
            },
        }
    }

    pub fn name(&self) -> String {
        match &self.kind {
            TargetKind::HardSine => "hardsine".into(),
            TargetKind::OscSine => "oscsine".into(),
            TargetKind::Constant(c) => format!("constant:{c}"),
            TargetKind::Custom { name, .. } => name.clone(),
        }
    }

    pub fn kind(&self) -> &TargetKind {
        &self.kind
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    /// Closed-form value without the domain check.
    pub fn value(&self, x: &[f64]) -> f64 {
        use std::f64::consts::PI;
        match &self.kind {
            TargetKind::HardSine => {
                let x = x[0];
                2.0 * (1.0 + x).sin() * (2.0 * PI * x * x + 1.0).sin()
            }
            TargetKind::OscSine => {
                let x = x[0];
                (x + 1.0) * (4.0 * PI * x * x).sin()
            }
            TargetKind::Constant(c) => *c,
            TargetKind::Custom { f, .. } => f(x),
        }
    }
}

/// `f0(x)`, failing when `x` is outside the target's domain.
pub fn eval_target(f: &TargetFunction, x: &[f64]) -> Result<f64> {
    f.domain.check(x)?;
    Ok(f.value(x))
}

#[derive(Debug, Clone, PartialEq)]
pub enum DesignKind {
    /// Uniform on `[0, 1]^d`.
    UniformUnitCube,
    /// Uniform on `[-1, 1]^d`.
    UniformSymmetric,
    /// Finitely many atoms with the given probabilities.
    DiscreteAtoms { atoms: Vec<Vec<f64>>, probs: Vec<f64> },
}

/// The law `P_X` of the covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    kind: DesignKind,
    d: usize,
    cumulative: Vec<f64>,
}

impl DesignSpec {
    pub fn uniform_unit_cube(d: usize) -> Self {
        Self {
            kind: DesignKind::UniformUnitCube,
            d,
            cumulative: Vec::new(),
        }
    }

    pub fn uniform_symmetric(d: usize) -> Self {
        Self {
            kind: DesignKind::UniformSymmetric,
            d,
            cumulative: Vec::new(),
        }
    }

    pub fn discrete(atoms: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != probs.len() {
            return Err(Error::invalid("discrete design needs one probability per atom"));
        }
        let d = atoms[0].len();
        if d == 0 || atoms.iter().any(|a| a.len() != d) {
            return Err(Error::invalid("atoms have inconsistent dimensions"));
        }
        if atoms.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("atoms must lie in a bounded box"));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid("atom probabilities must be nonnegative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("atom probabilities sum to {total}, not 1")));
        }
        let cumulative = probs
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        Ok(Self {
            kind: DesignKind::DiscreteAtoms { atoms, probs },
            d,
            cumulative,
        })
    }

    pub fn kind(&self) -> &DesignKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, DesignKind::DiscreteAtoms { .. })
    }

    /// Smallest box containing the support.
    pub fn support(&self) -> BoxDomain {
        match &self.kind {
            DesignKind::UniformUnitCube => BoxDomain::cube(self.d, 0.0, 1.0),
            DesignKind::UniformSymmetric => BoxDomain::cube(self.d, -1.0, 1.0),
            DesignKind::DiscreteAtoms { atoms, .. } => {
                let mut lo = vec![f64::INFINITY; self.d];
                let mut hi = vec![f64::NEG_INFINITY; self.d];
                for a in atoms {
                    for k in 0..self.d {
                        lo[k] = lo[k].min(a[k]);
                        hi[k] = hi[k].max(a[k]);
                    }
                }
                BoxDomain { lo, hi }
            }
        }
    }

    /// Writes one draw into `out` (length `d`).
    pub fn sample_into(&self, rng: &mut Rng, out: &mut [f64]) {
        match &self.kind {
            DesignKind::UniformUnitCube => out.iter_mut().for_each(|v| *v = rng.random::<f64>()),
            DesignKind::UniformSymmetric => out
                .iter_mut()
                .for_each(|v| *v = 2.0 * rng.random::<f64>() - 1.0),
            DesignKind::DiscreteAtoms { atoms, .. } => {
                let u: f64 = rng.random();
                let k = self
                    .cumulative
                    .iter()
                    .position(|c| u < *c)
                    .unwrap_or(atoms.len() - 1);
                out.copy_from_slice(&atoms[k]);
            }
        }
    }
}

/// Gaussian noise `sigma * eps`; the subgaussian proxy of a standard
/// Gaussian is 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub sigma: f64,
    pub subgaussian_proxy: f64,
}

impl NoiseModel {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::invalid(format!("noise level must be >= 0, got {sigma}")));
        }
        Ok(Self {
            sigma,
            subgaussian_proxy: 1.0,
        })
    }
}

fn check_compatible(f: &TargetFunction, design: &DesignSpec) -> Result<()> {
    if f.domain().dim() != design.dim() {
        return Err(Error::invalid(format!(
            "target is {}-dimensional but the design is {}-dimensional",
            f.domain().dim(),
            design.dim()
        )));
    }
    Ok(())
}

/// Noise level giving root-signal-to-noise ratio `rsnr`:
/// `sigma = sd(f0(X)) / rsnr` with `X ~ P_X`.
///
/// Discrete designs use the exact weighted variance; continuous designs a
/// fixed-seed Monte Carlo estimate with [`CALIBRATION_DRAWS`] draws.
pub fn calibrate_sigma(f: &TargetFunction, design: &DesignSpec, rsnr: f64) -> Result<f64> {
    if !(rsnr.is_finite() && rsnr > 0.0) {
        return Err(Error::invalid(format!("rsnr must be positive, got {rsnr}")));
    }
    check_compatible(f, design)?;
    let (mean, var) = match design.kind() {
        DesignKind::DiscreteAtoms { atoms, probs } => {
            let values: Vec<f64> = atoms.iter().map(|a| f.value(a)).collect();
            let mean: f64 = values.iter().zip(probs).map(|(v, p)| p * v).sum();
            let var: f64 = values
                .iter()
                .zip(probs)
                .map(|(v, p)| p * (v - mean) * (v - mean))
                .sum();
            (mean, var)
        }
        _ => {
            let mut rng = seed::rng(CALIBRATION_SEED);
            let mut x = vec![0.0; design.dim()];
            let values: Vec<f64> = (0..CALIBRATION_DRAWS)
                .map(|_| {
                    design.sample_into(&mut rng, &mut x);
                    f.value(&x)
                })
                .collect();
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            (mean, var)
        }
    };
    let sd = var.sqrt();
    if !(sd > 1e-12 * mean.abs().max(1.0)) {
        return Err(Error::DegenerateSignal);
    }
    Ok(sd / rsnr)
}

/// Draws `n` i.i.d. pairs `Y_i = f0(X_i) + sigma * eps_i`. A pure function of
/// its arguments: the same seed reproduces the dataset bit for bit.
pub fn simulate_dataset(
    f: &TargetFunction,
    design: &DesignSpec,
    noise: &NoiseModel,
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    check_compatible(f, design)?;
    let d = design.dim();
    let mut rng = seed::rng(seed);
    let mut xs = vec![0.0; n * d];
    let mut ys = Vec::with_capacity(n);
    for x in xs.chunks_exact_mut(d) {
        design.sample_into(&mut rng, x);
        let eps: f64 = rng.sample(StandardNormal);
        ys.push(f.value(x) + noise.sigma * eps);
    }
    Dataset::new(d, xs, ys)
}

/// How `||g||^2 = int g^2 dP_X` is approximated on continuous designs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalSpec {
    /// Trapezoid rule on `points` equispaced nodes (one-dimensional only).
    Grid { points: usize },
    MonteCarlo { draws: usize, seed: u64 },
}

impl EvalSpec {
    /// 10 001-node trapezoid in one dimension, 10^4 Monte Carlo draws otherwise.
    pub fn default_for(design: &DesignSpec) -> Self {
        if design.dim() == 1 {
            EvalSpec::Grid { points: 10_001 }
        } else {
            EvalSpec::MonteCarlo {
                draws: 10_000,
                seed: EVALUATION_SEED,
            }
        }
    }
}

/// Nodes and probability weights approximating `P_X`.
pub fn quadrature(design: &DesignSpec, eval: &EvalSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = design.dim();
    if let DesignKind::DiscreteAtoms { atoms, probs } = design.kind() {
        return Ok((atoms.concat(), probs.clone()));
    }
    match *eval {
        EvalSpec::Grid { points } => {
            if d != 1 {
                return Err(Error::invalid("grid quadrature is only available in one dimension"));
            }
            if points < 2 {
                return Err(Error::invalid("grid quadrature needs at least 2 nodes"));
            }
            let support = design.support();
            let (lo, hi) = (support.lo[0], support.hi[0]);
            let step = (hi - lo) / (points - 1) as f64;
            let nodes = (0..points).map(|k| lo + step * k as f64).collect();
            let inner = 1.0 / (points - 1) as f64;
            let weights = (0..points)
                .map(|k| if k == 0 || k == points - 1 { 0.5 * inner } else { inner })
                .collect();
            Ok((nodes, weights))
        }
        EvalSpec::MonteCarlo { draws, seed } => {
            if draws == 0 {
                return Err(Error::invalid("Monte Carlo evaluation needs at least one draw"));
            }
            let mut rng = seed::rng(seed);
            let mut nodes = vec![0.0; draws * d];
            for x in nodes.chunks_exact_mut(d) {
                design.sample_into(&mut rng, x);
            }
            Ok((nodes, vec![1.0 / draws as f64; draws]))
        }
    }
}

/// `|| predict - f0 ||^2` in `L^2(P_X)`. Exact on discrete designs.
pub fn l2_risk(
    predict: &dyn Fn(&[f64]) -> f64,
    f: &TargetFunction,
    design: &DesignSpec,
    eval: &EvalSpec,
) -> Result<f64> {
    check_compatible(f, design)?;
    let (nodes, weights) = quadrature(design, eval)?;
    Ok(weighted_sq_error(predict, f, design.dim(), &nodes, &weights))
}

/// Weighted squared error on precomputed nodes; lets callers reuse a
/// quadrature across many predictors.
pub fn weighted_sq_error(
    predict: &dyn Fn(&[f64]) -> f64,
    f: &TargetFunction,
    d: usize,
    nodes: &[f64],
    weights: &[f64],
) -> f64 {
    nodes
        .chunks_exact(d)
        .zip(weights)
        .map(|(x, w)| {
            let e = predict(x) - f.value(x);
            w * e * e
        })
        .sum()
}

/// `R_n(g) = (1/n) sum (Y_i - g(X_i))^2`.
pub fn empirical_risk(predict: &dyn Fn(&[f64]) -> f64, data: &Dataset) -> f64 {
    let sse: f64 = data
        .points()
        .zip(data.ys())
        .map(|(x, y)| {
            let e = y - predict(x);
            e * e
        })
        .sum();
    sse / data.len() as f64
}
