//! Penalized empirical risk minimization over an RKHS.
//!
//! For the quadratic penalty `h^2 |f|_K^2` the minimizer of
//! `R_n(f) + h^2 |f|_K^2` is `sum_i alpha_i K(X_i, .) + b` with
//! `(G + n h^2 I) alpha = Y - b 1`, where `b` is an optional unpenalized
//! intercept fixed by `1' alpha = 0`. Everything here (fits, hat matrix,
//! LOOCV and GCV scores) is built on the matrix
//! `P = A^-1 - v v' / (1' v)` with `A = G + n h^2 I`, `v = A^-1 1`
//! (the correction term only with an intercept): `alpha = P Y`,
//! residuals are `n h^2 alpha` and the hat matrix is `I - n h^2 P`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{self, KernelSpec};
use crate::regression::{empirical_risk, Dataset};

/// The penalty exponent of the only exactly solvable case.
pub const PENALTY_EXPONENT: f64 = 2.0;

/// Anything that can be evaluated pointwise as a regression estimate.
pub trait Predictor: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> Predictor for F {
    fn value(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermConfig {
    pub kernel: KernelSpec,
    /// Smoothing parameter; the penalty weight is `h^2`.
    pub h: f64,
    #[serde(default)]
    pub intercept: bool,
    /// Truncation level `Q`: predictions are clipped to `[-Q, Q]`.
    #[serde(default)]
    pub clamp: Option<f64>,
}

impl PermConfig {
    pub fn new(kernel: KernelSpec, h: f64) -> Self {
        Self {
            kernel,
            h,
            intercept: false,
            clamp: None,
        }
    }

    pub fn with_intercept(mut self, intercept: bool) -> Self {
        self.intercept = intercept;
        self
    }

    pub fn with_clamp(mut self, q: f64) -> Self {
        self.clamp = Some(q);
        self
    }

    pub fn with_h(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    pub fn penalty_exponent(&self) -> f64 {
        PENALTY_EXPONENT
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(Error::invalid(format!("h must be positive, got {}", self.h)));
        }
        if let Some(q) = self.clamp {
            if !(q > 0.0) {
                return Err(Error::invalid(format!("clamp level must be positive, got {q}")));
            }
        }
        Ok(())
    }
}

/// `x -> sum_i coeffs_i K(p_i, x) + intercept`, optionally clipped.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelExpansion {
    pub kernel: KernelSpec,
    pub points: Vec<f64>,
    pub coeffs: Vec<f64>,
    pub intercept: f64,
    pub clamp: Option<f64>,
}

impl KernelExpansion {
    pub fn zero(kernel: KernelSpec, points: Vec<f64>) -> Self {
        let n = points.len() / kernel.d;
        Self {
            kernel,
            points,
            coeffs: vec![0.0; n],
            intercept: 0.0,
            clamp: None,
        }
    }

    pub fn raw_value(&self, x: &[f64]) -> f64 {
        let d = self.kernel.d;
        self.points
            .chunks_exact(d)
            .zip(&self.coeffs)
            .map(|(p, c)| c * self.kernel.eval(p, x))
            .sum::<f64>()
            + self.intercept
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.kernel.check(x)?;
        Ok(self.value(x))
    }
}

impl Predictor for KernelExpansion {
    fn value(&self, x: &[f64]) -> f64 {
        let v = self.raw_value(x);
        match self.clamp {
            Some(q) => v.clamp(-q, q),
            None => v,
        }
    }
}

/// A fitted penalized least-squares estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct KrrModel {
    pub config: PermConfig,
    pub expansion: KernelExpansion,
    /// `alpha' G alpha`, the squared RKHS norm of the kernel part.
    pub rkhs_norm_sq: f64,
    /// Unclamped fitted values at the training points.
    pub fitted: Vec<f64>,
}

impl KrrModel {
    pub fn train_points(&self) -> &[f64] {
        &self.expansion.points
    }

    pub fn dual_coeffs(&self) -> &[f64] {
        &self.expansion.coeffs
    }

    pub fn intercept_value(&self) -> f64 {
        self.expansion.intercept
    }

    /// Value at `x`, clipped to `[-Q, Q]` when the config asks for it.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.expansion.predict(x)
    }
}

impl Predictor for KrrModel {
    fn value(&self, x: &[f64]) -> f64 {
        self.expansion.value(x)
    }
}

/// The regularized system `G + ridge * I` for one training design.
pub(crate) struct RidgeSystem<'a> {
    pub gram: &'a DMatrix<f64>,
    pub ridge: f64,
    chol: Cholesky<f64, Dyn>,
    matrix: DMatrix<f64>,
}

impl<'a> RidgeSystem<'a> {
    pub fn new(gram: &'a DMatrix<f64>, h: f64) -> Result<Self> {
        let n = gram.nrows();
        let ridge = n as f64 * h * h;
        let mut matrix = gram.clone();
        for i in 0..n {
            matrix[(i, i)] += ridge;
        }
        match Cholesky::new(matrix.clone()) {
            Some(chol) => Ok(Self {
                gram,
                ridge,
                chol,
                matrix,
            }),
            None => {
                let eig = SymmetricEigen::new(matrix).eigenvalues;
                let (lo, hi) = (eig.min(), eig.max());
                let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
                Err(Error::Numerical {
                    message: format!("G + n h^2 I is not positive definite (h = {h:e})"),
                    condition,
                })
            }
        }
    }

    /// Solves `A x = rhs` with one step of iterative refinement.
    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut x = self.chol.solve(rhs);
        let r = rhs - &self.matrix * &x;
        x += self.chol.solve(&r);
        x
    }

    /// Dual coefficients and intercept for responses `ys`.
    pub fn coefficients(&self, ys: &[f64], intercept: bool) -> (DVector<f64>, f64) {
        let y = DVector::from_column_slice(ys);
        let u = self.solve(&y);
        if !intercept {
            return (u, 0.0);
        }
        let ones = DVector::from_element(ys.len(), 1.0);
        let v = self.solve(&ones);
        let b = u.sum() / v.sum();
        (u - v * b, b)
    }

    /// The matrix `P` with `alpha = P Y`.
    pub fn projector(&self, intercept: bool) -> DMatrix<f64> {
        let n = self.gram.nrows();
        let mut p = self.chol.inverse();
        if intercept {
            let v = self.solve(&DVector::from_element(n, 1.0));
            let denom = v.sum();
            p -= &v * v.transpose() / denom;
        }
        symmetrize(&mut p);
        p
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn check_inputs(data: &Dataset, config: &PermConfig) -> Result<()> {
    config.validate()?;
    if data.dim() != config.kernel.d {
        return Err(Error::invalid(format!(
            "data is {}-dimensional but the kernel is {}-dimensional",
            data.dim(),
            config.kernel.d
        )));
    }
    config.kernel.check_all(data.xs())
}

/// Fits the penalized least-squares estimate by a Cholesky solve of
/// `(G + n h^2 I) alpha = Y - b 1`.
pub fn fit_krr(data: &Dataset, config: &PermConfig) -> Result<KrrModel> {
    check_inputs(data, config)?;
    let g = kernels::gram_unchecked(&config.kernel, data.xs());
    fit_with_gram(data, &g, config)
}

/// [`fit_krr`] with a precomputed Gram matrix of `data`'s points.
pub fn fit_with_gram(data: &Dataset, gram: &DMatrix<f64>, config: &PermConfig) -> Result<KrrModel> {
    config.validate()?;
    if gram.nrows() != data.len() || gram.ncols() != data.len() {
        return Err(Error::invalid("gram matrix does not match the dataset"));
    }
    let system = RidgeSystem::new(gram, config.h)?;
    let (alpha, b) = system.coefficients(data.ys(), config.intercept);
    let g_alpha = gram * &alpha;
    let rkhs_norm_sq = alpha.dot(&g_alpha).max(0.0);
    let fitted = g_alpha.iter().map(|v| v + b).collect();
    Ok(KrrModel {
        config: *config,
        expansion: KernelExpansion {
            kernel: config.kernel,
            points: data.xs().to_vec(),
            coeffs: alpha.iter().copied().collect(),
            intercept: b,
            clamp: config.clamp,
        },
        rkhs_norm_sq,
        fitted,
    })
}

pub fn predict(model: &KrrModel, x: &[f64]) -> Result<f64> {
    model.predict(x)
}

/// `R_n(f) + h^2 |f|_K^2` of a fitted model on `data`.
pub fn penalized_objective(model: &KrrModel, data: &Dataset) -> f64 {
    empirical_risk(&|x| model.value(x), data) + model.config.h * model.config.h * model.rkhs_norm_sq
}

/// The linear smoother `S` with fitted values `S Y`; equal to
/// `G (G + n h^2 I)^-1` without intercept.
pub fn hat_matrix(data: &Dataset, config: &PermConfig) -> Result<DMatrix<f64>> {
    check_inputs(data, config)?;
    let g = kernels::gram_unchecked(&config.kernel, data.xs());
    hat_from_gram(&g, config)
}

fn hat_from_gram(gram: &DMatrix<f64>, config: &PermConfig) -> Result<DMatrix<f64>> {
    let system = RidgeSystem::new(gram, config.h)?;
    let mut s = system.projector(config.intercept) * -system.ridge;
    for i in 0..s.nrows() {
        s[(i, i)] += 1.0;
    }
    Ok(s)
}

/// Residuals and leverages `1 - S_ii` of the smoother.
struct SmootherFit {
    residuals: Vec<f64>,
    one_minus_leverage: Vec<f64>,
}

fn smoother_fit(gram: &DMatrix<f64>, ys: &[f64], config: &PermConfig) -> Result<SmootherFit> {
    let system = RidgeSystem::new(gram, config.h)?;
    let p = system.projector(config.intercept);
    let alpha = &p * DVector::from_column_slice(ys);
    let ridge = system.ridge;
    Ok(SmootherFit {
        residuals: alpha.iter().map(|a| ridge * a).collect(),
        one_minus_leverage: p.diagonal().iter().map(|v| ridge * v).collect(),
    })
}

/// Leverages closer than this to 1 make the smoother degenerate.
const LEVERAGE_SLACK: f64 = 1e-10;

/// Exact leave-one-out score `(1/n) sum ((Y_i - f(X_i)) / (1 - S_ii))^2`.
pub fn loocv_score(data: &Dataset, config: &PermConfig) -> Result<f64> {
    check_inputs(data, config)?;
    let g = kernels::gram_unchecked(&config.kernel, data.xs());
    loocv_from_gram(&g, data.ys(), config)
}

fn loocv_from_gram(gram: &DMatrix<f64>, ys: &[f64], config: &PermConfig) -> Result<f64> {
    let n = ys.len();
    if n < 2 {
        return Err(Error::invalid("leave-one-out needs at least 2 observations"));
    }
    let fit = smoother_fit(gram, ys, config)?;
    let mut acc = 0.0;
    for (i, (e, gap)) in fit.residuals.iter().zip(&fit.one_minus_leverage).enumerate() {
        if !(*gap > LEVERAGE_SLACK) {
            return Err(Error::DegenerateSmoother(format!(
                "leverage S_{i}{i} = {} is too close to 1",
                1.0 - gap
            )));
        }
        let loo = e / gap;
        acc += loo * loo;
    }
    Ok(acc / n as f64)
}

/// Generalized cross-validation `n RSS / (n - tr S)^2`.
pub fn gcv_score(data: &Dataset, config: &PermConfig) -> Result<f64> {
    check_inputs(data, config)?;
    let g = kernels::gram_unchecked(&config.kernel, data.xs());
    gcv_from_gram(&g, data.ys(), config)
}

fn gcv_from_gram(gram: &DMatrix<f64>, ys: &[f64], config: &PermConfig) -> Result<f64> {
    let n = ys.len() as f64;
    let fit = smoother_fit(gram, ys, config)?;
    let rss: f64 = fit.residuals.iter().map(|e| e * e).sum();
    // n - tr S = n h^2 tr P
    let dof_gap: f64 = fit.one_minus_leverage.iter().sum();
    if !(dof_gap > LEVERAGE_SLACK * n) {
        return Err(Error::DegenerateSmoother(format!(
            "trace of the smoother {} is too close to n = {n}",
            n - dof_gap
        )));
    }
    Ok(n * rss / (dof_gap * dof_gap))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Loocv,
    Gcv,
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cv" | "loocv" => Ok(Criterion::Loocv),
            "gcv" => Ok(Criterion::Gcv),
            other => Err(Error::Config(format!("unknown criterion '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub h: f64,
    /// Criterion per grid point, in grid order; degenerate points score `+inf`.
    pub scores: Vec<f64>,
}

/// Minimizes LOOCV or GCV over `h_grid`; ties go to the smallest `h`.
/// `template` supplies the kernel, intercept and clamp settings.
pub fn select_h(
    data: &Dataset,
    template: &PermConfig,
    h_grid: &[f64],
    criterion: Criterion,
) -> Result<Selection> {
    if h_grid.is_empty() {
        return Err(Error::invalid("h grid is empty"));
    }
    if h_grid.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
        return Err(Error::invalid("h grid must contain positive values"));
    }
    check_inputs(data, template)?;
    let g = kernels::gram_unchecked(&template.kernel, data.xs());
    let scores: Vec<f64> = h_grid
        .iter()
        .map(|&h| {
            let config = template.with_h(h);
            let score = match criterion {
                Criterion::Loocv => loocv_from_gram(&g, data.ys(), &config),
                Criterion::Gcv => gcv_from_gram(&g, data.ys(), &config),
            };
            match score {
                Ok(s) if s.is_finite() => s,
                _ => f64::INFINITY,
            }
        })
        .collect();
    let mut best: Option<(f64, f64)> = None;
    for (&h, &s) in h_grid.iter().zip(&scores) {
        if !s.is_finite() {
            continue;
        }
        best = match best {
            Some((bh, bs)) if bs < s || (bs == s && bh <= h) => Some((bh, bs)),
            _ => Some((h, s)),
        };
    }
    best.map(|(h, _)| Selection { h, scores })
        .ok_or(Error::Selection)
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || count == 0 {
        return Err(Error::invalid(format!("bad log grid [{lo}, {hi}] x {count}")));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..count)
        .map(|k| {
            if k == count - 1 {
                hi
            } else {
                (a + (b - a) * k as f64 / (count - 1) as f64).exp()
            }
        })
        .collect())
}
