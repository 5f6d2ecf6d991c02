//! Reproducing kernels and their Gram matrices, plus a power-law fit of the
//! Gram spectrum used to pick bandwidths from an estimated eigen-decay.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::BoxDomain;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum KernelFamily {
    /// `exp(-|x - y|^2 / (2 w^2))`.
    Gaussian { width: f64 },
    /// `m^2 (3 M - m) / 6` with `m = min(s, t)`, `M = max(s, t)`: the kernel
    /// of the second-order Sobolev space of functions vanishing with their
    /// derivative at the left end of the interval.
    CubicSpline,
    /// `min(s, t)`.
    Brownian,
    /// `<x, y>`.
    Linear,
}

/// A kernel family on `R^d`. The spline and Brownian families live on an
/// interval `[lo, hi]` (default `[0, 1]`) that is mapped affinely onto
/// `[0, 1]` before evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub d: usize,
    #[serde(default = "unit_interval")]
    pub interval: (f64, f64),
}

fn unit_interval() -> (f64, f64) {
    (0.0, 1.0)
}

impl KernelSpec {
    pub fn gaussian(width: f64, d: usize) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::invalid(format!("gaussian width must be positive, got {width}")));
        }
        Self::new(KernelFamily::Gaussian { width }, d)
    }

    pub fn cubic_spline() -> Self {
        Self {
            family: KernelFamily::CubicSpline,
            d: 1,
            interval: unit_interval(),
        }
    }

    pub fn brownian() -> Self {
        Self {
            family: KernelFamily::Brownian,
            d: 1,
            interval: unit_interval(),
        }
    }

    pub fn linear(d: usize) -> Result<Self> {
        Self::new(KernelFamily::Linear, d)
    }

    pub fn new(family: KernelFamily, d: usize) -> Result<Self> {
        let spec = Self {
            family,
            d,
            interval: unit_interval(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Rescales an interval-based family to live on `[lo, hi]`.
    pub fn on_interval(mut self, lo: f64, hi: f64) -> Result<Self> {
        self.interval = (lo, hi);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::invalid("kernel dimension must be at least 1"));
        }
        match self.family {
            KernelFamily::Gaussian { width } if !(width.is_finite() && width > 0.0) => {
                Err(Error::invalid(format!("gaussian width must be positive, got {width}")))
            }
            KernelFamily::CubicSpline | KernelFamily::Brownian if self.d != 1 => Err(Error::invalid(
                "spline and brownian kernels are one-dimensional",
            )),
            _ => {
                let (lo, hi) = self.interval;
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::invalid(format!("bad kernel interval [{lo}, {hi}]")));
                }
                Ok(())
            }
        }
    }

    /// Region on which the kernel is a reproducing kernel.
    pub fn domain(&self) -> BoxDomain {
        match self.family {
            KernelFamily::CubicSpline | KernelFamily::Brownian => {
                BoxDomain::cube(1, self.interval.0, self.interval.1)
            }
            _ => BoxDomain::cube(self.d, f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::Domain {
                point: x.to_vec(),
                domain: format!("R^{}", self.d),
            });
        }
        self.domain().check(x)
    }

    pub fn check_all(&self, points: &[f64]) -> Result<()> {
        points.chunks_exact(self.d).try_for_each(|x| self.check(x))
    }

    fn unit(&self, s: f64) -> f64 {
        (s - self.interval.0) / (self.interval.1 - self.interval.0)
    }

    /// `K(x, y)` without the domain check.
    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.family {
            KernelFamily::Gaussian { width } => {
                let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-sq / (2.0 * width * width)).exp()
            }
            KernelFamily::CubicSpline => {
                let (s, t) = (self.unit(x[0]), self.unit(y[0]));
                let (m, big) = if s < t { (s, t) } else { (t, s) };
                m * m * (3.0 * big - m) / 6.0
            }
            KernelFamily::Brownian => self.unit(x[0]).min(self.unit(y[0])),
            KernelFamily::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
        }
    }

    /// Kernel matrix `K(a_i, b_j)` between two flat point buffers.
    pub fn cross(&self, a: &[f64], b: &[f64]) -> DMatrix<f64> {
        let d = self.d;
        let (na, nb) = (a.len() / d, b.len() / d);
        DMatrix::from_fn(na, nb, |i, j| self.eval(&a[i * d..(i + 1) * d], &b[j * d..(j + 1) * d]))
    }
}

/// Gram matrix `G[i][j] = K(p_i, p_j)` on a flat buffer of `d`-vectors.
/// Only the upper triangle is evaluated, so the result is exactly symmetric.
pub fn gram(kernel: &KernelSpec, points: &[f64]) -> Result<DMatrix<f64>> {
    kernel.validate()?;
    if points.len() % kernel.d != 0 {
        return Err(Error::invalid("point buffer length is not a multiple of the dimension"));
    }
    kernel.check_all(points)?;
    Ok(gram_unchecked(kernel, points))
}

pub(crate) fn gram_unchecked(kernel: &KernelSpec, points: &[f64]) -> DMatrix<f64> {
    let d = kernel.d;
    let n = points.len() / d;
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        let xi = &points[i * d..(i + 1) * d];
        for j in i..n {
            let v = kernel.eval(xi, &points[j * d..(j + 1) * d]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// Power-law fit `lambda_k ~ exp(c) k^(-l)` of a Gram spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumFit {
    /// Eigenvalues of `G / n`, descending, negatives clipped to 0.
    pub eigenvalues: Vec<f64>,
    pub decay_exponent: f64,
    pub intercept: f64,
    /// One-based inclusive index range used by the fit.
    pub fit_range: (usize, usize),
    /// Residual sum of squares of the log-log regression.
    pub residual: f64,
}

/// Default fit range `2..=floor(n / 4)`.
pub fn default_fit_range(n: usize) -> (usize, usize) {
    (2, (n / 4).max(2))
}

/// Eigen-decomposes `G / n` and regresses `log lambda_k` on `log k` over
/// `fit_range` (one-based, inclusive; defaults to [`default_fit_range`]).
/// Non-positive eigenvalues inside the range are skipped.
pub fn estimate_decay(
    gram: &DMatrix<f64>,
    n: usize,
    fit_range: Option<(usize, usize)>,
) -> Result<SpectrumFit> {
    if !gram.is_square() || gram.nrows() == 0 {
        return Err(Error::invalid("gram matrix must be square and nonempty"));
    }
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    let size = gram.nrows();
    let (k_min, k_max) = fit_range.unwrap_or_else(|| default_fit_range(size));
    if k_min < 1 || k_min > k_max || k_max > size {
        return Err(Error::invalid(format!(
            "fit range ({k_min}, {k_max}) outside [1, {size}]"
        )));
    }
    let scaled = gram / n as f64;
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(scaled).eigenvalues.iter().map(|v| v.max(0.0)).collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    let points: Vec<(f64, f64)> = (k_min..=k_max)
        .filter(|&k| eigenvalues[k - 1] > 0.0)
        .map(|k| ((k as f64).ln(), eigenvalues[k - 1].ln()))
        .collect();
    if points.len() < 3 {
        return Err(Error::InsufficientSpectrum {
            found: points.len(),
            range: (k_min, k_max),
        });
    }
    let (slope, intercept, residual) = least_squares_line(&points);
    Ok(SpectrumFit {
        eigenvalues,
        decay_exponent: -slope,
        intercept,
        fit_range: (k_min, k_max),
        residual,
    })
}

/// Eigen-decay fit for a spectrum that is already known.
pub fn fit_power_law(eigenvalues: &[f64], fit_range: (usize, usize)) -> Result<SpectrumFit> {
    let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(eigenvalues));
    estimate_decay(&diag, 1, Some(fit_range))
}

fn least_squares_line(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let m = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
    let my = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = points
        .iter()
        .map(|(x, y)| {
            let e = y - intercept - slope * x;
            e * e
        })
        .sum();
    (slope, intercept, residual)
}

/// Bandwidth `a n^(-l / (2l + 1))` matched to eigen-decay exponent `l`.
pub fn bandwidth_from_decay(l: f64, n: usize, a: f64) -> Result<f64> {
    if !(l > 0.5) {
        return Err(Error::OutOfRegime {
            name: "l",
            value: l,
            requirement: "l > 1/2",
        });
    }
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::invalid(format!("bandwidth constant must be positive, got {a}")));
    }
    Ok(a * (n as f64).powf(-l / (2.0 * l + 1.0)))
}
