//! A dictionary on which empirical risk minimization cannot beat the
//! `sqrt(log M / n)` excess-risk rate.
//!
//! `X` is uniform on `[0, 1]`, read through its binary digits
//! `X^(1), X^(2), ...`, which are i.i.d. fair bits. The dictionary is
//! `f_j(x) = 2 x^(j) - 1`, `j = 1..M`, and the regression function is
//! `f0 = 2h` when `x^(M) = 1` and `h` otherwise, with
//! `h = (C / 4) sqrt(log M / n)`. The `f_j` are orthonormal in `L^2` and
//! `f0 = 3h/2 + (h/2) f_M`, so every risk has a closed form:
//! `||sum theta_j f_j - f0||^2 = sum theta_j^2 - h theta_M + 5h^2/2`.
//! Only the first `M` digits are ever drawn, since nothing depends on the
//! others.

use rand::{Rng as _, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::aggregation::{erm_select, select_temperature_from_predictions};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DyadicSetup {
    pub m: usize,
    pub n: usize,
    pub c: f64,
    pub sigma: f64,
    pub h: f64,
}

/// Builds the setup for dictionary size `m`, sample size `n`, constant `c`
/// and noise level `sigma`.
pub fn make_setup(m: usize, n: usize, c: f64, sigma: f64) -> Result<DyadicSetup> {
    if m < 2 {
        return Err(Error::invalid(format!("dictionary size must be >= 2, got {m}")));
    }
    if n == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::invalid(format!("C must be positive, got {c}")));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")));
    }
    let h = c / 4.0 * ((m as f64).ln() / n as f64).sqrt();
    Ok(DyadicSetup { m, n, c, sigma, h })
}

impl DyadicSetup {
    /// Zero-based index of the best dictionary element `f_M`.
    pub fn best_index(&self) -> usize {
        self.m - 1
    }

    /// `sqrt(log M / n)`.
    pub fn rate(&self) -> f64 {
        ((self.m as f64).ln() / self.n as f64).sqrt()
    }

    /// Whether `log((M - 1)(M - 2)) / n <= 1/4`, the range where the lower
    /// bound is stated. Outside it the construction still runs.
    pub fn in_regime(&self) -> bool {
        let prod = ((self.m - 1) * (self.m - 2)) as f64;
        prod.ln() / self.n as f64 <= 0.25
    }

    /// `||f_j - f0||^2` for zero-based `j`.
    pub fn risk(&self, j: usize) -> f64 {
        let base = 2.5 * self.h * self.h + 1.0;
        if j == self.best_index() {
            base - self.h
        } else {
            base
        }
    }

    /// `f0` as a function of digit `M`.
    pub fn target_value(&self, last_bit: u8) -> f64 {
        if last_bit == 1 {
            2.0 * self.h
        } else {
            self.h
        }
    }
}

/// `n` draws of the first `M` digits, row-major, with their responses.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicSample {
    pub m: usize,
    pub bits: Vec<u8>,
    pub ys: Vec<f64>,
}

impl DyadicSample {
    pub fn n(&self) -> usize {
        self.ys.len()
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.bits[i * self.m..(i + 1) * self.m]
    }

    /// `f_j(X_i) = 2 X_i^(j) - 1`.
    pub fn dictionary_value(&self, i: usize, j: usize) -> f64 {
        2.0 * self.bits[i * self.m + j] as f64 - 1.0
    }
}

/// Draws a sample: per observation `M` fair bits, then one Gaussian noise.
pub fn sample_dyadic(setup: &DyadicSetup, seed: u64) -> DyadicSample {
    let mut rng = seed::rng(seed);
    let m = setup.m;
    let mut bits = vec![0u8; setup.n * m];
    let mut ys = Vec::with_capacity(setup.n);
    for row in bits.chunks_exact_mut(m) {
        for chunk in row.chunks_mut(64) {
            let word = rng.next_u64();
            for (k, b) in chunk.iter_mut().enumerate() {
                *b = ((word >> k) & 1) as u8;
            }
        }
        let eps: f64 = rng.sample(StandardNormal);
        ys.push(setup.target_value(row[m - 1]) + setup.sigma * eps);
    }
    DyadicSample { m, bits, ys }
}

/// `R_n(f_j)` for every dictionary element.
pub fn dictionary_empirical_risks(sample: &DyadicSample, setup: &DyadicSetup) -> Result<Vec<f64>> {
    if sample.m != setup.m {
        return Err(Error::invalid("sample and setup disagree on M"));
    }
    let mut sse = vec![0.0; sample.m];
    for (i, y) in sample.ys.iter().enumerate() {
        for (acc, b) in sse.iter_mut().zip(sample.row(i)) {
            let e = y - (2.0 * *b as f64 - 1.0);
            *acc += e * e;
        }
    }
    let n = sample.n() as f64;
    Ok(sse.into_iter().map(|s| s / n).collect())
}

/// Exact `||sum theta_j f_j - f0||^2 = sum theta_j^2 - h theta_M + 5h^2/2`.
pub fn mixture_l2_risk(theta: &[f64], setup: &DyadicSetup) -> Result<f64> {
    if theta.len() != setup.m {
        return Err(Error::invalid(format!(
            "expected {} weights, got {}",
            setup.m,
            theta.len()
        )));
    }
    let sum: f64 = theta.iter().sum();
    if theta.iter().any(|t| !(*t >= -1e-9)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("weights are not on the simplex"));
    }
    let sq: f64 = theta.iter().map(|t| t * t).sum();
    let h = setup.h;
    Ok(sq - h * theta[setup.best_index()] + 2.5 * h * h)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErmExcess {
    /// `h * P[selected != f_M]`, estimated.
    pub excess: f64,
    pub p_not_best: f64,
    pub reps: usize,
}

fn check_reps(reps: usize) -> Result<()> {
    if reps == 0 {
        return Err(Error::invalid("need at least one replication"));
    }
    Ok(())
}

/// Monte Carlo excess risk of the (penalized) ERM over the dictionary.
/// Replication `r` uses seed `derive_seed(seed, r)`; the excess is exact
/// given the selection, so randomness enters only through the event
/// `selected != f_M`.
pub fn erm_excess_mc(setup: &DyadicSetup, reps: usize, pen: Option<&[f64]>, seed: u64) -> Result<ErmExcess> {
    check_reps(reps)?;
    if let Some(p) = pen {
        if p.len() != setup.m || p.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("penalty must have one finite entry per dictionary element"));
        }
    }
    let misses = (0..reps)
        .into_par_iter()
        .map(|r| -> Result<bool> {
            let sample = sample_dyadic(setup, seed::derive_seed(seed, r as u64));
            let mut risks = dictionary_empirical_risks(&sample, setup)?;
            if let Some(p) = pen {
                risks.iter_mut().zip(p).for_each(|(r, p)| *r += p);
            }
            Ok(erm_select(&risks) != setup.best_index())
        })
        .collect::<Result<Vec<bool>>>()?;
    let p = misses.iter().filter(|m| **m).count() as f64 / reps as f64;
    Ok(ErmExcess {
        excess: setup.h * p,
        p_not_best: p,
        reps,
    })
}

/// Excess risk of the exponential-weights aggregate in one replication;
/// the temperature is chosen on the same sample.
pub fn aggregate_excess_once(sample: &DyadicSample, setup: &DyadicSetup, t_set: &[f64]) -> Result<f64> {
    let risks = dictionary_empirical_risks(sample, setup)?;
    let predictions: Vec<Vec<f64>> = (0..setup.m)
        .map(|j| (0..sample.n()).map(|i| sample.dictionary_value(i, j)).collect())
        .collect();
    let sel = select_temperature_from_predictions(&predictions, &sample.ys, &risks, sample.n(), t_set)?;
    Ok(mixture_l2_risk(&sel.weights.weights, setup)? - setup.risk(setup.best_index()))
}

/// Monte Carlo mean excess of the aggregate, replications seeded as in
/// [`erm_excess_mc`] so the two estimates are paired.
pub fn aggregate_excess_mc(setup: &DyadicSetup, reps: usize, t_set: &[f64], seed: u64) -> Result<f64> {
    check_reps(reps)?;
    let excess = (0..reps)
        .into_par_iter()
        .map(|r| {
            let sample = sample_dyadic(setup, seed::derive_seed(seed, r as u64));
            aggregate_excess_once(&sample, setup, t_set)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(excess.iter().sum::<f64>() / reps as f64)
}
