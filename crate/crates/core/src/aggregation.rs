//! Aggregation with exponential weights.
//!
//! A dictionary of penalized least-squares fits is built on a training part
//! of the sample, the fits are frozen, and each receives the weight
//! `exp(-l R_l(f) / T) / Z` from its empirical risk `R_l` on the remaining
//! `l` observations. The temperature `T` is picked from a finite set by
//! least squares, and averaging aggregates over independent splits gives
//! the jackknifed estimate.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{self, KernelSpec};
use crate::perm::{self, KernelExpansion, KrrModel, PermConfig, Predictor};
use crate::regression::Dataset;
use crate::seed;

/// Normalized exponential weights and the inputs that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    pub temperature: f64,
    pub source_risks: Vec<f64>,
}

impl WeightVector {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Index of the largest weight. Ties go to the smaller source risk, then
    /// to the smaller index, which is exactly the [`erm_select`] rule.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for i in 1..self.weights.len() {
            let (w, bw) = (self.weights[i], self.weights[best]);
            if w > bw || (w == bw && self.source_risks[i] < self.source_risks[best]) {
                best = i;
            }
        }
        best
    }
}

fn check_risks(risks: &[f64]) -> Result<()> {
    if risks.is_empty() {
        return Err(Error::invalid("risk vector is empty"));
    }
    if risks.iter().any(|r| !r.is_finite()) {
        return Err(Error::invalid("risks must be finite"));
    }
    Ok(())
}

/// `theta_j = exp(-n_learn risks_j / T) / Z`, evaluated after subtracting the
/// smallest risk so every exponent is `<= 0`.
pub fn exp_weights(risks: &[f64], n_learn: usize, temperature: f64) -> Result<WeightVector> {
    check_risks(risks)?;
    if n_learn == 0 {
        return Err(Error::invalid("learning sample size must be positive"));
    }
    if !(temperature > 0.0) {
        return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
    }
    let min = risks.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = n_learn as f64 / temperature;
    let raw: Vec<f64> = risks.iter().map(|r| (-(scale * (r - min))).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(WeightVector {
        weights: raw.iter().map(|w| w / total).collect(),
        temperature,
        source_risks: risks.to_vec(),
    })
}

/// Index of the smallest risk, first one on ties.
pub fn erm_select(risks: &[f64]) -> usize {
    let mut best = 0;
    for (i, r) in risks.iter().enumerate().skip(1) {
        if *r < risks[best] {
            best = i;
        }
    }
    best
}

/// The default temperature set `{10, 20, ..., 100}`.
pub fn default_temperatures() -> Vec<f64> {
    (1..=10).map(|k| 10.0 * k as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureSelection {
    pub temperature: f64,
    pub weights: WeightVector,
    /// Residual sum of squares of the aggregate for each temperature, in
    /// `t_set` order.
    pub scores: Vec<f64>,
}

/// Temperature selection from precomputed candidate predictions:
/// `predictions[c][i]` is candidate `c` at scoring point `i`, `ys` the
/// scoring responses and `risks` the learning-sample risks.
pub fn select_temperature_from_predictions(
    predictions: &[Vec<f64>],
    ys: &[f64],
    risks: &[f64],
    n_learn: usize,
    t_set: &[f64],
) -> Result<TemperatureSelection> {
    if t_set.is_empty() {
        return Err(Error::invalid("temperature set is empty"));
    }
    if predictions.len() != risks.len() || predictions.iter().any(|p| p.len() != ys.len()) {
        return Err(Error::invalid("prediction table does not match risks and responses"));
    }
    let mut scores = Vec::with_capacity(t_set.len());
    let mut best: Option<(f64, f64, WeightVector)> = None;
    let mut mix = vec![0.0; ys.len()];
    for &t in t_set {
        let weights = exp_weights(risks, n_learn, t)?;
        mix.iter_mut().for_each(|v| *v = 0.0);
        for (w, pred) in weights.weights.iter().zip(predictions) {
            for (m, p) in mix.iter_mut().zip(pred) {
                *m += w * p;
            }
        }
        let score: f64 = ys.iter().zip(&mix).map(|(y, m)| (y - m) * (y - m)).sum();
        scores.push(score);
        let better = match &best {
            None => true,
            Some((bt, bs, _)) => score < *bs || (score == *bs && t < *bt),
        };
        if better {
            best = Some((t, score, weights));
        }
    }
    let (temperature, _, weights) = best.expect("nonempty temperature set");
    Ok(TemperatureSelection {
        temperature,
        weights,
        scores,
    })
}

/// Picks `T` in `t_set` minimizing `sum_i (Y_i - f^(T)(X_i))^2` over `data`,
/// where `f^(T)` mixes `candidates` with weights from `risks`.
pub fn select_temperature<P: Predictor>(
    candidates: &[P],
    risks: &[f64],
    n_learn: usize,
    data: &Dataset,
    t_set: &[f64],
) -> Result<TemperatureSelection> {
    let predictions: Vec<Vec<f64>> = candidates
        .iter()
        .map(|c| data.points().map(|x| c.value(x)).collect())
        .collect();
    select_temperature_from_predictions(&predictions, data.ys(), risks, n_learn, t_set)
}

/// Disjoint training and learning index sets, both sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub train_idx: Vec<usize>,
    pub learn_idx: Vec<usize>,
}

impl SplitPlan {
    pub fn m(&self) -> usize {
        self.train_idx.len()
    }

    pub fn l(&self) -> usize {
        self.learn_idx.len()
    }
}

/// Uniformly random training subset of size `round(frac n)`.
pub fn make_split(n: usize, frac: f64, seed: u64) -> Result<SplitPlan> {
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::Split { n, frac });
    }
    let m = (frac * n as f64).round() as usize;
    if m < 1 || m >= n {
        return Err(Error::Split { n, frac });
    }
    let mut rng = seed::rng(seed);
    let mut train_idx = rand::seq::index::sample(&mut rng, n, m).into_vec();
    train_idx.sort_unstable();
    let mut in_train = vec![false; n];
    train_idx.iter().for_each(|&i| in_train[i] = true);
    let learn_idx = (0..n).filter(|&i| !in_train[i]).collect();
    Ok(SplitPlan { train_idx, learn_idx })
}

/// Which observations score the temperatures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemperatureSample {
    #[default]
    Train,
    Learn,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationConfig {
    pub t_set: Vec<f64>,
    pub split_frac: f64,
    #[serde(default)]
    pub temperature_sample: TemperatureSample,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        Self {
            t_set: default_temperatures(),
            split_frac: 0.75,
            temperature_sample: TemperatureSample::Train,
        }
    }
}

/// A convex combination of penalized least-squares fits.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateModel {
    pub candidates: Vec<KrrModel>,
    pub weights: WeightVector,
    /// Indices, into the full sample, of the points the candidates were fit on.
    pub train_idx: Vec<usize>,
}

impl AggregateModel {
    /// Collapses the mixture into a single kernel expansion over the
    /// training points; `None` when candidates differ in kernel or clip.
    pub fn to_expansion(&self) -> Option<KernelExpansion> {
        let first = self.candidates.first()?;
        if self
            .candidates
            .iter()
            .any(|c| c.config.kernel != first.config.kernel || c.config.clamp.is_some())
        {
            return None;
        }
        let mut out = KernelExpansion::zero(first.config.kernel, first.train_points().to_vec());
        for (c, w) in self.candidates.iter().zip(&self.weights.weights) {
            for (o, a) in out.coeffs.iter_mut().zip(c.dual_coeffs()) {
                *o += w * a;
            }
            out.intercept += w * c.intercept_value();
        }
        Some(out)
    }
}

impl Predictor for AggregateModel {
    fn value(&self, x: &[f64]) -> f64 {
        self.candidates
            .iter()
            .zip(&self.weights.weights)
            .map(|(c, w)| w * c.value(x))
            .sum()
    }
}

fn check_grid(grid: &[PermConfig]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid("parameter grid is empty"));
    }
    Ok(())
}

/// Steps 2 and 3 for a given split: fit every grid point on the training
/// part, score the frozen fits on the learning part and mix them.
pub fn aggregate_from_plan(
    data: &Dataset,
    grid: &[PermConfig],
    config: &AggregationConfig,
    plan: &SplitPlan,
) -> Result<AggregateModel> {
    check_grid(grid)?;
    let train = data.subset(&plan.train_idx)?;
    let learn = data.subset(&plan.learn_idx)?;
    if train.is_empty() || learn.is_empty() {
        return Err(Error::Split {
            n: data.len(),
            frac: config.split_frac,
        });
    }
    let mut cache: HashMap<String, (DMatrix<f64>, DMatrix<f64>)> = HashMap::new();
    let mut candidates = Vec::with_capacity(grid.len());
    let mut learn_preds = Vec::with_capacity(grid.len());
    for (index, pc) in grid.iter().enumerate() {
        let wrap = |e: Error| Error::Candidate {
            index,
            h: pc.h,
            source: Box::new(e),
        };
        let key = format!("{:?}", pc.kernel);
        if !cache.contains_key(&key) {
            kernels::gram(&pc.kernel, train.xs()).map_err(wrap)?;
            pc.kernel.check_all(learn.xs()).map_err(wrap)?;
            let g = kernels::gram_unchecked(&pc.kernel, train.xs());
            let cross = pc.kernel.cross(learn.xs(), train.xs());
            cache.insert(key.clone(), (g, cross));
        }
        let (g, cross) = &cache[&key];
        let model = perm::fit_with_gram(&train, g, pc).map_err(wrap)?;
        let alpha = DVector::from_column_slice(model.dual_coeffs());
        let clip = |v: f64| pc.clamp.map_or(v, |q| v.clamp(-q, q));
        let pred: Vec<f64> = (cross * alpha)
            .iter()
            .map(|v| clip(v + model.intercept_value()))
            .collect();
        learn_preds.push(pred);
        candidates.push(model);
    }
    let ell = learn.len();
    let risks: Vec<f64> = learn_preds
        .iter()
        .map(|p| {
            p.iter()
                .zip(learn.ys())
                .map(|(f, y)| (y - f) * (y - f))
                .sum::<f64>()
                / ell as f64
        })
        .collect();
    let train_preds = || -> Vec<Vec<f64>> {
        candidates
            .iter()
            .map(|c| {
                c.fitted
                    .iter()
                    .map(|v| c.config.clamp.map_or(*v, |q| v.clamp(-q, q)))
                    .collect()
            })
            .collect()
    };
    let selection = match config.temperature_sample {
        TemperatureSample::Train => {
            select_temperature_from_predictions(&train_preds(), train.ys(), &risks, ell, &config.t_set)?
        }
        TemperatureSample::Learn => {
            select_temperature_from_predictions(&learn_preds, learn.ys(), &risks, ell, &config.t_set)?
        }
        TemperatureSample::Full => {
            let tp = train_preds();
            let full: Vec<Vec<f64>> = tp
                .iter()
                .zip(&learn_preds)
                .map(|(t, l)| {
                    let mut row = vec![0.0; data.len()];
                    plan.train_idx.iter().zip(t).for_each(|(&i, v)| row[i] = *v);
                    plan.learn_idx.iter().zip(l).for_each(|(&i, v)| row[i] = *v);
                    row
                })
                .collect();
            select_temperature_from_predictions(&full, data.ys(), &risks, ell, &config.t_set)?
        }
    };
    Ok(AggregateModel {
        candidates,
        weights: selection.weights,
        train_idx: plan.train_idx.clone(),
    })
}

/// Split with `seed`, then [`aggregate_from_plan`].
pub fn fit_aggregate(
    data: &Dataset,
    grid: &[PermConfig],
    config: &AggregationConfig,
    seed: u64,
) -> Result<AggregateModel> {
    let plan = make_split(data.len(), config.split_frac, seed)?;
    aggregate_from_plan(data, grid, config, &plan)
}

/// Mean of aggregates built on independent splits.
#[derive(Debug, Clone, PartialEq)]
pub struct JackknifeModel {
    pub aggregates: Vec<AggregateModel>,
}

impl JackknifeModel {
    pub fn from_aggregates(aggregates: Vec<AggregateModel>) -> Result<Self> {
        if aggregates.is_empty() {
            return Err(Error::invalid("jackknife needs at least one aggregate"));
        }
        Ok(Self { aggregates })
    }

    /// Collapses the average into one kernel expansion over the points of
    /// `data` (the sample every split was drawn from).
    pub fn to_expansion(&self, data: &Dataset) -> Option<KernelExpansion> {
        let kernel: KernelSpec = self.aggregates.first()?.candidates.first()?.config.kernel;
        let mut mean = KernelExpansion::zero(kernel, data.xs().to_vec());
        let mut full = vec![0.0; data.len()];
        for (j, agg) in self.aggregates.iter().enumerate() {
            let e = agg.to_expansion()?;
            if e.kernel != kernel {
                return None;
            }
            full.iter_mut().for_each(|v| *v = 0.0);
            agg.train_idx.iter().zip(&e.coeffs).for_each(|(&i, c)| full[i] = *c);
            let k = (j + 1) as f64;
            for (m, c) in mean.coeffs.iter_mut().zip(&full) {
                *m += (c - *m) / k;
            }
            mean.intercept += (e.intercept - mean.intercept) / k;
        }
        Some(mean)
    }
}

impl Predictor for JackknifeModel {
    /// Running mean in index order, so `J` identical aggregates reproduce
    /// the single aggregate bit for bit.
    fn value(&self, x: &[f64]) -> f64 {
        let mut mean = 0.0;
        for (j, agg) in self.aggregates.iter().enumerate() {
            mean += (agg.value(x) - mean) / (j + 1) as f64;
        }
        mean
    }
}

/// Averages `j_count` aggregates, the `j`-th split seeded with
/// `derive_seed(seed, j)`. Aggregates are built in parallel and averaged
/// in index order.
pub fn jackknife_aggregate(
    data: &Dataset,
    grid: &[PermConfig],
    config: &AggregationConfig,
    j_count: usize,
    seed: u64,
) -> Result<JackknifeModel> {
    if j_count == 0 {
        return Err(Error::invalid("jackknife repetitions must be at least 1"));
    }
    let aggregates = (0..j_count)
        .into_par_iter()
        .map(|j| fit_aggregate(data, grid, config, seed::derive_seed(seed, j as u64)))
        .collect::<Result<Vec<_>>>()?;
    JackknifeModel::from_aggregates(aggregates)
}

/// `(l, a n^(-l / (2l + 1)))` for `l` stepping by `1 / log n` from `l_min`;
/// the last step is clipped so the grid ends at `l_max`.
pub fn build_rkhs_grid(l_min: f64, l_max: f64, n: usize, a: f64) -> Result<Vec<(f64, f64)>> {
    if !(l_min > 0.5) {
        return Err(Error::OutOfRegime {
            name: "l_min",
            value: l_min,
            requirement: "l_min > 1/2",
        });
    }
    if !(l_max >= l_min && l_max.is_finite()) {
        return Err(Error::invalid(format!("need l_min <= l_max, got [{l_min}, {l_max}]")));
    }
    if n < 3 {
        return Err(Error::invalid("n must be at least 3"));
    }
    let step = 1.0 / (n as f64).ln();
    let tol = 1e-12 * l_max.abs().max(1.0);
    let mut ls = Vec::new();
    let mut k = 0usize;
    loop {
        let l = l_min + k as f64 * step;
        if l >= l_max - tol {
            break;
        }
        ls.push(l);
        k += 1;
    }
    ls.push(l_max);
    ls.into_iter()
        .map(|l| kernels::bandwidth_from_decay(l, n, a).map(|h| (l, h)))
        .collect()
}

/// `1 / s_bar = (1/d) sum 1 / s_i`.
pub fn harmonic_mean(s: &[f64]) -> f64 {
    s.len() as f64 / s.iter().map(|v| 1.0 / v).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothnessPoint {
    pub s: Vec<f64>,
    pub harmonic_mean: f64,
    /// Complexity `d / s_bar`.
    pub beta: f64,
    /// `n^(-s_bar / (2 s_bar + d))`.
    pub bandwidth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothnessGrid {
    pub d: usize,
    pub s_min: Vec<f64>,
    pub s_max: Vec<f64>,
    pub step_counts: Vec<usize>,
    /// Cartesian product, last axis varying fastest.
    pub points: Vec<SmoothnessPoint>,
}

/// Per-axis points `s_i^min + k / log n`, `1 <= k <= floor((s_i^max - s_i^min) log n)`.
pub fn besov_axis_count(s_min: f64, s_max: f64, n: usize) -> usize {
    ((s_max - s_min) * (n as f64).ln()).floor() as usize
}

/// Uniform discretization of the smoothness box `prod [s_i^min, s_i^max]`
/// with step `1 / log n`.
pub fn build_besov_grid(s_min: &[f64], s_max: &[f64], n: usize) -> Result<SmoothnessGrid> {
    let d = s_min.len();
    if d == 0 || s_max.len() != d {
        return Err(Error::invalid("s_min and s_max must be nonempty and of equal length"));
    }
    if s_min.iter().zip(s_max).any(|(lo, hi)| !(*lo > 0.0 && hi >= lo && hi.is_finite())) {
        return Err(Error::invalid("need 0 < s_min <= s_max coordinatewise"));
    }
    if n < 3 {
        return Err(Error::invalid("n must be at least 3"));
    }
    let log_n = (n as f64).ln();
    let step = 1.0 / log_n;
    let mut axes = Vec::with_capacity(d);
    for (axis, (lo, hi)) in s_min.iter().zip(s_max).enumerate() {
        let count = besov_axis_count(*lo, *hi, n);
        if count == 0 {
            return Err(Error::EmptyGrid {
                axis,
                width: hi - lo,
                step,
            });
        }
        axes.push((1..=count).map(|k| lo + k as f64 / log_n).collect::<Vec<f64>>());
    }
    let step_counts: Vec<usize> = axes.iter().map(Vec::len).collect();
    let total: usize = step_counts.iter().product();
    let nf = n as f64;
    let df = d as f64;
    let points = (0..total)
        .map(|mut flat| {
            let mut s = vec![0.0; d];
            for i in (0..d).rev() {
                s[i] = axes[i][flat % step_counts[i]];
                flat /= step_counts[i];
            }
            let hm = harmonic_mean(&s);
            SmoothnessPoint {
                beta: df / hm,
                bandwidth: nf.powf(-hm / (2.0 * hm + df)),
                harmonic_mean: hm,
                s,
            }
        })
        .collect();
    Ok(SmoothnessGrid {
        d,
        s_min: s_min.to_vec(),
        s_max: s_max.to_vec(),
        step_counts,
        points,
    })
}
