use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method};
use crate::aggregation::{erm_select, fit_aggregate, jackknife_aggregate, AggregationConfig};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::perm::{fit_krr, select_h, KernelExpansion, Predictor};
use crate::regression::{calibrate_sigma, quadrature, simulate_dataset, Dataset, NoiseModel};
use crate::seed::{derive_path, derive_seed};

/// Stream indices under a dataset seed.
const SPLIT_STREAM: u64 = 1;

/// One replication's risk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepRisk {
    pub rep: usize,
    pub risk: f64,
}

/// Monte Carlo summary for one `(method, n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: Method,
    pub n: usize,
    pub mise_mean: f64,
    /// Sample standard deviation across replications (0 with one replication).
    pub mise_sd: f64,
    pub per_rep: Vec<RepRisk>,
}

impl CellSummary {
    pub fn from_reps(method: Method, n: usize, per_rep: Vec<RepRisk>) -> Self {
        let (mise_mean, mise_sd) = mean_sd(per_rep.iter().map(|r| r.risk));
        Self {
            method,
            n,
            mise_mean,
            mise_sd,
            per_rep,
        }
    }
}

pub fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let k = values.clone().count();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.clone().sum::<f64>() / k as f64;
    if k == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (k - 1) as f64).sqrt())
}

/// A replication that raised an error; it is left out of the summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub method: Method,
    pub n: usize,
    pub rep: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub sigma: f64,
    pub master_seed: u64,
    pub version: String,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub metadata: ReportMetadata,
    pub cells: Vec<CellSummary>,
    pub failures: Vec<Failure>,
}

impl RiskReport {
    pub fn cell(&self, method: Method, n: usize) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.method == method && c.n == n)
    }
}

/// Everything a replication needs that does not depend on the data.
struct Bench {
    kernel: KernelSpec,
    config: ExperimentConfig,
    agg: AggregationConfig,
    j: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    truth: Vec<f64>,
}

impl Bench {
    fn risk(&self, e: &KernelExpansion) -> f64 {
        let d = e.kernel.d;
        self.nodes
            .chunks_exact(d)
            .zip(&self.weights)
            .zip(&self.truth)
            .map(|((x, w), f)| {
                let r = e.value(x) - f;
                w * r * r
            })
            .sum()
    }

    fn fit(&self, method: Method, data: &Dataset, seed: u64) -> Result<KernelExpansion> {
        let grid = self.config.perm_grid(self.kernel, data.len())?;
        let split_seed = derive_seed(seed, SPLIT_STREAM);
        let collapse = |e: Option<KernelExpansion>| e.ok_or_else(|| Error::invalid("mixture does not collapse"));
        match method {
            Method::Gcv | Method::Cv => {
                let criterion = method.criterion().expect("selection method");
                let h_values: Vec<f64> = grid.iter().map(|c| c.h).collect();
                let sel = select_h(data, &grid[0], &h_values, criterion)?;
                Ok(fit_krr(data, &grid[0].with_h(sel.h))?.expansion)
            }
            Method::Aggregate => collapse(fit_aggregate(data, &grid, &self.agg, split_seed)?.to_expansion()),
            Method::AggregateJackknife => {
                collapse(jackknife_aggregate(data, &grid, &self.agg, self.j, split_seed)?.to_expansion(data))
            }
            Method::ErmOnGrid => {
                let agg = fit_aggregate(data, &grid, &self.agg, split_seed)?;
                let k = erm_select(&agg.weights.source_risks);
                Ok(agg.candidates[k].expansion.clone())
            }
        }
    }
}

/// Simulates `reps` datasets per sample size and scores every method on each
/// (a paired design). Dataset `(n, rep)` uses seed `derive_path(master, [n, rep])`;
/// replications run in parallel and are collected in order, so the report
/// does not depend on the thread count.
pub fn run_mise_benchmark(config: &ExperimentConfig) -> Result<RiskReport> {
    config.validate()?;
    let target = config.target_function()?;
    let design = config.design.build()?;
    let sigma = match config.sigma {
        Some(s) => s,
        None => calibrate_sigma(&target, &design, config.rsnr)?,
    };
    let noise = NoiseModel::gaussian(sigma)?;
    let kernel = config.kernel_spec(&design)?;
    let (nodes, weights) = quadrature(&design, &config.eval_spec.resolve(&design))?;
    let truth = nodes.chunks_exact(design.dim()).map(|x| target.value(x)).collect();
    let bench = Bench {
        kernel,
        config: config.clone(),
        agg: config.aggregation(),
        j: config.j,
        nodes,
        weights,
        truth,
    };

    let jobs: Vec<(usize, usize)> = config
        .n_list
        .iter()
        .flat_map(|&n| (0..config.reps).map(move |r| (n, r)))
        .collect();
    let outcomes: Vec<Vec<std::result::Result<f64, (u64, String)>>> = jobs
        .par_iter()
        .map(|&(n, rep)| {
            let seed = derive_path(config.master_seed, &[n as u64, rep as u64]);
            let data = match simulate_dataset(&target, &design, &noise, n, seed) {
                Ok(d) => d,
                Err(e) => return vec![Err((seed, e.to_string())); config.methods.len()],
            };
            config
                .methods
                .iter()
                .map(|&m| {
                    bench
                        .fit(m, &data, seed)
                        .map(|e| bench.risk(&e))
                        .map_err(|e| (seed, e.to_string()))
                })
                .collect()
        })
        .collect();

    let mut cells = Vec::new();
    let mut failures = Vec::new();
    for (mi, &method) in config.methods.iter().enumerate() {
        for &n in &config.n_list {
            let mut per_rep = Vec::with_capacity(config.reps);
            for ((jn, rep), out) in jobs.iter().zip(&outcomes) {
                if *jn != n {
                    continue;
                }
                match &out[mi] {
                    Ok(risk) => per_rep.push(RepRisk { rep: *rep, risk: *risk }),
                    Err((seed, message)) => failures.push(Failure {
                        method,
                        n,
                        rep: *rep,
                        seed: *seed,
                        message: message.clone(),
                    }),
                }
            }
            cells.push(CellSummary::from_reps(method, n, per_rep));
        }
    }
    Ok(RiskReport {
        metadata: ReportMetadata {
            sigma,
            master_seed: config.master_seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
        },
        cells,
        failures,
    })
}
