//! Command-line front end. Exit codes: 0 success, 1 usage or configuration
//! error, 2 runtime error.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::aggregation::{self, AggregateModel, AggregationConfig};
use crate::error::{Error, Result};
use crate::experiments::{
    emit_plot_data, run_mise_benchmark, write_excess_table, write_report, ExcessRow, ExperimentConfig, HGridSpec,
    ReportFormat,
};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::perm::{self, Criterion, KernelExpansion, PermConfig, Predictor};
use crate::regression::Dataset;
use crate::seed::derive_seed;
use crate::suboptimality;

#[derive(Parser, Debug)]
#[command(name = "expagg", version, about = "Penalized least squares, exponential-weights aggregation and their benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo risk benchmark from a JSON config.
    Mise(MiseArgs),
    /// Excess risk of selection on the dyadic dictionary.
    Subopt(SuboptArgs),
    /// Fit penalized least squares to a CSV sample.
    Fit(FitArgs),
    /// Print smoothness or bandwidth grids.
    #[command(subcommand)]
    Grid(GridCommand),
}

#[derive(Args, Debug)]
struct MiseArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `reps`.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, default_value = "csv")]
    format: String,
}

#[derive(Args, Debug)]
struct SuboptArgs {
    #[arg(long = "M", value_delimiter = ',', required = true)]
    m: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long = "C", default_value_t = 4.0)]
    c: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also estimate the excess of the exponentially weighted aggregate.
    #[arg(long)]
    aggregate: bool,
    /// Directory for `excess.csv`; the table always goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// CSV with a header; the last column is the response.
    #[arg(long)]
    data: PathBuf,
    /// `cubic-spline`, `brownian`, `linear` or `gaussian:<width>`.
    #[arg(long, default_value = "cubic-spline")]
    kernel: String,
    /// Interval `lo,hi` for spline and Brownian kernels; defaults to the data range.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    interval: Option<Vec<f64>>,
    #[arg(long, conflicts_with = "select", required_unless_present = "select")]
    h: Option<f64>,
    /// `gcv`, `cv` or `aggregate`.
    #[arg(long)]
    select: Option<String>,
    /// `min,max,count` of the log-spaced h grid; defaults to the benchmark grid for this n.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    grid: Option<Vec<f64>>,
    /// Number of splits averaged by `--select aggregate`.
    #[arg(long = "J", default_value_t = 1)]
    j: usize,
    #[arg(long = "no-intercept")]
    no_intercept: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the aggregation weights of every split to this CSV.
    #[arg(long = "dump-weights")]
    dump_weights: Option<PathBuf>,
    /// Output JSON file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum GridCommand {
    /// `(l, h)` pairs for eigenvalue decays `l`.
    Rkhs {
        #[arg(long)]
        lmin: f64,
        #[arg(long)]
        lmax: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        /// Unused; accepted for uniformity.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Smoothness grid with harmonic means and bandwidths.
    Besov {
        #[arg(long, value_delimiter = ',', required = true)]
        smin: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        smax: Vec<f64>,
        #[arg(long)]
        n: usize,
        /// Dimension; single-valued bounds are repeated on every axis.
        #[arg(long)]
        d: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    Config(Error),
    Runtime(Error),
}

type CliResult<T> = std::result::Result<T, Failure>;

fn config<T>(r: Result<T>) -> CliResult<T> {
    r.map_err(Failure::Config)
}

fn runtime<T>(r: Result<T>) -> CliResult<T> {
    r.map_err(Failure::Runtime)
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn cli_main(args: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Mise(a) => mise(a),
        Command::Subopt(a) => subopt(a),
        Command::Fit(a) => fit(a),
        Command::Grid(g) => grid(g),
    };
    match outcome {
        Ok(text) => {
            let mut out = std::io::stdout().lock();
            let _ = out.write_all(text.as_bytes());
            let _ = out.flush();
            0
        }
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn mise(a: MiseArgs) -> CliResult<String> {
    let mut cfg = config(ExperimentConfig::load(&a.config))?;
    if let Some(seed) = a.seed {
        cfg.master_seed = seed;
    }
    if let Some(reps) = a.reps {
        cfg.reps = reps;
    }
    config(cfg.validate())?;
    let format: ReportFormat = config(a.format.parse())?;
    let report = runtime(run_mise_benchmark(&cfg))?;
    let name = match format {
        ReportFormat::Csv => "report.csv",
        ReportFormat::Json => "report.json",
    };
    runtime(write_report(&report, &a.out.join(name), format))?;
    runtime(emit_plot_data(&report, &a.out))?;

    let mut text = format!("target {}  sigma {}\nmethod,n,mise_mean,mise_sd\n", cfg.target, report.metadata.sigma);
    for c in &report.cells {
        let _ = writeln!(text, "{},{},{},{}", c.method.name(), c.n, c.mise_mean, c.mise_sd);
    }
    if !report.failures.is_empty() {
        let _ = writeln!(text, "{} failed replications (see report)", report.failures.len());
    }
    Ok(text)
}

fn subopt(a: SuboptArgs) -> CliResult<String> {
    if a.reps == 0 {
        return Err(Failure::Config(Error::Config("reps must be at least 1".into())));
    }
    let mut rows = Vec::new();
    for &m in &a.m {
        for &n in &a.n {
            let setup = config(suboptimality::make_setup(m, n, a.c, a.sigma))?;
            let seed = crate::seed::derive_path(a.seed, &[m as u64, n as u64]);
            let erm = runtime(suboptimality::erm_excess_mc(&setup, a.reps, None, seed))?;
            let aggregate_excess = if a.aggregate {
                let t_set = aggregation::default_temperatures();
                Some(runtime(suboptimality::aggregate_excess_mc(&setup, a.reps, &t_set, seed))?)
            } else {
                None
            };
            rows.push(ExcessRow {
                m,
                n,
                excess: erm.excess,
                bound: setup.rate(),
                ratio: erm.excess / setup.rate(),
                aggregate_excess,
            });
        }
    }
    if let Some(dir) = &a.out {
        runtime(write_excess_table(&rows, &dir.join("excess.csv")))?;
    }
    let mut text = String::from("M,n,excess,bound,ratio");
    text.push_str(if a.aggregate { ",aggregate_excess\n" } else { "\n" });
    for r in &rows {
        let _ = write!(text, "{},{},{},{},{}", r.m, r.n, r.excess, r.bound, r.ratio);
        if let Some(v) = r.aggregate_excess {
            let _ = write!(text, ",{v}");
        }
        text.push('\n');
    }
    Ok(text)
}

/// Reads a headed CSV whose last column is the response.
pub fn read_data_csv(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: String| Error::Parse {
        path: path.to_path_buf(),
        message: msg,
    };
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let width = header.split(',').count();
    if width < 2 {
        return Err(bad("need at least one covariate column and a response column".into()));
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        let vals = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| bad(format!("row {}: {e}", i + 1)))?;
        if vals.len() != width {
            return Err(bad(format!("row {}: expected {width} fields", i + 1)));
        }
        xs.extend_from_slice(&vals[..width - 1]);
        ys.push(vals[width - 1]);
    }
    if ys.is_empty() {
        return Err(bad("no data rows".into()));
    }
    Dataset::new(width - 1, xs, ys).map_err(|e| bad(e.to_string()))
}

fn parse_kernel(spec: &str, data: &Dataset, interval: Option<&[f64]>) -> Result<KernelSpec> {
    let d = data.dim();
    let family = match spec.split_once(':') {
        Some(("gaussian", w)) => KernelFamily::Gaussian {
            width: w
                .parse()
                .map_err(|_| Error::Config(format!("bad gaussian width '{w}'")))?,
        },
        None if spec == "cubic-spline" => KernelFamily::CubicSpline,
        None if spec == "brownian" => KernelFamily::Brownian,
        None if spec == "linear" => KernelFamily::Linear,
        _ => return Err(Error::Config(format!("unknown kernel '{spec}'"))),
    };
    let kernel = KernelSpec::new(family, d).map_err(|e| Error::Config(e.to_string()))?;
    if !matches!(family, KernelFamily::CubicSpline | KernelFamily::Brownian) {
        return Ok(kernel);
    }
    let (lo, hi) = match interval {
        Some(iv) => (iv[0], iv[1]),
        None => {
            let lo = data.xs().iter().copied().fold(f64::INFINITY, f64::min);
            let hi = data.xs().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if lo < hi {
                (lo, hi)
            } else {
                (lo - 0.5, lo + 0.5)
            }
        }
    };
    kernel.on_interval(lo, hi).map_err(|e| Error::Config(e.to_string()))
}

#[derive(Serialize)]
struct FitOutput {
    kernel: KernelSpec,
    method: String,
    /// Selected or given `h`; absent for aggregates.
    h: Option<f64>,
    intercept: f64,
    points: Vec<f64>,
    coeffs: Vec<f64>,
    fitted: Vec<f64>,
    empirical_risk: f64,
}

fn fit(a: FitArgs) -> CliResult<String> {
    let data = config(read_data_csv(&a.data))?;
    let kernel = config(parse_kernel(&a.kernel, &data, a.interval.as_deref()))?;
    let template = PermConfig::new(kernel, 1.0).with_intercept(!a.no_intercept);
    let h_grid = match &a.grid {
        Some(g) => {
            if g[2] < 1.0 || g[2].fract() != 0.0 {
                return Err(Failure::Config(Error::Config("grid count must be a positive integer".into())));
            }
            config(perm::log_grid(g[0], g[1], g[2] as usize).map_err(|e| Error::Config(e.to_string())))?
        }
        None => runtime(HGridSpec::default().values(data.len()))?,
    };
    let (method, h, expansion, weights) = match (a.h, a.select.as_deref()) {
        (Some(h), _) => {
            let model = runtime(perm::fit_krr(&data, &template.with_h(h)))?;
            ("fixed".to_string(), Some(h), model.expansion, None)
        }
        (None, Some("aggregate")) => {
            if a.j == 0 {
                return Err(Failure::Config(Error::Config("J must be at least 1".into())));
            }
            let grid: Vec<PermConfig> = h_grid.iter().map(|&h| template.with_h(h)).collect();
            let cfg = AggregationConfig::default();
            let jk = runtime(aggregation::jackknife_aggregate(
                &data,
                &grid,
                &cfg,
                a.j,
                derive_seed(a.seed, 1),
            ))?;
            let expansion = jk
                .to_expansion(&data)
                .ok_or_else(|| Failure::Runtime(Error::invalid("aggregate does not collapse")))?;
            ("aggregate".to_string(), None, expansion, Some(jk.aggregates))
        }
        (None, Some(sel)) => {
            let criterion: Criterion = config(sel.parse())?;
            let s = runtime(perm::select_h(&data, &template, &h_grid, criterion))?;
            let model = runtime(perm::fit_krr(&data, &template.with_h(s.h)))?;
            (sel.to_string(), Some(s.h), model.expansion, None)
        }
        (None, None) => unreachable!("clap requires --h or --select"),
    };
    if let (Some(path), Some(aggs)) = (&a.dump_weights, &weights) {
        runtime(dump_weights(aggs, path))?;
    }
    let fitted: Vec<f64> = data.points().map(|x| expansion.value(x)).collect();
    let risk = fitted
        .iter()
        .zip(data.ys())
        .map(|(f, y)| (y - f) * (y - f))
        .sum::<f64>()
        / data.len() as f64;
    let KernelExpansion {
        kernel,
        points,
        coeffs,
        intercept,
        ..
    } = expansion;
    let out = FitOutput {
        kernel,
        method: method.clone(),
        h,
        intercept,
        points,
        coeffs,
        fitted,
        empirical_risk: risk,
    };
    let json = serde_json::to_string_pretty(&out).map_err(|e| Failure::Runtime(Error::invalid(e.to_string())))?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        runtime(std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)))?;
    }
    runtime(std::fs::write(&a.out, json + "\n").map_err(|e| Error::io(&a.out, e)))?;
    let mut text = format!("method {method}\n");
    if let Some(h) = h {
        let _ = writeln!(text, "h {h}");
    }
    let _ = writeln!(text, "empirical risk {risk}");
    Ok(text)
}

/// `split,candidate,h,learn_risk,weight,temperature`, one row per candidate per split.
fn dump_weights(aggs: &[AggregateModel], path: &Path) -> Result<()> {
    let mut text = String::from("split,candidate,h,learn_risk,weight,temperature\n");
    for (j, agg) in aggs.iter().enumerate() {
        let w = &agg.weights;
        for (k, c) in agg.candidates.iter().enumerate() {
            let _ = writeln!(
                text,
                "{j},{k},{},{},{},{}",
                c.config.h, w.source_risks[k], w.weights[k], w.temperature
            );
        }
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn grid(g: GridCommand) -> CliResult<String> {
    match g {
        GridCommand::Rkhs { lmin, lmax, n, a, .. } => {
            let grid = config(aggregation::build_rkhs_grid(lmin, lmax, n, a))?;
            let mut text = String::from("l,h\n");
            for (l, h) in grid {
                let _ = writeln!(text, "{l},{h}");
            }
            Ok(text)
        }
        GridCommand::Besov { smin, smax, n, d, .. } => {
            let d = d.unwrap_or(smin.len().max(smax.len()));
            let widen = |v: Vec<f64>| if v.len() == 1 { vec![v[0]; d] } else { v };
            let (smin, smax) = (widen(smin), widen(smax));
            if smin.len() != d || smax.len() != d {
                return Err(Failure::Config(Error::Config(format!(
                    "--smin and --smax need 1 or {d} values"
                ))));
            }
            let grid = config(aggregation::build_besov_grid(&smin, &smax, n))?;
            let mut text = String::new();
            for i in 1..=d {
                let _ = write!(text, "s{i},");
            }
            text.push_str("s_bar,beta,bandwidth\n");
            for p in &grid.points {
                for s in &p.s {
                    let _ = write!(text, "{s},");
                }
                let _ = writeln!(text, "{},{},{}", p.harmonic_mean, p.beta, p.bandwidth);
            }
            Ok(text)
        }
    }
}
