//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use expagg::aggregation::{
    besov_axis_count, build_besov_grid, build_rkhs_grid, default_temperatures, erm_select, exp_weights,
};
use expagg::experiments::{run_mise_benchmark, ExperimentConfig, Method};
use expagg::kernels::KernelSpec;
use expagg::perm::{fit_krr, hat_matrix, loocv_score, PermConfig, Predictor};
use expagg::regression::Dataset;
use expagg::suboptimality::{
    aggregate_excess_mc, dictionary_empirical_risks, erm_excess_mc, make_setup, mixture_l2_risk, sample_dyadic,
};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;

type Outcome = Result<String, String>;

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn figure_one() -> Outcome {
    let ms = [16usize, 64, 256];
    let ns = [32usize, 128, 512];
    let mut ratio = [[0.0; 3]; 3];
    for (a, &m) in ms.iter().enumerate() {
        for (b, &n) in ns.iter().enumerate() {
            let setup = make_setup(m, n, 4.0, 1.0).unwrap();
            let e = erm_excess_mc(&setup, 5000, None, 1000 + (a * 3 + b) as u64).unwrap();
            ratio[a][b] = e.excess / setup.rate();
        }
    }
    let in_band = ratio.iter().flatten().all(|r| (0.2..=2.0).contains(r));
    let persistent = (0..3).all(|b| ratio[2][b] >= 0.5 * ratio[0][b]);
    let table: Vec<String> = ratio
        .iter()
        .map(|row| row.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(" "))
        .collect();
    check(in_band && persistent, format!("ratios by M (rows) x n: [{}]", table.join(" | ")))
}

fn closed_forms() -> Outcome {
    let mut rng = expagg::seed::rng(2);
    let setups: Vec<_> = (0..50)
        .map(|_| {
            let m = rng.random_range(2..=32);
            let n = rng.random_range(20..=60);
            let c = rng.random_range(0.1..8.0);
            make_setup(m, n, c, 1.0).unwrap()
        })
        .collect();
    let mut worst_exact = 0.0f64;
    for s in &setups {
        for j in 0..s.m {
            let mut e = vec![0.0; s.m];
            e[j] = 1.0;
            let want = if j == s.m - 1 {
                2.5 * s.h * s.h - s.h + 1.0
            } else {
                2.5 * s.h * s.h + 1.0
            };
            worst_exact = worst_exact.max((mixture_l2_risk(&e, s).unwrap() - want).abs());
        }
    }
    let worst_mc = setups
        .par_iter()
        .enumerate()
        .map(|(k, s)| {
            let reps = 10_000;
            let mut sums = vec![0.0; s.m];
            for r in 0..reps {
                let sample = sample_dyadic(s, expagg::seed::derive_path(77, &[k as u64, r]));
                for (acc, v) in sums.iter_mut().zip(dictionary_empirical_risks(&sample, s).unwrap()) {
                    *acc += v;
                }
            }
            (0..s.m)
                .map(|j| ((sums[j] / reps as f64 - s.sigma * s.sigma) / s.risk(j) - 1.0).abs())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    check(
        worst_exact <= 1e-12 && worst_mc <= 0.02,
        format!("max closed-form error {worst_exact:.2e}, max Monte Carlo relative error {worst_mc:.4}"),
    )
}

fn aggregation_beats_erm() -> Outcome {
    let setup = make_setup(256, 64, 4.0, 1.0).unwrap();
    let t_set = default_temperatures();
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in [1u64, 2, 3] {
        let erm = erm_excess_mc(&setup, 2000, None, seed).unwrap().excess;
        let agg = aggregate_excess_mc(&setup, 2000, &t_set, seed).unwrap();
        ok &= agg < erm && (erm - agg) >= 0.1 * erm.abs();
        lines.push(format!("seed {seed}: erm {erm:.4} aggregate {agg:.4}"));
    }
    check(ok, lines.join("; "))
}

fn random_dataset(rng: &mut expagg::seed::Rng, k: usize) -> (Dataset, KernelSpec) {
    let n = rng.random_range(2..=60);
    let (kernel, d) = match k % 4 {
        0 => (KernelSpec::cubic_spline(), 1),
        1 => (KernelSpec::brownian(), 1),
        2 => {
            let d = rng.random_range(1..=3);
            (KernelSpec::gaussian(rng.random_range(0.1..1.5), d).unwrap(), d)
        }
        _ => {
            let d = rng.random_range(1..=3);
            (KernelSpec::linear(d).unwrap(), d)
        }
    };
    // Brownian paths start at 0, so keep points off the origin.
    let xs: Vec<f64> = (0..n * d).map(|_| rng.random_range(0.01..1.0)).collect();
    let ys: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    (Dataset::new(d, xs, ys).unwrap(), kernel)
}

fn brute_force_loocv(data: &Dataset, config: &PermConfig) -> f64 {
    let n = data.len();
    // Same ridge n h^2 on n - 1 points.
    let h = config.h * (n as f64 / (n - 1) as f64).sqrt();
    (0..n)
        .map(|i| {
            let keep: Vec<usize> = (0..n).filter(|&k| k != i).collect();
            let model = fit_krr(&data.subset(&keep).unwrap(), &config.with_h(h)).unwrap();
            let e = data.ys()[i] - model.value(data.point(i));
            e * e
        })
        .sum::<f64>()
        / n as f64
}

fn solver_exactness() -> Outcome {
    let mut rng = expagg::seed::rng(4);
    let (mut worst_resid, mut worst_loo, mut eig_lo, mut eig_hi) = (0.0f64, 0.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for k in 0..100 {
        let (data, kernel) = random_dataset(&mut rng, k);
        let h = 10f64.powf(rng.random_range(-3.0..0.0));
        let intercept = rng.random::<bool>();
        let config = PermConfig::new(kernel, h).with_intercept(intercept);
        let n = data.len();

        let model = fit_krr(&data, &config).unwrap();
        let g = DMatrix::from_fn(n, n, |i, j| kernel.eval(data.point(i), data.point(j)));
        let a = DVector::from_column_slice(model.dual_coeffs());
        let target = DVector::from_iterator(n, data.ys().iter().map(|y| y - model.intercept_value()));
        let resid = (&g * &a + &a * (n as f64 * h * h)) - &target;
        worst_resid = worst_resid.max(resid.norm() / target.norm().max(f64::MIN_POSITIVE));

        if n >= 3 {
            let fast = loocv_score(&data, &config).unwrap();
            let slow = brute_force_loocv(&data, &config);
            worst_loo = worst_loo.max((fast - slow).abs() / slow.max(1.0));
        }

        let s = hat_matrix(&data, &config.with_intercept(false)).unwrap();
        for e in SymmetricEigen::new(s).eigenvalues.iter() {
            eig_lo = eig_lo.min(*e);
            eig_hi = eig_hi.max(*e);
        }
    }
    check(
        worst_resid <= 1e-8 && worst_loo <= 1e-8 && eig_lo >= -1e-10 && eig_hi <= 1.0 - 1e-10,
        format!(
            "max residual {worst_resid:.2e}, max LOOCV gap {worst_loo:.2e}, hat spectrum [{eig_lo:.2e}, {eig_hi:.10}]"
        ),
    )
}

fn weight_simplex() -> Outcome {
    let mut rng = expagg::seed::rng(5);
    let mut failures = Vec::new();
    for trial in 0..1000 {
        let m = rng.random_range(1..=50);
        // Dyadic risks so that shifting is exact in floating point.
        let risks: Vec<f64> = (0..m).map(|_| rng.random_range(0..4096) as f64 / 1024.0).collect();
        let n = rng.random_range(1..=200);
        let t = 10f64.powf(rng.random_range(-1.0..3.0));
        let w = exp_weights(&risks, n, t).unwrap();
        let sum: f64 = w.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 || w.weights.iter().any(|v| *v < 0.0) {
            failures.push(format!("{trial}: simplex"));
        }
        let shift = rng.random_range(-2048..2048) as f64 / 1024.0;
        let shifted: Vec<f64> = risks.iter().map(|r| r + shift).collect();
        if exp_weights(&shifted, n, t).unwrap().weights != w.weights {
            failures.push(format!("{trial}: shift"));
        }
        for i in 0..m {
            for j in 0..m {
                if risks[i] < risks[j] && w.weights[i] < w.weights[j] {
                    failures.push(format!("{trial}: monotonicity"));
                }
            }
        }
        if w.argmax() != erm_select(&risks) {
            failures.push(format!("{trial}: argmax"));
        }
        let hot = exp_weights(&risks, n, 1e9).unwrap();
        if hot.weights.iter().any(|v| (v - 1.0 / m as f64).abs() > 1e-6) {
            failures.push(format!("{trial}: uniform limit"));
        }
    }
    failures.dedup();
    check(
        failures.is_empty(),
        if failures.is_empty() {
            "1000 triples".into()
        } else {
            failures.join(", ")
        },
    )
}

fn benchmark() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for target in ["hardsine", "oscsine"] {
        let config = ExperimentConfig {
            methods: vec![Method::Gcv, Method::Cv, Method::AggregateJackknife],
            master_seed: 2008,
            ..ExperimentConfig::desk_scale(target)
        };
        let r = run_mise_benchmark(&config).unwrap();
        let cell = |m: Method, n: usize| r.cell(m, n).unwrap();
        let mut notes = Vec::new();
        if !r.failures.is_empty() {
            notes.push(format!("{} failed reps", r.failures.len()));
        }
        for &m in &config.methods {
            for w in config.n_list.windows(2) {
                if cell(m, w[1]).mise_mean > cell(m, w[0]).mise_mean {
                    notes.push(format!("(a) {} increases {}->{}", m.name(), w[0], w[1]));
                }
            }
        }
        for (n, slack) in [(20, 1.2), (30, 1.2), (100, 1.3)] {
            let best = cell(Method::Cv, n).mise_mean.min(cell(Method::Gcv, n).mise_mean);
            let jk = cell(Method::AggregateJackknife, n);
            let part = if n == 100 { "(c)" } else { "(b)" };
            if jk.mise_mean > slack * best {
                notes.push(format!("{part} n={n} jackknife/min(cv,gcv) = {:.2} > {slack}", jk.mise_mean / best));
            }
            if n < 100 && jk.mise_sd > cell(Method::Cv, n).mise_sd {
                notes.push(format!("(b) n={n} jackknife sd {:.4} > cv sd {:.4}", jk.mise_sd, cell(Method::Cv, n).mise_sd));
            }
        }
        let summary: Vec<String> = config
            .n_list
            .iter()
            .map(|&n| {
                format!(
                    "n={n} gcv {:.4} cv {:.4} jk {:.4} (sd cv {:.4} jk {:.4})",
                    cell(Method::Gcv, n).mise_mean,
                    cell(Method::Cv, n).mise_mean,
                    cell(Method::AggregateJackknife, n).mise_mean,
                    cell(Method::Cv, n).mise_sd,
                    cell(Method::AggregateJackknife, n).mise_sd
                )
            })
            .collect();
        ok &= notes.is_empty();
        lines.push(format!("{target}: {}{}", summary.join("; "), if notes.is_empty() {
            String::new()
        } else {
            format!(" VIOLATIONS: {}", notes.join(", "))
        }));
    }
    check(ok, lines.join("\n      "))
}

fn grid_builders() -> Outcome {
    let mut rng = expagg::seed::rng(7);
    for _ in 0..50 {
        let d = rng.random_range(1..=3);
        let n = rng.random_range(3..10_000);
        let lo: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..3.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|l| l + rng.random_range(0.3..2.0)).collect();
        let expected: usize = lo
            .iter()
            .zip(&hi)
            .map(|(a, b)| ((b - a) * (n as f64).ln()).floor() as usize)
            .product();
        let got = build_besov_grid(&lo, &hi, n).map(|g| g.points.len()).unwrap_or(0);
        if got != expected || (0..d).map(|i| besov_axis_count(lo[i], hi[i], n)).product::<usize>() != expected {
            return Err(format!("cardinality {got} != {expected} for {lo:?} {hi:?} n={n}"));
        }
    }
    let g = build_besov_grid(&[1.0], &[2.0], 20).unwrap();
    let log20 = 20f64.ln();
    let want = [1.0 + 1.0 / log20, 1.0 + 2.0 / log20];
    if g.points.len() != 2 || g.points.iter().zip(want).any(|(p, s)| p.s[0] != s) {
        return Err(format!("d=1 n=20 grid {:?}", g.points.iter().map(|p| p.s[0]).collect::<Vec<_>>()));
    }
    for (l_min, l_max, n) in [(0.6, 3.0, 50), (1.0, 2.0, 100), (0.51, 5.0, 10_000)] {
        let grid = build_rkhs_grid(l_min, l_max, n, 1.0).unwrap();
        if grid.windows(2).any(|w| w[1].1 >= w[0].1) {
            return Err(format!("rkhs bandwidths not decreasing for ({l_min}, {l_max}, {n})"));
        }
    }
    Ok("50 random configurations, reference grid, rkhs monotonicity".into())
}

fn run_cli(threads: usize, args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_expagg"))
        .args(args)
        .env("RAYON_NUM_THREADS", threads.to_string())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bench.json");
    std::fs::write(
        &cfg,
        r#"{"target": "hardsine", "n_list": [20, 30], "reps": 8, "J": 4,
            "methods": ["gcv", "cv", "aggregate", "aggregate-jackknife", "erm-on-grid"]}"#,
    )
    .unwrap();
    let mut snapshots = Vec::new();
    for threads in [1, 8] {
        let s_dir = tmp.path().join(format!("subopt{threads}"));
        let m_dir = tmp.path().join(format!("mise{threads}"));
        let s_out = run_cli(
            threads,
            &[
                "subopt", "--M", "16,64", "--n", "32,128", "--reps", "300", "--aggregate", "--seed", "11", "--out",
                s_dir.to_str().unwrap(),
            ],
        );
        let m_out = run_cli(
            threads,
            &["mise", "--config", cfg.to_str().unwrap(), "--seed", "5", "--out", m_dir.to_str().unwrap()],
        );
        snapshots.push((s_out, m_out, files(&s_dir), files(&m_dir)));
    }
    let same = snapshots[0] == snapshots[1];
    check(
        same,
        format!(
            "{} subopt and {} mise output files compared, {}",
            snapshots[0].2.len(),
            snapshots[0].3.len(),
            if same { "byte-identical" } else { "outputs differ" }
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, u64); 8] = [
        ("selection excess tracks sqrt(log M / n)", figure_one, 120),
        ("closed-form dictionary risks", closed_forms, 30),
        ("aggregation beats selection on the dyadic dictionary", aggregation_beats_erm, 120),
        ("solver exactness", solver_exactness, 30),
        ("weight simplex properties", weight_simplex, 5),
        ("scaled risk benchmark", benchmark, 600),
        ("grid builders", grid_builders, 1),
        ("thread-count determinism", determinism, 60),
    ];
    let mut failed = 0;
    for (k, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(*limit);
        let (ok, detail) = match outcome {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        failed += usize::from(!ok);
        println!(
            "{} {}. {} [{:.1}s / {}s{}]\n      {}",
            if ok { "PASS" } else { "FAIL" },
            k + 1,
            name,
            elapsed.as_secs_f64(),
            limit,
            if in_time { "" } else { ", over time" },
            detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
