use expagg::aggregation::{build_besov_grid, build_rkhs_grid, exp_weights, make_split};
use expagg::experiments::{
    mean_sd, read_report, write_report, CellSummary, ExperimentConfig, Method, RepRisk, ReportFormat, ReportMetadata,
    RiskReport,
};
use expagg::kernels::KernelSpec;
use expagg::perm::{fit_krr, hat_matrix, PermConfig, Predictor};
use expagg::regression::Dataset;
use expagg::suboptimality::{erm_excess_mc, make_setup};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;

fn dataset_1d() -> impl Strategy<Value = Dataset> {
    (3usize..25)
        .prop_flat_map(|n| (prop::collection::vec(0.0f64..1.0, n), prop::collection::vec(-3.0f64..3.0, n)))
        .prop_map(|(xs, ys)| Dataset::from_1d(xs, ys).unwrap())
}

fn kernel() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![
        Just(KernelSpec::cubic_spline()),
        Just(KernelSpec::brownian()),
        (0.05f64..2.0).prop_map(|w| KernelSpec::gaussian(w, 1).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_are_exactly_shift_invariant_on_dyadic_risks(
        ks in prop::collection::vec(-4096i32..4096, 1..40),
        shift in -4096i32..4096,
        n_learn in 1usize..50,
        t in prop::sample::select(vec![0.5, 1.0, 10.0, 100.0]),
    ) {
        let risks: Vec<f64> = ks.iter().map(|k| *k as f64 / 1024.0).collect();
        let shifted: Vec<f64> = risks.iter().map(|r| r + shift as f64 / 1024.0).collect();
        let a = exp_weights(&risks, n_learn, t).unwrap();
        let b = exp_weights(&shifted, n_learn, t).unwrap();
        prop_assert_eq!(a.weights, b.weights);
    }

    #[test]
    fn weights_follow_permutations(risks in prop::collection::vec(0.0f64..5.0, 2..30), seed in any::<u64>()) {
        let mut order: Vec<usize> = (0..risks.len()).collect();
        let mut rng = expagg::seed::rng(seed);
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let permuted: Vec<f64> = order.iter().map(|&i| risks[i]).collect();
        let w = exp_weights(&risks, 7, 3.0).unwrap();
        let wp = exp_weights(&permuted, 7, 3.0).unwrap();
        for (k, &i) in order.iter().enumerate() {
            prop_assert!((wp.weights[k] - w.weights[i]).abs() <= 1e-15);
        }
    }

    #[test]
    fn normal_equations_hold(data in dataset_1d(), k in kernel(), h in 1e-3f64..10.0) {
        let model = fit_krr(&data, &PermConfig::new(k, h)).unwrap();
        let n = data.len();
        let g = DMatrix::from_fn(n, n, |i, j| k.eval(data.point(i), data.point(j)));
        let a = DVector::from_column_slice(model.dual_coeffs());
        let y = DVector::from_column_slice(data.ys());
        let resid = (&g * &a + &a * (n as f64 * h * h)) - &y;
        prop_assert!(resid.norm() <= 1e-8 * y.norm().max(1e-300));
    }

    #[test]
    fn hat_eigenvalues_lie_in_unit_interval(data in dataset_1d(), k in kernel(), h in 1e-3f64..10.0, icpt in any::<bool>()) {
        let s = hat_matrix(&data, &PermConfig::new(k, h).with_intercept(icpt)).unwrap();
        for e in SymmetricEigen::new(s).eigenvalues.iter() {
            prop_assert!(*e >= -1e-10 && *e <= 1.0 + 1e-10, "{}", e);
        }
    }

    #[test]
    fn clamped_predictions_respect_the_bound(data in dataset_1d(), q in 0.01f64..2.0, x in 0.0f64..1.0) {
        let model = fit_krr(&data, &PermConfig::new(KernelSpec::cubic_spline(), 1e-3).with_clamp(q)).unwrap();
        prop_assert!(model.value(&[x]).abs() <= q);
    }

    #[test]
    fn splits_partition_the_sample(n in 2usize..200, frac in 0.05f64..0.95, seed in any::<u64>()) {
        let m = (frac * n as f64).round() as usize;
        prop_assume!(m >= 1 && m < n);
        let plan = make_split(n, frac, seed).unwrap();
        prop_assert_eq!(plan.m(), m);
        let mut all: Vec<usize> = plan.train_idx.iter().chain(&plan.learn_idx).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn besov_points_stay_in_the_box(
        lo in prop::collection::vec(0.5f64..3.0, 1..3),
        width in prop::collection::vec(0.4f64..2.0, 3),
        n in 10usize..5000,
    ) {
        let hi: Vec<f64> = lo.iter().zip(&width).map(|(l, w)| l + w).collect();
        if let Ok(grid) = build_besov_grid(&lo, &hi, n) {
            for p in &grid.points {
                for ((s, l), h) in p.s.iter().zip(&lo).zip(&hi) {
                    prop_assert!(s > l && *s <= h + 1e-12);
                }
                prop_assert!(p.bandwidth > 0.0 && p.bandwidth < 1.0);
            }
        }
    }

    #[test]
    fn rkhs_bandwidths_decrease(l_min in 0.51f64..3.0, extra in 0.0f64..3.0, n in 3usize..10_000) {
        let grid = build_rkhs_grid(l_min, l_min + extra, n, 1.0).unwrap();
        for w in grid.windows(2) {
            prop_assert!(w[1].0 > w[0].0 && w[1].1 < w[0].1);
        }
    }

    #[test]
    fn erm_excess_lies_between_zero_and_h(m in 2usize..40, n in 1usize..60, seed in any::<u64>()) {
        let setup = make_setup(m, n, 4.0, 1.0).unwrap();
        let e = erm_excess_mc(&setup, 20, None, seed).unwrap();
        prop_assert!(e.excess >= 0.0 && e.excess <= setup.h);
    }

    #[test]
    fn csv_reports_round_trip_any_finite_double(
        risks in prop::collection::vec(prop::num::f64::POSITIVE | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL, 1..20),
    ) {
        let per_rep: Vec<RepRisk> = risks.iter().enumerate().map(|(rep, &risk)| RepRisk { rep, risk }).collect();
        let (mean, sd) = mean_sd(risks.iter().copied());
        prop_assume!(mean.is_finite() && sd.is_finite());
        let report = RiskReport {
            metadata: ReportMetadata {
                sigma: 0.5,
                master_seed: 1,
                version: "t".into(),
                config: ExperimentConfig::desk_scale("hardsine"),
            },
            cells: vec![CellSummary::from_reps(Method::Cv, 20, per_rep)],
            failures: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_report(&report, &path, ReportFormat::Csv).unwrap();
        prop_assert_eq!(read_report(&path).unwrap(), report);
    }
}
