use proptest::prelude::*;
use speckle_harness::compare::compare_varying_unvarying;
use speckle_harness::config::{EstimatorKind, SweepConfig};
use speckle_harness::stats::fit_loglog_slope;
use speckle_harness::sweep::{csv_string, run_sweep, write_trial_log, CSV_HEADER};

fn small(estimator: EstimatorKind) -> SweepConfig {
    let mut cfg = SweepConfig::single(8, 4, 4, 0.2, 2, 6);
    cfg.looks = vec![2, 4];
    cfg.estimator = estimator;
    cfg.optimizer.max_iters = 10;
    cfg
}

#[test]
fn truth_estimator_has_zero_risk() {
    let mut cfg = SweepConfig::single(6, 3, 2, 0.1, 2, 1);
    cfg.estimator = EstimatorKind::Truth;
    let out = run_sweep(&cfg).unwrap();
    assert_eq!(out.records.len(), 1);
    assert_eq!(out.records[0].mean_mse, Some(0.0));
    assert_eq!(out.records[0].ci_half_width, Some(0.0));
}

#[test]
fn csv_is_byte_identical_across_runs_and_workers() {
    let mut cfg = small(EstimatorKind::MleAscent);
    cfg.workers = Some(1);
    let a = csv_string(&run_sweep(&cfg).unwrap().records).unwrap();
    let b = csv_string(&run_sweep(&cfg).unwrap().records).unwrap();
    cfg.workers = Some(4);
    let c = csv_string(&run_sweep(&cfg).unwrap().records).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_eq!(a.lines().next().unwrap(), CSV_HEADER.join(","));
    assert_eq!(a.lines().count(), 3);
}

#[test]
fn undefined_likelihood_fills_error_column() {
    let mut cfg = SweepConfig::single(3, 6, 2, 0.0, 1, 2);
    cfg.sigma_z = vec![0.0, 0.5];
    let out = run_sweep(&cfg).unwrap();
    assert_eq!(out.records[0].error.as_deref(), Some("NotPositiveDefinite"));
    assert_eq!(out.records[0].mean_mse, None);
    assert!(out.records[1].error.is_none());
    assert!(!out.all_failed());
    let csv = csv_string(&out.records).unwrap();
    assert!(csv.lines().nth(1).unwrap().ends_with(",,NotPositiveDefinite"));
}

#[test]
fn trial_log_sums_to_cell_means() {
    let cfg = small(EstimatorKind::MleAscent);
    let out = run_sweep(&cfg).unwrap();
    for r in &out.records {
        let sum: f64 = out.trials.iter().filter(|t| t.cell == r.cell).map(|t| t.mse).sum();
        assert!((r.mean_mse.unwrap() * r.trials as f64 - sum).abs() < 1e-9);
    }
    let mut buf = Vec::new();
    write_trial_log(&out, cfg.estimator, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * cfg.trials);
}

#[test]
fn predicted_rate_recomputes_from_coordinates() {
    let mut cfg = small(EstimatorKind::Truth);
    cfg.sigma_z = vec![0.1, 10.0];
    for r in run_sweep(&cfg).unwrap().records {
        let c = r.cell;
        let (m, n, s) = (c.m as f64, c.n as f64, c.sigma_z);
        let lead = [s.powi(4), m * m, n * n].into_iter().fold(0.0, f64::max);
        let expect = lead * c.k as f64 * n.ln() / (m * m * n * c.looks as f64);
        assert_eq!(r.predicted_rate, expect);
    }
}

#[test]
fn sufficient_statistic_and_net_search_run() {
    let mut cfg = SweepConfig::single(4, 16, 8, 0.0, 2, 4);
    cfg.estimator = EstimatorKind::SufficientStatistic;
    assert!(run_sweep(&cfg).unwrap().records[0].mean_mse.is_some());
    let mut net = SweepConfig::single(4, 3, 2, 0.3, 2, 3);
    net.estimator = EstimatorKind::NetSearch;
    net.net_levels = 5;
    assert!(run_sweep(&net).unwrap().records[0].mean_mse.is_some());
}

#[test]
fn fixed_signal_mode() {
    let mut cfg = SweepConfig::single(4, 4, 2, 0.1, 2, 3);
    cfg.fixed_signal = Some(vec![1.0, 1.0, 2.0, 2.0]);
    cfg.estimator = EstimatorKind::Truth;
    assert_eq!(run_sweep(&cfg).unwrap().records[0].mean_mse, Some(0.0));
}

#[test]
fn compare_single_point_grid() {
    let cfg = SweepConfig::single(8, 4, 4, 0.2, 2, 4);
    let report = compare_varying_unvarying(&cfg).unwrap();
    assert_eq!(report.groups.len(), 1);
    assert_eq!(report.groups[0].points.len(), 1);
    assert_eq!(report.groups[0].plateau_l, None);
}

#[test]
fn one_look_modes_coincide() {
    let cfg = SweepConfig::single(8, 4, 1, 0.2, 2, 5);
    let report = compare_varying_unvarying(&cfg).unwrap();
    let p = &report.groups[0].points[0];
    assert_eq!(p.varying.mean_mse, p.unvarying.mean_mse);
    assert_eq!(p.varying.ci_half_width, p.unvarying.ci_half_width);
}

/// Slope of the OLS line through `(u_i, v_i)` from the 2x2 normal equations
/// solved by Cramer's rule.
fn normal_equations_slope(points: &[(f64, f64)]) -> f64 {
    let (mut s1, mut su, mut suu, mut sv, mut suv) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (u, v) = (x.ln(), y.ln());
        s1 += 1.0;
        su += u;
        suu += u * u;
        sv += v;
        suv += u * v;
    }
    (s1 * suv - su * sv) / (s1 * suu - su * su)
}

proptest! {
    #[test]
    fn slope_matches_normal_equations(
        exponent in -2.0f64..2.0,
        jitter in proptest::collection::vec(-0.3f64..0.3, 5),
    ) {
        let points: Vec<(f64, f64)> = jitter
            .iter()
            .enumerate()
            .map(|(i, j)| {
                let x = (1 << i) as f64;
                (x, 3.0 * x.powf(exponent) * j.exp())
            })
            .collect();
        let fit = fit_loglog_slope(&points).unwrap();
        prop_assert!((fit.slope - normal_equations_slope(&points)).abs() < 1e-10);
    }
}
