use varbench::resampling::RngStream;
use varbench::simulate::{detection_rates, robustness_sweep, Criterion, RatePoint, SimEstimator, SimulationConfig};

fn small(repetitions: usize) -> SimulationConfig {
    SimulationConfig {
        repetitions,
        bootstrap_resamples: 300,
        ..SimulationConfig::default()
    }
}

fn within(a: &RatePoint, b: &RatePoint) -> f64 {
    3.0 * (a.std_error.powi(2) + b.std_error.powi(2)).sqrt()
}

#[test]
fn oracle_dominates_every_criterion() {
    let cfg = SimulationConfig {
        estimators: [SimEstimator::Ideal].into(),
        ..small(2000)
    };
    let curves = detection_rates(&cfg, &RngStream::new(1)).unwrap();
    let oracle = |p| curves.point(SimEstimator::Ideal, Criterion::Oracle, p).unwrap();
    let null = oracle(0.5);
    assert!(null.rate <= cfg.alpha + 3.0 * null.std_error.max(1e-3), "oracle false positives {}", null.rate);
    for &p in cfg.pab_grid.iter().filter(|p| **p > 0.5) {
        for c in [Criterion::SinglePoint, Criterion::AverageDelta, Criterion::PabTest] {
            let other = curves.point(SimEstimator::Ideal, c, p).unwrap();
            assert!(oracle(p).rate + within(oracle(p), other) >= other.rate, "{c:?} beats the oracle at {p}");
        }
    }
}

#[test]
fn biased_estimator_never_adds_power() {
    let cfg = SimulationConfig {
        criteria: [Criterion::PabTest].into(),
        pab_grid: vec![0.75, 0.8, 0.85, 0.9, 0.95],
        ..small(2000)
    };
    let curves = detection_rates(&cfg, &RngStream::new(2)).unwrap();
    for &p in &cfg.pab_grid {
        let ideal = curves.point(SimEstimator::Ideal, Criterion::PabTest, p).unwrap();
        let biased = curves.point(SimEstimator::Biased, Criterion::PabTest, p).unwrap();
        assert!(biased.rate <= ideal.rate + within(ideal, biased), "at {p}: {} vs {}", biased.rate, ideal.rate);
    }
}

#[test]
fn power_grows_with_sample_size() {
    let cfg = SimulationConfig {
        estimators: [SimEstimator::Ideal].into(),
        pab_grid: vec![0.9, 1.0],
        ..small(1000)
    };
    let curves = robustness_sweep(&cfg, &[5, 10, 20, 50], &[], &RngStream::new(3)).unwrap();
    for c in Criterion::ALL {
        for p in [0.9, 1.0] {
            let line: Vec<_> = curves
                .by_sample_size
                .iter()
                .filter(|s| s.criterion == c && s.true_pab == p)
                .collect();
            assert_eq!(line.len(), 4);
            for w in line.windows(2) {
                let slack = 3.0 * (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt();
                assert!(w[1].rate + slack >= w[0].rate, "{c:?} at {p}: {} -> {}", w[0].rate, w[1].rate);
            }
        }
    }
}

#[test]
fn gamma_near_half_reduces_to_a_significance_test() {
    let cfg = SimulationConfig {
        estimators: [SimEstimator::Ideal].into(),
        criteria: [Criterion::PabTest].into(),
        pab_grid: vec![0.5, 0.6, 0.7],
        ..small(1000)
    };
    let curves = robustness_sweep(&cfg, &[], &[0.5 + 1e-9, 0.75], &RngStream::new(4)).unwrap();
    let point = |g: f64, p: f64| curves.by_gamma.iter().find(|s| s.gamma == g && s.true_pab == p).unwrap();
    // Near 0.5 the verdict only asks the lower bound to clear 0.5, which is weaker
    // than also asking the upper bound to clear a larger gamma.
    for p in [0.5, 0.6, 0.7] {
        let (loose, strict) = (point(0.5 + 1e-9, p), point(0.75, p));
        let slack = 3.0 * (loose.std_error.powi(2) + strict.std_error.powi(2)).sqrt();
        assert!(loose.rate + slack >= strict.rate, "at {p}: {} vs {}", loose.rate, strict.rate);
    }
    let null = point(0.5 + 1e-9, 0.5);
    assert!(null.rate <= cfg.alpha + 3.0 * null.std_error, "{}", null.rate);
}

#[test]
fn doubling_repetitions_stays_within_monte_carlo_error() {
    let base = SimulationConfig {
        estimators: [SimEstimator::Ideal].into(),
        pab_grid: vec![0.5, 0.75, 0.9],
        ..small(1000)
    };
    let doubled = SimulationConfig {
        repetitions: 2000,
        ..base.clone()
    };
    // Repetition streams are indexed, so the larger run extends the smaller one.
    let a = detection_rates(&base, &RngStream::new(5)).unwrap();
    let b = detection_rates(&doubled, &RngStream::new(5)).unwrap();
    for (x, y) in a.points.iter().zip(&b.points) {
        assert_eq!((x.criterion, x.true_pab), (y.criterion, y.true_pab));
        assert!((x.rate - y.rate).abs() <= within(x, y).max(0.01), "{x:?} vs {y:?}");
    }
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let cfg = SimulationConfig {
        pab_grid: vec![0.5, 0.8],
        ..small(200)
    };
    let run = |workers| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .unwrap()
            .install(|| detection_rates(&cfg, &RngStream::new(7)).unwrap())
    };
    assert_eq!(run(1), run(4));
}
