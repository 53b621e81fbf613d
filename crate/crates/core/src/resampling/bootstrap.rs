use serde::{Deserialize, Serialize};

use super::RngStream;
use crate::stats::percentile_sorted;
use crate::{Error, Result};

pub const DEFAULT_RESAMPLES: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub resamples: usize,
}

impl ConfidenceInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// The sorted statistic values of a bootstrap run; intervals at any level can be read
/// from the same draws.
#[derive(Clone, Debug)]
pub struct BootstrapDistribution {
    sorted: Vec<f64>,
}

impl BootstrapDistribution {
    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    /// Percentile interval: the α/2 and 1 − α/2 percentiles with α = 1 − level,
    /// linearly interpolated between order statistics.
    pub fn interval(&self, level: f64) -> Result<ConfidenceInterval> {
        check_level(level)?;
        let alpha = 1.0 - level;
        Ok(ConfidenceInterval {
            lower: percentile_sorted(&self.sorted, alpha / 2.0),
            upper: percentile_sorted(&self.sorted, 1.0 - alpha / 2.0),
            level,
            resamples: self.sorted.len(),
        })
    }
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!("confidence level must lie in (0, 1), got {level}")));
    }
    Ok(())
}

/// Evaluates `statistic` on `resamples` index vectors, each `data_size` draws with
/// replacement from `0..data_size`.
///
/// Resample `i` uses `stream.substream(i)`, so any single resample can be replayed and
/// the result does not depend on evaluation order. `stream` itself is not advanced.
pub fn bootstrap_distribution<F>(
    statistic: F,
    data_size: usize,
    resamples: usize,
    stream: &RngStream,
) -> Result<BootstrapDistribution>
where
    F: Fn(&[usize]) -> f64,
{
    if data_size < 2 {
        return Err(Error::domain(format!("bootstrap needs at least 2 items, got {data_size}")));
    }
    if resamples < 100 {
        return Err(Error::domain(format!("bootstrap needs at least 100 resamples, got {resamples}")));
    }
    let mut idx = vec![0usize; data_size];
    let mut values = Vec::with_capacity(resamples);
    for r in 0..resamples {
        let mut s = stream.substream(r as u64);
        for slot in idx.iter_mut() {
            *slot = s.index(data_size);
        }
        let v = statistic(&idx);
        if !v.is_finite() {
            return Err(Error::NonFiniteStatistic {
                index: r,
                seed: stream.seed(),
            });
        }
        values.push(v);
    }
    values.sort_by(f64::total_cmp);
    Ok(BootstrapDistribution { sorted: values })
}

/// Percentile-bootstrap confidence interval of `statistic`.
pub fn percentile_bootstrap_ci<F>(
    statistic: F,
    data_size: usize,
    resamples: usize,
    level: f64,
    stream: &RngStream,
) -> Result<ConfidenceInterval>
where
    F: Fn(&[usize]) -> f64,
{
    check_level(level)?;
    bootstrap_distribution(statistic, data_size, resamples, stream)?.interval(level)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_of(data: &[f64]) -> impl Fn(&[usize]) -> f64 + '_ {
        move |idx: &[usize]| idx.iter().map(|&i| data[i]).sum::<f64>() / idx.len() as f64
    }

    #[test]
    fn constant_statistic_gives_point_interval() {
        let ci = percentile_bootstrap_ci(|_| 3.5, 10, 200, 0.95, &RngStream::new(1)).unwrap();
        assert_eq!((ci.lower, ci.upper), (3.5, 3.5));
        assert_eq!(ci.resamples, 200);
    }

    #[test]
    fn width_matches_clt() {
        let mut s = RngStream::new(17);
        let data: Vec<f64> = (0..10_000).map(|_| s.standard_normal()).collect();
        let ci = percentile_bootstrap_ci(mean_of(&data), data.len(), 2000, 0.95, &RngStream::new(18))
            .unwrap();
        let expected = 2.0 * 1.96 / 100.0;
        assert!((ci.width() - expected).abs() < 0.2 * expected, "{}", ci.width());
    }

    #[test]
    fn coverage_near_nominal() {
        let root = RngStream::new(2024);
        let mut covered = 0;
        for d in 0..500 {
            let mut s = root.child("data", d);
            let data: Vec<f64> = (0..50).map(|_| s.normal(1.0, 2.0)).collect();
            let ci =
                percentile_bootstrap_ci(mean_of(&data), 50, 1000, 0.95, &root.child("boot", d)).unwrap();
            if ci.contains(1.0) {
                covered += 1;
            }
        }
        let cov = covered as f64 / 500.0;
        assert!((0.92..=0.98).contains(&cov), "coverage {cov}");
    }

    #[test]
    fn nested_levels() {
        let data: Vec<f64> = (0..30).map(|i| (i * i % 17) as f64).collect();
        let dist = bootstrap_distribution(mean_of(&data), 30, 500, &RngStream::new(4)).unwrap();
        let c95 = dist.interval(0.95).unwrap();
        let c99 = dist.interval(0.99).unwrap();
        assert!(c99.lower <= c95.lower && c95.upper <= c99.upper);
    }

    #[test]
    fn non_finite_statistic_reports_resample() {
        let err = percentile_bootstrap_ci(
            |idx| if idx[0] == 0 { f64::NAN } else { 1.0 },
            5,
            100,
            0.9,
            &RngStream::new(3),
        )
        .unwrap_err();
        match err {
            Error::NonFiniteStatistic { seed, .. } => assert_eq!(seed, RngStream::new(3).seed()),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn preconditions() {
        let s = RngStream::new(1);
        assert!(percentile_bootstrap_ci(|_| 0.0, 1, 100, 0.95, &s).is_err());
        assert!(percentile_bootstrap_ci(|_| 0.0, 5, 99, 0.95, &s).is_err());
        assert!(percentile_bootstrap_ci(|_| 0.0, 5, 100, 1.0, &s).is_err());
    }

    #[test]
    fn deterministic() {
        let data: Vec<f64> = (0..20).map(f64::from).collect();
        let s = RngStream::new(99);
        let a = percentile_bootstrap_ci(mean_of(&data), 20, 300, 0.9, &s).unwrap();
        let b = percentile_bootstrap_ci(mean_of(&data), 20, 300, 0.9, &s).unwrap();
        assert_eq!(a, b);
    }
}
