//! Monte Carlo estimators and the ordered ensemble runner.

use rayon::prelude::*;
use serde::Serialize;

/// Running mean and variance (Welford).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn standard_error(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for Welford {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut w = Self::new();
        for x in iter {
            w.push(x);
        }
        w
    }
}

/// Median of the means of `blocks` contiguous equal blocks (the remainder is
/// spread over the leading blocks).
pub fn median_of_means(values: &[f64], blocks: usize) -> f64 {
    let n = values.len();
    assert!(n > 0, "median of means of an empty sample");
    let blocks = blocks.clamp(1, n);
    let base = n / blocks;
    let extra = n % blocks;
    let mut means = Vec::with_capacity(blocks);
    let mut start = 0;
    for b in 0..blocks {
        let len = base + usize::from(b < extra);
        let block = &values[start..start + len];
        means.push(block.iter().sum::<f64>() / len as f64);
        start += len;
    }
    median(&mut means)
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Hill estimator of the tail index from the `k` largest positive values.
pub fn hill_tail_index(values: &[f64], k: usize) -> f64 {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| *v > 0.0).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let k = k.min(sorted.len().saturating_sub(1));
    if k == 0 {
        return f64::INFINITY;
    }
    let threshold = sorted[k].ln();
    let mean_excess = sorted[..k].iter().map(|v| v.ln() - threshold).sum::<f64>() / k as f64;
    1.0 / mean_excess
}

/// Ordinary least-squares slope of `y` against `x`.
pub fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Runs `f(0..count)` and returns results in index order.
///
/// The parallel and sequential paths produce identical vectors, so any
/// reduction done afterwards is deterministic.
pub fn run_ensemble<R, F>(count: u64, parallel: bool, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(u64) -> R + Sync + Send,
{
    if parallel {
        (0..count).into_par_iter().map(f).collect()
    } else {
        (0..count).map(f).collect()
    }
}
