use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sde::sample_path;
use crate::stats::{hill_tail_index, median_of_means, run_ensemble, Welford};

use super::{DeterministicFlow, KernelParams, final_coefficients};

/// Number of blocks of the median-of-means estimator.
pub const MOM_BLOCKS: usize = 32;

/// Tail index at or below which the sample is treated as having no finite mean.
pub const HILL_DIVERGENCE_THRESHOLD: f64 = 1.15;

/// Smallest ensemble accepted by [`estimate_moment`].
pub const MIN_MOMENT_SAMPLES: usize = 1000;

/// Real parts `(a_R, b_R)` of the kernel coefficients at time `t`, one pair per
/// path `0..count` of the lineage `seed`, each path with `steps` steps.
pub fn coefficient_ensemble(
    params: KernelParams<f64>,
    t: f64,
    steps: usize,
    count: u64,
    seed: u64,
    parallel: bool,
) -> Result<Vec<[f64; 2]>> {
    if steps == 0 {
        return Err(Error::Grid("need at least one step".into()));
    }
    let dt = t / steps as f64;
    let flow = DeterministicFlow::new(params, dt, steps);
    run_ensemble(count, parallel, |i| {
        let path = sample_path::<f64>(1, t, dt, seed, i)?;
        let state = final_coefficients(&flow, path.increments())?;
        Ok([state.a.re, state.b.re])
    })
    .into_iter()
    .collect()
}

/// Sample second moments of `(a_R, b_R)` against `Var a_R = Var b_R = 2 Cov = alpha^2 t / 3`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoefficientStats {
    pub alpha: f64,
    pub t: f64,
    pub samples: usize,
    pub var_a: f64,
    pub var_a_se: f64,
    pub var_b: f64,
    pub var_b_se: f64,
    pub cov_ab: f64,
    pub cov_ab_se: f64,
    /// `Var(a_R - b_R / 2)`, expected `alpha^2 t / 4`.
    pub var_combo: f64,
    pub var_combo_se: f64,
    pub target_var: f64,
    pub target_cov: f64,
    pub target_combo: f64,
}

impl CoefficientStats {
    /// Largest `|estimate - target| / se` over the four statistics.
    pub fn max_z(&self) -> f64 {
        [
            (self.var_a - self.target_var) / self.var_a_se,
            (self.var_b - self.target_var) / self.var_b_se,
            (self.cov_ab - self.target_cov) / self.cov_ab_se,
            (self.var_combo - self.target_combo) / self.var_combo_se,
        ]
        .iter()
        .fold(0.0f64, |m, z| m.max(z.abs()))
    }
}

pub fn coefficient_stats(alpha: f64, t: f64, samples: &[[f64; 2]]) -> Result<CoefficientStats> {
    if samples.len() < 2 {
        return Err(Error::InvalidInput("need at least two samples".into()));
    }
    let n = samples.len() as f64;
    let ma = samples.iter().map(|s| s[0]).sum::<f64>() / n;
    let mb = samples.iter().map(|s| s[1]).sum::<f64>() / n;
    let correction = n / (n - 1.0);
    let moment = |f: &dyn Fn(f64, f64) -> f64| -> (f64, f64) {
        let w: Welford = samples.iter().map(|s| f(s[0] - ma, s[1] - mb)).collect();
        (w.mean() * correction, w.standard_error() * correction)
    };
    let (var_a, var_a_se) = moment(&|a, _| a * a);
    let (var_b, var_b_se) = moment(&|_, b| b * b);
    let (cov_ab, cov_ab_se) = moment(&|a, b| a * b);
    let (var_combo, var_combo_se) = moment(&|a, b| (a - 0.5 * b).powi(2));
    let a2t = alpha * alpha * t;
    Ok(CoefficientStats {
        alpha,
        t,
        samples: samples.len(),
        var_a,
        var_a_se,
        var_b,
        var_b_se,
        cov_ab,
        cov_ab_se,
        var_combo,
        var_combo_se,
        target_var: a2t / 3.0,
        target_cov: a2t / 6.0,
        target_combo: a2t / 4.0,
    })
}

/// `exp{(p / (alpha^2 t)) (a_R^2 - a_R b_R + b_R^2)}` per sample.
pub fn moment_values(p: f64, alpha: f64, t: f64, samples: &[[f64; 2]]) -> Vec<f64> {
    let scale = p / (alpha * alpha * t);
    samples
        .iter()
        .map(|s| (scale * (s[0] * s[0] - s[0] * s[1] + s[1] * s[1])).exp())
        .collect()
}

/// `1 / (1 - p/2)`, the limit value for `p < 2`.
pub fn moment_closed_form(p: f64) -> Option<f64> {
    (p < 2.0).then(|| 1.0 / (1.0 - 0.5 * p))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Mean,
    MedianOfMeans,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub p: f64,
    pub t: f64,
    pub estimate: f64,
    /// Not finite for the plain mean when `p >= 1`.
    pub stderr: f64,
    pub samples: usize,
    pub estimator: Estimator,
}

/// Growth of the estimate with the sample size for a moment with no finite value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DivergenceReport {
    pub p: f64,
    pub t: f64,
    pub sample_sizes: Vec<usize>,
    pub running_mean: Vec<f64>,
    pub running_median_of_means: Vec<f64>,
    pub hill_index: f64,
    pub hill_k: usize,
    /// Median-of-means grows at every decade and the tail index is at most
    /// [`HILL_DIVERGENCE_THRESHOLD`].
    pub diverging: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MomentOutcome {
    Finite(MomentEstimate),
    Divergent(DivergenceReport),
}

/// Running statistics on prefixes of `1000, 10000, ...` samples.
pub fn divergence_report(p: f64, t: f64, values: &[f64]) -> DivergenceReport {
    let mut sample_sizes = Vec::new();
    let mut size = MIN_MOMENT_SAMPLES;
    while size <= values.len() {
        sample_sizes.push(size);
        size *= 10;
    }
    let running_mean: Vec<f64> = sample_sizes
        .iter()
        .map(|&n| values[..n].iter().sum::<f64>() / n as f64)
        .collect();
    let running_median_of_means: Vec<f64> = sample_sizes
        .iter()
        .map(|&n| median_of_means(&values[..n], MOM_BLOCKS))
        .collect();
    let hill_k = (values.len() as f64).sqrt() as usize;
    let hill_index = hill_tail_index(values, hill_k);
    let growing = sample_sizes.len() >= 2 && running_median_of_means.windows(2).all(|w| w[1] > w[0]);
    DivergenceReport {
        p,
        t,
        sample_sizes,
        running_mean,
        running_median_of_means,
        hill_index,
        hill_k,
        diverging: growing && hill_index <= HILL_DIVERGENCE_THRESHOLD,
    }
}

/// Estimates `E exp{(p / (alpha^2 t)) (a_R^2 - a_R b_R + b_R^2)}`.
///
/// For `p >= 2` a [`DivergenceReport`] is returned. Otherwise the default
/// estimator is the plain mean for `p < 1` and median-of-means with
/// [`MOM_BLOCKS`] blocks for `p >= 1`.
pub fn estimate_moment(
    p: f64,
    alpha: f64,
    t: f64,
    samples: &[[f64; 2]],
    estimator: Option<Estimator>,
) -> Result<MomentOutcome> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::InvalidInput("moment order must be positive".into()));
    }
    if samples.len() < MIN_MOMENT_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_MOMENT_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let values = moment_values(p, alpha, t, samples);
    if p >= 2.0 {
        return Ok(MomentOutcome::Divergent(divergence_report(p, t, &values)));
    }
    let estimator = estimator.unwrap_or(if p < 1.0 {
        Estimator::Mean
    } else {
        Estimator::MedianOfMeans
    });
    let (estimate, stderr) = match estimator {
        Estimator::Mean => {
            let w: Welford = values.iter().copied().collect();
            (w.mean(), if p < 1.0 { w.standard_error() } else { f64::NAN })
        }
        Estimator::MedianOfMeans => {
            let n = values.len();
            let len = n / MOM_BLOCKS;
            let blocks: Welford = values
                .chunks(len.max(1))
                .take(MOM_BLOCKS)
                .map(|c| c.iter().sum::<f64>() / c.len() as f64)
                .collect();
            let se = (std::f64::consts::FRAC_PI_2).sqrt() * blocks.variance().sqrt() / (MOM_BLOCKS as f64).sqrt();
            (median_of_means(&values, MOM_BLOCKS), se)
        }
    };
    Ok(MomentOutcome::Finite(MomentEstimate {
        p,
        t,
        estimate,
        stderr,
        samples: samples.len(),
        estimator,
    }))
}

/// One row per outcome: `p,t,N,estimator,estimate,stderr,divergent`.
pub fn write_moments_csv<W: Write>(outcomes: &[MomentOutcome], out: W) -> Result<()> {
    let io = |e: csv::Error| Error::InvalidInput(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["p", "t", "N", "estimator", "estimate", "stderr", "divergent"])
        .map_err(io)?;
    for o in outcomes {
        let row = match o {
            MomentOutcome::Finite(e) => [
                e.p.to_string(),
                e.t.to_string(),
                e.samples.to_string(),
                match e.estimator {
                    Estimator::Mean => "mean".to_string(),
                    Estimator::MedianOfMeans => "median_of_means".to_string(),
                },
                e.estimate.to_string(),
                e.stderr.to_string(),
                "false".to_string(),
            ],
            MomentOutcome::Divergent(d) => [
                d.p.to_string(),
                d.t.to_string(),
                d.sample_sizes.last().copied().unwrap_or(0).to_string(),
                "running_median_of_means".to_string(),
                d.running_median_of_means.last().copied().unwrap_or(f64::NAN).to_string(),
                f64::NAN.to_string(),
                d.diverging.to_string(),
            ],
        };
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(())
}
