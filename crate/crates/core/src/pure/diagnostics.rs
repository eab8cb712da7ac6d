use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::vector_norm_sq;
use crate::operators::ModelSpec;
use crate::scalar::{CVector, Real};
use crate::sde::BrownianPath;
use crate::stats::{least_squares_slope, run_ensemble, Welford};

use super::{simulate_linear, PureTrajectory, Recording};

/// Per-time ensemble statistics of `||chi||^2` against its initial value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MartingaleReport {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    /// `||chi_0||^2`, the value the mean must keep.
    pub bound: f64,
    /// Discretisation allowance added to the `sigma * se` band.
    pub allowance: f64,
    pub sigma: f64,
    pub violated: Vec<bool>,
    pub any_violated: bool,
    pub c_mean: Vec<f64>,
    pub c_se: Vec<f64>,
}

/// Per-time ensemble mean of a quantity against a time-dependent upper bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthReport {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    pub bound: Vec<f64>,
    pub sigma: f64,
    pub violated: Vec<bool>,
    pub any_violated: bool,
}

/// `e^{alpha t} [c0 + alpha t (n0 + beta)]`, the growth estimate for `E ||C chi(t)||^2`
/// given `c0 = ||C chi_0||^2` and `n0 = ||chi_0||^2`.
pub fn growth_bound(alpha: f64, beta: f64, t: f64, c0: f64, n0: f64) -> f64 {
    (alpha * t).exp() * (c0 + alpha * t * (n0 + beta))
}

/// `c dt` for a first-order bias `c dt`, estimated from the same statistic at
/// `dt` and `dt/2`.
pub fn halving_allowance(at_dt: f64, at_half_dt: f64) -> f64 {
    2.0 * (at_dt - at_half_dt).abs()
}

fn common_grid<'a, T: Real>(trajectories: &'a [PureTrajectory<T>]) -> Result<&'a PureTrajectory<T>> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::InvalidInput("empty ensemble".into()))?;
    if trajectories.len() < 2 {
        return Err(Error::InvalidInput("ensemble needs at least two trajectories".into()));
    }
    if trajectories.iter().any(|t| t.recorded != first.recorded) {
        return Err(Error::InvalidInput("ensemble members recorded on different grids".into()));
    }
    Ok(first)
}

/// Flags times where `|mean - ||chi_0||^2| > sigma * se + allowance`.
pub fn martingale_report<T: Real>(
    trajectories: &[PureTrajectory<T>],
    sigma: f64,
    allowance: f64,
) -> Result<MartingaleReport> {
    let first = common_grid(trajectories)?;
    let bound = first.norm_sq[0].as_f64();
    let mut mean = Vec::new();
    let mut se = Vec::new();
    let mut c_mean = Vec::new();
    let mut c_se = Vec::new();
    for (i, &k) in first.recorded.iter().enumerate() {
        let w: Welford = trajectories.iter().map(|t| t.norm_sq[k].as_f64()).collect();
        let c: Welford = trajectories.iter().map(|t| t.c_norm_sq[i].as_f64()).collect();
        mean.push(w.mean());
        se.push(w.standard_error());
        c_mean.push(c.mean());
        c_se.push(c.standard_error());
    }
    let violated: Vec<bool> = mean
        .iter()
        .zip(&se)
        .map(|(m, s)| (m - bound).abs() > sigma * s + allowance)
        .collect();
    Ok(MartingaleReport {
        times: first.recorded_times().into_iter().map(|t| t.as_f64()).collect(),
        any_violated: violated.iter().any(|&v| v),
        mean,
        se,
        bound,
        allowance,
        sigma,
        violated,
        c_mean,
        c_se,
    })
}

/// Checks `E ||C x(t)||^2 <= e^{alpha t}[||C x_0||^2 + alpha t (||x_0||^2 + beta)]`,
/// flagging times where `mean - sigma * se` exceeds the bound.
pub fn growth_report<T: Real>(
    trajectories: &[PureTrajectory<T>],
    alpha: f64,
    beta: f64,
    sigma: f64,
) -> Result<GrowthReport> {
    let first = common_grid(trajectories)?;
    let c0 = first.c_norm_sq[0].as_f64();
    let n0 = vector_norm_sq(&first.states[0]).as_f64();
    let times: Vec<f64> = first.recorded_times().into_iter().map(|t| t.as_f64()).collect();
    let mut mean = Vec::new();
    let mut se = Vec::new();
    for i in 0..first.recorded.len() {
        let w: Welford = trajectories.iter().map(|t| t.c_norm_sq[i].as_f64()).collect();
        mean.push(w.mean());
        se.push(w.standard_error());
    }
    let bound: Vec<f64> = times.iter().map(|&t| growth_bound(alpha, beta, t, c0, n0)).collect();
    let violated: Vec<bool> = mean
        .iter()
        .zip(&se)
        .zip(&bound)
        .map(|((m, s), b)| m - sigma * s > *b)
        .collect();
    Ok(GrowthReport {
        times,
        any_violated: violated.iter().any(|&v| v),
        mean,
        se,
        bound,
        sigma,
        violated,
    })
}

/// Errors of coarser truncations against the finest one at the final time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GalerkinTable {
    pub dims: Vec<usize>,
    /// Largest control eigenvalue `lambda_m` at each coarse dimension.
    pub lambdas: Vec<f64>,
    /// `E ||chi_{m_K}(T) - chi_{m_k}(T)||^2` for each coarse `m_k`.
    pub mean_sq_error: Vec<f64>,
    pub se: Vec<f64>,
    pub rms_error: Vec<f64>,
    /// Least-squares slope of `ln rms_error` against `ln lambda_m`, over the
    /// dimensions with nonzero error.
    pub slope: Option<f64>,
    pub strictly_decreasing: bool,
}

fn embed<T: Real>(x: &CVector<T>, m: usize) -> CVector<T> {
    let mut out = CVector::zeros(m);
    out.rows_mut(0, x.len()).copy_from(x);
    out
}

/// Simulates the linear filter at every dimension of `family` along each
/// shared output path and tabulates the truncation error.
pub fn galerkin_convergence<T: Real>(
    family: &[Arc<ModelSpec<T>>],
    chi0: &CVector<T>,
    paths: &[Arc<BrownianPath<T>>],
    parallel: bool,
) -> Result<GalerkinTable> {
    if family.len() < 2 {
        return Err(Error::InvalidInput("need at least two truncation levels".into()));
    }
    if family.windows(2).any(|w| w[0].dim() >= w[1].dim()) {
        return Err(Error::InvalidInput("dimensions must increase".into()));
    }
    if chi0.len() > family[0].dim() {
        return Err(Error::DimensionMismatch {
            expected: family[0].dim(),
            found: chi0.len(),
        });
    }
    let finest = family.last().expect("nonempty family").dim();
    let per_path = run_ensemble(paths.len() as u64, parallel, |i| -> Result<Vec<f64>> {
        let path = &paths[i as usize];
        let finals = family
            .iter()
            .map(|model| {
                let traj = simulate_linear(model, &embed(chi0, model.dim()), path, Recording::endpoints())?;
                Ok(embed(traj.final_state(), finest))
            })
            .collect::<Result<Vec<_>>>()?;
        let reference = finals.last().expect("nonempty family");
        Ok(finals[..finals.len() - 1]
            .iter()
            .map(|x| vector_norm_sq(&(reference - x)).as_f64())
            .collect())
    });
    let per_path = per_path.into_iter().collect::<Result<Vec<_>>>()?;
    let coarse = family.len() - 1;
    let mut mean_sq_error = Vec::with_capacity(coarse);
    let mut se = Vec::with_capacity(coarse);
    for k in 0..coarse {
        let w: Welford = per_path.iter().map(|e| e[k]).collect();
        mean_sq_error.push(w.mean());
        se.push(w.standard_error());
    }
    let rms_error: Vec<f64> = mean_sq_error.iter().map(|e| e.sqrt()).collect();
    let lambdas: Vec<f64> = family[..coarse]
        .iter()
        .map(|m| m.control().largest().as_f64())
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = lambdas
        .iter()
        .zip(&rms_error)
        .filter(|(_, e)| **e > 0.0)
        .map(|(l, e)| (l.ln(), e.ln()))
        .unzip();
    let slope = (xs.len() >= 2).then(|| least_squares_slope(&xs, &ys));
    Ok(GalerkinTable {
        dims: family[..coarse].iter().map(|m| m.dim()).collect(),
        lambdas,
        strictly_decreasing: mean_sq_error.windows(2).all(|w| w[1] < w[0]),
        mean_sq_error,
        se,
        rms_error,
        slope,
    })
}
