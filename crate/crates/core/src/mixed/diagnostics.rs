use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{hermitize, max_modulus, trace_norm_hermitian};
use crate::operators::ModelSpec;
use crate::pure::{growth_bound, GrowthReport, Recording};
use crate::scalar::Real;
use crate::sde::{BrownianPath, SdeSystem};
use crate::stats::{run_ensemble, Welford};

use super::{c_trace, simulate_linear_master, DensityOperator, DensityRole, DensityTrajectory, NonlinearMasterSystem};

/// Ensemble statistics of `tr gamma` for linear master trajectories.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceMartingaleReport {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    /// `tr gamma_0`.
    pub bound: f64,
    pub allowance: f64,
    pub sigma: f64,
    pub violated: Vec<bool>,
    pub any_violated: bool,
    /// Largest per-step residual `|T_{k+1} - T_k - T_k sum_j c_j dY_j|` over the ensemble.
    pub max_residual: f64,
    /// Mean and standard error of `||gamma||_C` at the recorded times.
    pub c_mean: Vec<f64>,
    pub c_se: Vec<f64>,
}

fn common_grid<T: Real>(trajectories: &[DensityTrajectory<T>], role: DensityRole) -> Result<&DensityTrajectory<T>> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::InvalidInput("empty ensemble".into()))?;
    if trajectories.len() < 2 {
        return Err(Error::InvalidInput("ensemble needs at least two trajectories".into()));
    }
    if trajectories
        .iter()
        .any(|t| t.recorded != first.recorded || t.steps != first.steps)
    {
        return Err(Error::InvalidInput("ensemble members recorded on different grids".into()));
    }
    if trajectories.iter().any(|t| t.role != role) {
        return Err(Error::InvalidInput("ensemble members have the wrong role".into()));
    }
    Ok(first)
}

/// Per-step residual of the discrete trace equation
/// `T_{k+1} = T_k + T_k sum_j c_j dY_j` along a linear trajectory.
pub fn trace_residuals<T: Real>(traj: &DensityTrajectory<T>) -> Result<Vec<T>> {
    let path = traj
        .driving
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("trajectory has no driving path".into()))?;
    let n = path.channels();
    Ok((0..traj.steps)
        .map(|k| {
            let t = traj.traces[k];
            let dv = (0..n).fold(T::zero(), |a, j| a + traj.feedback(k, j) * path.increment(k, j));
            (traj.traces[k + 1] - t - t * dv).abs()
        })
        .collect())
}

/// Flags times where `|E tr gamma(t) - tr gamma_0| > sigma * se + allowance`
/// and records the pathwise trace-equation residual.
pub fn trace_martingale_report<T: Real>(
    trajectories: &[DensityTrajectory<T>],
    sigma: f64,
    allowance: f64,
) -> Result<TraceMartingaleReport> {
    let first = common_grid(trajectories, DensityRole::Linear)?;
    let bound = first.traces[0].as_f64();
    let mut mean = Vec::new();
    let mut se = Vec::new();
    let mut c_mean = Vec::new();
    let mut c_se = Vec::new();
    for (i, &k) in first.recorded.iter().enumerate() {
        let w: Welford = trajectories.iter().map(|t| t.traces[k].as_f64()).collect();
        let c: Welford = trajectories.iter().map(|t| t.c_norms[i].as_f64()).collect();
        mean.push(w.mean());
        se.push(w.standard_error());
        c_mean.push(c.mean());
        c_se.push(c.standard_error());
    }
    let mut max_residual = 0.0f64;
    for t in trajectories {
        for r in trace_residuals(t)? {
            max_residual = max_residual.max(r.as_f64());
        }
    }
    let violated: Vec<bool> = mean
        .iter()
        .zip(&se)
        .map(|(m, s)| (m - bound).abs() > sigma * s + allowance)
        .collect();
    Ok(TraceMartingaleReport {
        times: first.recorded_times().into_iter().map(|t| t.as_f64()).collect(),
        any_violated: violated.iter().any(|&v| v),
        mean,
        se,
        bound,
        allowance,
        sigma,
        violated,
        max_residual,
        c_mean,
        c_se,
    })
}

/// Checks `E ||gamma(t)||_C <= e^{alpha t}[||gamma_0||_C + alpha t (tr gamma_0 + beta)]`
/// with the norm evaluated as `tr(C gamma C)`, its value on the positive
/// exact solution. The absolute value in `tr(C |gamma| C)` would turn the
/// zero-mean negative eigenvalues of the discrete solution into a bias of
/// order `sqrt(t dt)`.
pub fn master_growth_report<T: Real>(
    trajectories: &[DensityTrajectory<T>],
    alpha: f64,
    beta: f64,
    sigma: f64,
) -> Result<GrowthReport> {
    let first = common_grid(trajectories, DensityRole::Linear)?;
    let ladder = first.model().control();
    let c0 = first.c_norms[0].as_f64();
    let n0 = first.traces[0].as_f64();
    let times: Vec<f64> = first.recorded_times().into_iter().map(|t| t.as_f64()).collect();
    let mut mean = Vec::new();
    let mut se = Vec::new();
    for i in 0..first.recorded.len() {
        let w: Welford = trajectories
            .iter()
            .map(|t| c_trace(&t.states[i], ladder).as_f64())
            .collect();
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

/// Per-step distance between a normalised trajectory and one step of the
/// nonlinear master scheme from its previous state on the same increments.
///
/// Requires every step to be recorded.
pub fn nonlinear_master_residuals<T: Real>(traj: &DensityTrajectory<T>) -> Result<Vec<T>> {
    if traj.role != DensityRole::Normalized {
        return Err(Error::InvalidInput("residual needs a normalised trajectory".into()));
    }
    if traj.recorded.len() != traj.steps + 1 {
        return Err(Error::InvalidInput("residual needs every step recorded".into()));
    }
    let path = traj
        .driving
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("trajectory has no driving path".into()))?;
    let system = NonlinearMasterSystem { model: &traj.model };
    (0..traj.steps)
        .map(|k| {
            let mut next = system.step(&traj.states[k], path.dt(), path.increments_at(k));
            system.post_step(k + 1, &mut next)?;
            Ok(max_modulus(&(next - &traj.states[k + 1])))
        })
        .collect()
}

/// Monte Carlo comparison of `E tr|gamma_1(t) - gamma_2(t)|` against
/// `2 t ||H_2 - H_1|| tr gamma_0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SensitivityReport {
    pub times: Vec<f64>,
    pub lhs_mean: Vec<f64>,
    pub lhs_se: Vec<f64>,
    pub rhs: Vec<f64>,
    /// `||H_2 - H_1||` (spectral norm).
    pub hamiltonian_distance: f64,
    pub sigma: f64,
    pub allowance: f64,
    pub violated: Vec<bool>,
    pub any_violated: bool,
}

/// Runs the linear master equation for both models on every shared path.
///
/// A time is flagged when `lhs_mean - sigma * se - allowance > rhs`.
#[allow(clippy::too_many_arguments)]
pub fn hamiltonian_sensitivity<T: Real>(
    model1: &Arc<ModelSpec<T>>,
    model2: &Arc<ModelSpec<T>>,
    gamma0: &DensityOperator<T>,
    paths: &[Arc<BrownianPath<T>>],
    recording: Recording,
    sigma: f64,
    allowance: f64,
    parallel: bool,
) -> Result<SensitivityReport> {
    if model1.dim() != model2.dim() || model1.channels() != model2.channels() {
        return Err(Error::IncompatibleModels("dimensions or channel counts differ".into()));
    }
    if model1
        .couplings()
        .iter()
        .zip(model2.couplings())
        .any(|(a, b)| a.entries() != b.entries())
    {
        return Err(Error::IncompatibleModels("coupling operators differ".into()));
    }
    if paths.len() < 2 {
        return Err(Error::InvalidInput("need at least two paths".into()));
    }
    let distance = model2
        .hamiltonian()
        .sub(model1.hamiltonian())?
        .spectral_norm()
        .as_f64();
    let tr0 = gamma0.trace().as_f64();
    let per_path = run_ensemble(paths.len() as u64, parallel, |i| -> Result<(Vec<f64>, Vec<f64>)> {
        let path = &paths[i as usize];
        let a = simulate_linear_master(model1, gamma0, path, recording)?;
        let b = simulate_linear_master(model2, gamma0, path, recording)?;
        let lhs = a
            .states
            .iter()
            .zip(&b.states)
            .map(|(x, y)| {
                let mut d = x - y;
                hermitize(&mut d);
                trace_norm_hermitian(&d).as_f64()
            })
            .collect();
        Ok((a.recorded_times().into_iter().map(|t| t.as_f64()).collect(), lhs))
    });
    let per_path = per_path.into_iter().collect::<Result<Vec<_>>>()?;
    let times = per_path[0].0.clone();
    let mut lhs_mean = Vec::with_capacity(times.len());
    let mut lhs_se = Vec::with_capacity(times.len());
    for i in 0..times.len() {
        let w: Welford = per_path.iter().map(|(_, l)| l[i]).collect();
        lhs_mean.push(w.mean());
        lhs_se.push(w.standard_error());
    }
    let rhs: Vec<f64> = times.iter().map(|&t| 2.0 * t * distance * tr0).collect();
    let violated: Vec<bool> = lhs_mean
        .iter()
        .zip(&lhs_se)
        .zip(&rhs)
        .map(|((m, s), r)| m - sigma * s - allowance > *r)
        .collect();
    Ok(SensitivityReport {
        times,
        any_violated: violated.iter().any(|&v| v),
        lhs_mean,
        lhs_se,
        rhs,
        hamiltonian_distance: distance,
        sigma,
        allowance,
        violated,
    })
}
