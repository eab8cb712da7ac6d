use std::sync::Arc;

use crate::error::{Error, Result};
use crate::pure::{Picture, INVERSE_NORM_FLOOR};
use crate::scalar::{real, Real};
use crate::sde::BrownianPath;

use super::{DensityRole, DensityTrajectory};

fn driving<T: Real>(traj: &DensityTrajectory<T>) -> Result<&Arc<BrownianPath<T>>> {
    traj.driving
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("trajectory has no driving path".into()))
}

/// `rho = gamma / tr gamma` together with the innovation increments
/// `dB_j = dY_j - tr(L_j rho + rho L_j^+) dt`.
///
/// `traces` of the result carries `tr gamma`, the density of the innovation
/// measure.
pub fn normalize_master<T: Real>(
    linear: &DensityTrajectory<T>,
) -> Result<(DensityTrajectory<T>, Arc<BrownianPath<T>>)> {
    if linear.role != DensityRole::Linear {
        return Err(Error::InvalidInput("normalize_master expects a linear trajectory".into()));
    }
    let path = driving(linear)?;
    if let Some(k) = linear.traces.iter().position(|&t| !(t > T::zero())) {
        return Err(Error::TraceCollapse { step: k });
    }
    let innovation = Arc::new(path.shifted(|k, j| -linear.feedback(k, j)));
    let scale = |values: &[T]| -> Vec<T> {
        linear
            .recorded
            .iter()
            .zip(values)
            .map(|(&k, &v)| v / linear.traces[k])
            .collect()
    };
    let out = DensityTrajectory {
        model: linear.model.clone(),
        driving: Some(innovation.clone()),
        picture: Some(Picture::Innovation),
        role: DensityRole::Normalized,
        dt: linear.dt,
        steps: linear.steps,
        recorded: linear.recorded.clone(),
        states: linear
            .recorded
            .iter()
            .zip(&linear.states)
            .map(|(&k, g)| g / real(linear.traces[k]))
            .collect(),
        min_eigenvalues: scale(&linear.min_eigenvalues),
        c_norms: scale(&linear.c_norms),
        traces: linear.traces.clone(),
        feedback: linear.feedback.clone(),
        corrections: Vec::new(),
        clipped_steps: 0,
    };
    Ok((out, innovation))
}

/// Rebuilds `gamma = rho tr gamma` from a normalised trajectory.
///
/// The inverse trace follows `d(1/tr gamma) = -(1/tr gamma) sum_j tr(L_j rho + rho L_j^+) dB_j`
/// from `1`, and the output is `dY_j = dB_j + tr(L_j rho + rho L_j^+) dt`.
/// Inverse-trace values at or below the floor are clipped and counted.
pub fn lift_master<T: Real>(
    normalized: &DensityTrajectory<T>,
) -> Result<(DensityTrajectory<T>, Arc<BrownianPath<T>>)> {
    if normalized.role != DensityRole::Normalized {
        return Err(Error::InvalidInput("lift_master expects a normalised trajectory".into()));
    }
    let path = driving(normalized)?;
    let n = path.channels();
    let floor = T::lit(INVERSE_NORM_FLOOR);
    let mut inverse = Vec::with_capacity(path.steps() + 1);
    let mut u = T::one();
    let mut clipped = 0;
    inverse.push(u);
    for k in 0..path.steps() {
        let dv = (0..n).fold(T::zero(), |acc, j| acc + normalized.feedback(k, j) * path.increment(k, j));
        u *= T::one() - dv;
        if !(u > floor) {
            u = floor;
            clipped += 1;
        }
        inverse.push(u);
    }
    let output = Arc::new(path.shifted(|k, j| normalized.feedback(k, j)));
    let scale = |values: &[T]| -> Vec<T> {
        normalized
            .recorded
            .iter()
            .zip(values)
            .map(|(&k, &v)| v / inverse[k])
            .collect()
    };
    let out = DensityTrajectory {
        model: normalized.model.clone(),
        driving: Some(output.clone()),
        picture: Some(Picture::Output),
        role: DensityRole::Linear,
        dt: normalized.dt,
        steps: normalized.steps,
        recorded: normalized.recorded.clone(),
        states: normalized
            .recorded
            .iter()
            .zip(&normalized.states)
            .map(|(&k, g)| g / real(inverse[k]))
            .collect(),
        min_eigenvalues: scale(&normalized.min_eigenvalues),
        c_norms: scale(&normalized.c_norms),
        traces: inverse.iter().map(|&u| T::one() / u).collect(),
        feedback: normalized.feedback.clone(),
        corrections: Vec::new(),
        clipped_steps: clipped,
    };
    Ok((out, output))
}
