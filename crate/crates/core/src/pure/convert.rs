use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::{real, Real};
use crate::sde::BrownianPath;

use super::{Picture, PureTrajectory, StateRole};

/// Lower bound applied to the inverse norm `1/||chi||^2` when lifting.
pub const INVERSE_NORM_FLOOR: f64 = 1e-12;

/// `phi = chi / ||chi||` together with the innovation increments
/// `dB_j = dY_j - 2 <L_S^j>_chi dt` on the same grid.
///
/// `norm_sq` of the result carries `||chi||^2`, the density of the
/// innovation measure.
pub fn normalize_trajectory<T: Real>(
    linear: &PureTrajectory<T>,
) -> Result<(PureTrajectory<T>, Arc<BrownianPath<T>>)> {
    if linear.role != StateRole::Linear {
        return Err(Error::InvalidInput("normalize_trajectory expects a linear trajectory".into()));
    }
    if let Some(k) = linear.norm_sq.iter().position(|&n| !(n > T::zero())) {
        return Err(Error::DegenerateState { step: k });
    }
    let two = T::lit(2.0);
    let innovation = Arc::new(linear.driving.shifted(|k, j| -two * linear.feedback(k, j)));
    let states = linear
        .recorded
        .iter()
        .zip(&linear.states)
        .map(|(&k, x)| x / real(linear.norm_sq[k].sqrt()))
        .collect();
    let c_norm_sq = linear
        .recorded
        .iter()
        .zip(&linear.c_norm_sq)
        .map(|(&k, &c)| c / linear.norm_sq[k])
        .collect();
    let out = PureTrajectory {
        model: linear.model.clone(),
        driving: innovation.clone(),
        role: StateRole::Normalized,
        picture: Picture::Innovation,
        recorded: linear.recorded.clone(),
        states,
        c_norm_sq,
        norm_sq: linear.norm_sq.clone(),
        feedback: linear.feedback.clone(),
        defects: Vec::new(),
        clipped_steps: 0,
    };
    Ok((out, innovation))
}

/// Rebuilds `chi = phi ||chi||` from a normalised trajectory.
///
/// The inverse norm follows `d(1/||chi||^2) = -(2/||chi||^2) sum_j <L_S^j>_phi dB_j`
/// from `1`, and the output is `dY_j = dB_j + 2 <L_S^j>_phi dt`. Values of the
/// inverse norm at or below [`INVERSE_NORM_FLOOR`] are clipped to it and
/// counted in `clipped_steps`.
pub fn lift_to_linear<T: Real>(
    normalized: &PureTrajectory<T>,
) -> Result<(PureTrajectory<T>, Arc<BrownianPath<T>>)> {
    if normalized.role != StateRole::Normalized {
        return Err(Error::InvalidInput("lift_to_linear expects a normalised trajectory".into()));
    }
    let path = &normalized.driving;
    let n = path.channels();
    let two = T::lit(2.0);
    let floor = T::lit(INVERSE_NORM_FLOOR);
    let mut inverse = Vec::with_capacity(path.steps() + 1);
    let mut u = T::one();
    let mut clipped = 0;
    inverse.push(u);
    for k in 0..path.steps() {
        let dv = (0..n).fold(T::zero(), |acc, j| acc + normalized.feedback(k, j) * path.increment(k, j));
        u *= T::one() - two * dv;
        if !(u > floor) {
            u = floor;
            clipped += 1;
        }
        inverse.push(u);
    }
    let output = Arc::new(path.shifted(|k, j| two * normalized.feedback(k, j)));
    let states = normalized
        .recorded
        .iter()
        .zip(&normalized.states)
        .map(|(&k, x)| x / real(inverse[k].sqrt()))
        .collect();
    let c_norm_sq = normalized
        .recorded
        .iter()
        .zip(&normalized.c_norm_sq)
        .map(|(&k, &c)| c / inverse[k])
        .collect();
    let norm_sq = inverse.iter().map(|&u| T::one() / u).collect();
    let out = PureTrajectory {
        model: normalized.model.clone(),
        driving: output.clone(),
        role: StateRole::Linear,
        picture: Picture::Output,
        recorded: normalized.recorded.clone(),
        states,
        c_norm_sq,
        norm_sq,
        feedback: normalized.feedback.clone(),
        defects: Vec::new(),
        clipped_steps: clipped,
    };
    Ok((out, output))
}
