//! Reproducible multichannel Brownian increments on a uniform grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Relative tolerance on `horizon / dt` being an integer (widened to the
/// scalar's resolution for `f32`).
pub const GRID_TOLERANCE: f64 = 1e-9;

/// Seed provenance of a generated path.
///
/// `level` counts the halvings applied since sampling; each level draws its
/// bridge variates from its own stream so that refinements compose.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PathLineage {
    pub master_seed: u64,
    pub trajectory_index: u64,
    pub level: u32,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with a tag into an independent 64-bit seed.
pub fn derive_seed(master_seed: u64, tag: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(tag))
}

/// ChaCha stream for `(master_seed, level)` positioned on the trajectory's own
/// stream, so distinct trajectories never overlap.
fn stream(lineage: &PathLineage) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(lineage.master_seed, lineage.level as u64));
    rng.set_stream(lineage.trajectory_index);
    rng
}

/// Driving noise `Y` (or `B`) for `n` channels sampled at `t_k = k dt`.
///
/// Increments are stored step-major: the `n` increments of step `k` are
/// contiguous.
#[derive(Clone, Debug, PartialEq)]
pub struct BrownianPath<T: Real> {
    channels: usize,
    dt: T,
    increments: Vec<T>,
    lineage: Option<PathLineage>,
}

fn grid_steps(horizon: f64, dt: f64, tolerance: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Grid(format!("step {dt} must be positive")));
    }
    if !(horizon >= dt) || !horizon.is_finite() {
        return Err(Error::Grid(format!("horizon {horizon} shorter than step {dt}")));
    }
    let ratio = horizon / dt;
    let steps = ratio.round();
    if (ratio - steps).abs() > tolerance * steps.max(1.0) {
        return Err(Error::Grid(format!("horizon {horizon} is not a multiple of step {dt}")));
    }
    Ok(steps as usize)
}

/// Samples `n` independent Brownian channels on `[0, horizon]`.
pub fn sample_path<T: Real>(
    channels: usize,
    horizon: T,
    dt: T,
    master_seed: u64,
    trajectory_index: u64,
) -> Result<BrownianPath<T>> {
    if channels == 0 {
        return Err(Error::InvalidDimension("path needs at least one channel".into()));
    }
    let tolerance = GRID_TOLERANCE.max(8.0 * T::default_epsilon().as_f64());
    let steps = grid_steps(horizon.as_f64(), dt.as_f64(), tolerance)?;
    let lineage = PathLineage {
        master_seed,
        trajectory_index,
        level: 0,
    };
    let mut rng = stream(&lineage);
    let sd = dt.as_f64().sqrt();
    let increments = (0..steps * channels)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            T::lit(sd * z)
        })
        .collect();
    Ok(BrownianPath {
        channels,
        dt,
        increments,
        lineage: Some(lineage),
    })
}

impl<T: Real> BrownianPath<T> {
    /// Wraps externally produced increments, e.g. a converted output record.
    pub fn from_increments(
        channels: usize,
        dt: T,
        increments: Vec<T>,
        lineage: Option<PathLineage>,
    ) -> Result<Self> {
        if channels == 0 || increments.is_empty() || increments.len() % channels != 0 {
            return Err(Error::InvalidDimension(format!(
                "{} increments do not fill {channels} channels",
                increments.len()
            )));
        }
        if !(dt > T::zero()) {
            return Err(Error::Grid("step must be positive".into()));
        }
        Ok(Self {
            channels,
            dt,
            increments,
            lineage,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn steps(&self) -> usize {
        self.increments.len() / self.channels
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn horizon(&self) -> T {
        self.time(self.steps())
    }

    pub fn lineage(&self) -> Option<PathLineage> {
        self.lineage
    }

    /// `t_k = k dt`.
    pub fn time(&self, k: usize) -> T {
        T::from_usize_lossy(k) * self.dt
    }

    pub fn times(&self) -> Vec<T> {
        (0..=self.steps()).map(|k| self.time(k)).collect()
    }

    /// Increments of all channels over `[t_k, t_{k+1}]`.
    pub fn increments_at(&self, k: usize) -> &[T] {
        &self.increments[k * self.channels..(k + 1) * self.channels]
    }

    pub fn increment(&self, k: usize, channel: usize) -> T {
        self.increments[k * self.channels + channel]
    }

    pub fn increments(&self) -> &[T] {
        &self.increments
    }

    /// Values `W_j(t_k)` for `k = 0..=steps`, starting from zero.
    pub fn cumulative(&self, channel: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(self.steps() + 1);
        let mut acc = T::zero();
        out.push(acc);
        for k in 0..self.steps() {
            acc += self.increment(k, channel);
            out.push(acc);
        }
        out
    }

    /// Brownian-bridge refinement by a power-of-two factor.
    ///
    /// Each halving splits `D` into `D/2 + sqrt(h)/2 Z` and its complement,
    /// with `Z` drawn from the stream of the new level, so refining by 2 twice
    /// equals refining by 4 once.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        let halvings = halvings(factor)?;
        let mut lineage = self.lineage.ok_or(Error::NoLineage)?;
        let mut current = self.increments.clone();
        let mut dt = self.dt.as_f64();
        for _ in 0..halvings {
            lineage.level += 1;
            let mut rng = stream(&lineage);
            let half_sd = 0.5 * dt.sqrt();
            let mut next = Vec::with_capacity(current.len() * 2);
            for step in current.chunks_exact(self.channels) {
                let mut first = Vec::with_capacity(self.channels);
                for &d in step {
                    let z: f64 = rng.sample(StandardNormal);
                    let a = T::lit(0.5) * d + T::lit(half_sd * z);
                    first.push(a);
                }
                let second: Vec<T> = step.iter().zip(&first).map(|(&d, &a)| d - a).collect();
                next.extend(first);
                next.extend(second);
            }
            current = next;
            dt *= 0.5;
        }
        Ok(Self {
            channels: self.channels,
            dt: self.dt / T::from_usize_lossy(factor),
            increments: current,
            lineage: Some(lineage),
        })
    }

    /// Sums groups of `factor` consecutive increments.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        let halvings = halvings(factor)?;
        if self.steps() % factor != 0 {
            return Err(Error::Grid(format!(
                "{} steps not divisible by {factor}",
                self.steps()
            )));
        }
        let n = self.channels;
        let mut out = vec![T::zero(); self.increments.len() / factor];
        for (k, block) in self.increments.chunks_exact(n * factor).enumerate() {
            for sub in block.chunks_exact(n) {
                for (j, &d) in sub.iter().enumerate() {
                    out[k * n + j] += d;
                }
            }
        }
        let lineage = self.lineage.and_then(|l| {
            l.level.checked_sub(halvings).map(|level| PathLineage { level, ..l })
        });
        Ok(Self {
            channels: n,
            dt: self.dt * T::from_usize_lossy(factor),
            increments: out,
            lineage,
        })
    }

    /// New path with increments `dW + shift_j(k) dt` per channel.
    pub fn shifted(&self, mut shift: impl FnMut(usize, usize) -> T) -> Self {
        let n = self.channels;
        let increments = self
            .increments
            .iter()
            .enumerate()
            .map(|(i, &d)| d + shift(i / n, i % n) * self.dt)
            .collect();
        Self {
            channels: n,
            dt: self.dt,
            increments,
            lineage: None,
        }
    }
}

fn halvings(factor: usize) -> Result<u32> {
    if factor < 2 || !factor.is_power_of_two() {
        return Err(Error::InvalidFactor(factor));
    }
    Ok(factor.trailing_zeros())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn deterministic_stream() {
        let a = sample_path::<f64>(1, 1.0, 0.25, 7, 0).unwrap();
        assert_eq!(a.steps(), 4);
        let b = sample_path::<f64>(1, 1.0, 0.25, 7, 0).unwrap();
        assert_eq!(a.increments(), b.increments());
        let c = sample_path::<f64>(1, 1.0, 0.25, 7, 1).unwrap();
        assert_ne!(a.increments(), c.increments());
        let d = sample_path::<f64>(1, 1.0, 0.25, 8, 0).unwrap();
        assert_ne!(a.increments(), d.increments());
    }

    #[test]
    fn precision_shares_stream() {
        let a = sample_path::<f64>(2, 0.5, 0.1, 3, 4).unwrap();
        let b = sample_path::<f32>(2, 0.5, 0.1, 3, 4).unwrap();
        for (x, y) in a.increments().iter().zip(b.increments()) {
            assert!((*x as f32 - y).abs() <= 1e-6 * y.abs().max(1e-3));
        }
    }

    #[test]
    fn grid_validation() {
        assert!(matches!(sample_path::<f64>(1, 1.0, 0.3, 0, 0), Err(Error::Grid(_))));
        assert!(matches!(sample_path::<f64>(1, 0.1, 0.2, 0, 0), Err(Error::Grid(_))));
        assert!(matches!(sample_path::<f64>(1, 1.0, 0.0, 0, 0), Err(Error::Grid(_))));
        assert_eq!(sample_path::<f64>(1, 0.3, 0.1, 0, 0).unwrap().steps(), 3);
    }

    #[test]
    fn increment_variance() {
        let p = sample_path::<f64>(1, 10_000.0, 0.01, 11, 0).unwrap();
        assert_eq!(p.steps(), 1_000_000);
        let (mean, var) = mean_var(p.increments());
        let tol = 3.0 * (2.0 / 1e6f64).sqrt() * 0.01;
        assert!((var - 0.01).abs() <= tol, "{var}");
        assert!(mean.abs() <= 4.0 * (0.01f64 / 1e6).sqrt());
    }

    #[test]
    fn streams_are_uncorrelated() {
        let a = sample_path::<f64>(1, 1000.0, 0.01, 5, 0).unwrap();
        let b = sample_path::<f64>(1, 1000.0, 0.01, 5, 1).unwrap();
        let (ma, va) = mean_var(a.increments());
        let (mb, vb) = mean_var(b.increments());
        let n = a.steps() as f64;
        let cov = a
            .increments()
            .iter()
            .zip(b.increments())
            .map(|(x, y)| (x - ma) * (y - mb))
            .sum::<f64>()
            / (n - 1.0);
        assert!((cov / (va * vb).sqrt()).abs() <= 0.01);
    }

    #[test]
    fn refine_coarsen_round_trip() {
        let p = sample_path::<f64>(3, 1.0, 0.125, 9, 2).unwrap();
        for factor in [2, 4, 8] {
            let fine = p.refine(factor).unwrap();
            assert_eq!(fine.steps(), p.steps() * factor);
            let back = fine.coarsen(factor).unwrap();
            for (x, y) in back.increments().iter().zip(p.increments()) {
                assert!((x - y).abs() <= 1e-14);
            }
            assert_eq!(back.lineage(), p.lineage());
        }
    }

    #[test]
    fn refinements_commute() {
        let p = sample_path::<f64>(2, 1.0, 0.25, 1, 6).unwrap();
        let twice = p.refine(2).unwrap().refine(2).unwrap();
        let once = p.refine(4).unwrap();
        assert_eq!(twice, once);
    }

    #[test]
    fn refined_variance() {
        let p = sample_path::<f64>(1, 1000.0, 0.04, 13, 0).unwrap();
        let fine = p.refine(4).unwrap();
        let (_, var) = mean_var(fine.increments());
        let n = fine.steps() as f64;
        assert!((var - 0.01).abs() <= 4.0 * (2.0 / n).sqrt() * 0.01);
    }

    #[test]
    fn refine_errors() {
        let p = sample_path::<f64>(1, 1.0, 0.5, 1, 0).unwrap();
        assert!(matches!(p.refine(3), Err(Error::InvalidFactor(3))));
        assert!(matches!(p.refine(1), Err(Error::InvalidFactor(1))));
        let bare = BrownianPath::from_increments(1, 0.5, vec![0.1, 0.2], None).unwrap();
        assert!(matches!(bare.refine(2), Err(Error::NoLineage)));
    }

    #[test]
    fn cumulative_telescopes() {
        let p = sample_path::<f64>(2, 1.0, 0.1, 4, 0).unwrap();
        let w = p.cumulative(1);
        assert_eq!(w.len(), 11);
        assert_eq!(w[0], 0.0);
        let direct: f64 = (0..10).map(|k| p.increment(k, 1)).sum();
        assert!((w[10] - direct).abs() < 1e-15);
    }
}
