use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::error::Result;
use crate::operators::ModelSpec;
use crate::scalar::{CVector, Real};
use crate::sde::BrownianPath;

/// Whether states solve the linear equation (`chi`) or are normalised (`phi`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StateRole {
    Linear,
    Normalized,
}

/// Which Brownian motion drives the trajectory: the output `Y` or the innovation `B`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Picture {
    Output,
    Innovation,
}

/// Which grid points keep a copy of the state vector.
///
/// Scalar diagnostics are always kept on the full grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Recording {
    stride: usize,
}

impl Recording {
    pub fn full() -> Self {
        Self { stride: 1 }
    }

    pub fn every(stride: usize) -> Self {
        Self { stride: stride.max(1) }
    }

    /// Only the initial and final states.
    pub fn endpoints() -> Self {
        Self { stride: usize::MAX }
    }

    /// Whether grid index `k` of a run with `steps` steps is recorded.
    pub fn keeps(&self, k: usize, steps: usize) -> bool {
        k == 0 || k == steps || k % self.stride == 0
    }

    pub fn stride(&self) -> usize {
        self.stride
    }
}

impl Default for Recording {
    fn default() -> Self {
        Self::full()
    }
}

/// Pure-state trajectory on the grid of its driving path.
#[derive(Clone, Debug)]
pub struct PureTrajectory<T: Real> {
    pub(crate) model: Arc<ModelSpec<T>>,
    pub(crate) driving: Arc<BrownianPath<T>>,
    pub(crate) role: StateRole,
    pub(crate) picture: Picture,
    pub(crate) recorded: Vec<usize>,
    pub(crate) states: Vec<CVector<T>>,
    pub(crate) c_norm_sq: Vec<T>,
    pub(crate) norm_sq: Vec<T>,
    pub(crate) feedback: Vec<T>,
    pub(crate) defects: Vec<T>,
    pub(crate) clipped_steps: usize,
}

impl<T: Real> PureTrajectory<T> {
    pub fn model(&self) -> &Arc<ModelSpec<T>> {
        &self.model
    }

    pub fn driving(&self) -> &Arc<BrownianPath<T>> {
        &self.driving
    }

    pub fn role(&self) -> StateRole {
        self.role
    }

    pub fn picture(&self) -> Picture {
        self.picture
    }

    pub fn steps(&self) -> usize {
        self.driving.steps()
    }

    /// Grid indices at which states were kept.
    pub fn recorded_steps(&self) -> &[usize] {
        &self.recorded
    }

    pub fn recorded_times(&self) -> Vec<T> {
        self.recorded.iter().map(|&k| self.driving.time(k)).collect()
    }

    pub fn states(&self) -> &[CVector<T>] {
        &self.states
    }

    pub fn final_state(&self) -> &CVector<T> {
        self.states.last().expect("trajectory keeps its final state")
    }

    /// `||C x||^2` at the recorded grid indices.
    pub fn c_norm_sq(&self) -> &[T] {
        &self.c_norm_sq
    }

    /// `||chi(t_k)||^2` on the full grid.
    ///
    /// For a trajectory obtained by normalising a linear one this is carried
    /// over as the density of the innovation measure; for a directly
    /// simulated normalised trajectory it is `||phi||^2` after renormalisation.
    pub fn norm_sq(&self) -> &[T] {
        &self.norm_sq
    }

    /// `<L_S^j>` at grid index `k`, the left-point feedback coefficient.
    pub fn feedback(&self, k: usize, channel: usize) -> T {
        self.feedback[k * self.model.channels() + channel]
    }

    /// Per-step `| ||phi||^2 - 1 |` before renormalisation (normalised
    /// simulations only).
    pub fn defects(&self) -> &[T] {
        &self.defects
    }

    pub fn max_defect(&self) -> T {
        self.defects.iter().fold(T::zero(), |a, &d| a.max(d))
    }

    /// Steps where the inverse norm hit its floor while lifting.
    pub fn clipped_steps(&self) -> usize {
        self.clipped_steps
    }

    /// Writes `t, re_0, im_0, ..., norm_sq` rows at the recorded indices,
    /// keeping every `stride`-th of them.
    pub fn write_csv<W: Write>(&self, out: W, stride: usize) -> Result<()> {
        let to_err = |e: csv::Error| crate::error::Error::InvalidInput(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        let m = self.model.dim();
        let mut header = vec!["t".to_string()];
        for k in 0..m {
            header.push(format!("re_{k}"));
            header.push(format!("im_{k}"));
        }
        header.push("norm_sq".into());
        w.write_record(&header).map_err(to_err)?;
        for (i, (&k, x)) in self.recorded.iter().zip(&self.states).enumerate() {
            if i % stride.max(1) != 0 && i + 1 != self.recorded.len() {
                continue;
            }
            let mut row = Vec::with_capacity(2 * m + 2);
            row.push(self.driving.time(k).as_f64().to_string());
            for z in x.iter() {
                row.push(z.re.as_f64().to_string());
                row.push(z.im.as_f64().to_string());
            }
            row.push(self.norm_sq[k].as_f64().to_string());
            w.write_record(&row).map_err(to_err)?;
        }
        w.flush().map_err(|e| crate::error::Error::InvalidInput(e.to_string()))?;
        Ok(())
    }
}
