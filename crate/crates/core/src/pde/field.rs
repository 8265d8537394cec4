use serde::{Deserialize, Serialize};

use super::PdeError;
use crate::boundary::PfrakVariant;
use crate::scalar::Real;
use crate::testfn::TestFunction;

/// Uniform grid on `[0, 1]` with `n` cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self, PdeError> {
        if n < 8 {
            return Err(PdeError::GridSize(n));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dx<R: Real>(&self) -> R {
        R::one() / R::from_usize_lossy(self.n)
    }

    pub fn node<R: Real>(&self, i: usize) -> R {
        R::from_usize_lossy(i) / R::from_usize_lossy(self.n)
    }

    pub fn nodes<R: Real>(&self) -> Vec<R> {
        (0..=self.n).map(|i| self.node(i)).collect()
    }

    /// Largest step of the explicit scheme, `0.4 dx^2`.
    pub fn explicit_dt<R: Real>(&self) -> R {
        let dx: R = self.dx();
        R::lit(0.4) * dx * dx
    }
}

/// Space-time density on a grid; frames are stored every `stride` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField<R: Real> {
    pub(crate) grid: Grid,
    pub(crate) dt: R,
    pub(crate) stride: usize,
    pub(crate) t_final: R,
    pub(crate) data: Vec<R>,
    pub(crate) model_hash: String,
    pub(crate) tilt: Option<TestFunction<R>>,
    pub(crate) pfrak: PfrakVariant,
}

impl<R: Real> DensityField<R> {
    /// Builds a field from raw frames (`n + 1` values per frame). Values are
    /// not range-checked here; see [`super::parabolic_bounds_check`].
    pub fn from_frames(grid: Grid, frame_dt: R, frames: Vec<Vec<R>>, model_hash: impl Into<String>) -> Result<Self, PdeError> {
        if frames.is_empty() || frames.iter().any(|f| f.len() != grid.n() + 1) {
            return Err(PdeError::Format("frames must be non-empty with n + 1 values each".into()));
        }
        let t_final = frame_dt * R::from_usize_lossy(frames.len() - 1);
        Ok(Self {
            grid,
            dt: frame_dt,
            stride: 1,
            t_final,
            data: frames.into_iter().flatten().collect(),
            model_hash: model_hash.into(),
            tilt: None,
            pfrak: PfrakVariant::default(),
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Integration step.
    pub fn dt(&self) -> R {
        self.dt
    }

    /// Steps per stored frame.
    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn frame_dt(&self) -> R {
        self.dt * R::from_usize_lossy(self.stride)
    }

    pub fn t_final(&self) -> R {
        self.t_final
    }

    pub fn model_hash(&self) -> &str {
        &self.model_hash
    }

    pub fn tilt(&self) -> Option<&TestFunction<R>> {
        self.tilt.as_ref()
    }

    pub fn pfrak(&self) -> PfrakVariant {
        self.pfrak
    }

    pub fn frames(&self) -> usize {
        self.data.len() / (self.grid.n() + 1)
    }

    pub fn time(&self, k: usize) -> R {
        if k + 1 == self.frames() {
            self.t_final
        } else {
            self.frame_dt() * R::from_usize_lossy(k)
        }
    }

    pub fn times(&self) -> Vec<R> {
        (0..self.frames()).map(|k| self.time(k)).collect()
    }

    pub fn frame(&self, k: usize) -> &[R] {
        let w = self.grid.n() + 1;
        &self.data[k * w..(k + 1) * w]
    }

    pub fn last(&self) -> &[R] {
        self.frame(self.frames() - 1)
    }

    pub fn values(&self) -> &[R] {
        &self.data
    }

    /// `int_0^1 H(x) rho_t(x) dx` at frame `k` by the trapezoidal rule.
    pub fn pairing(&self, k: usize, h: impl Fn(R) -> R) -> R {
        let n = self.grid.n();
        let dx: R = self.grid.dx();
        let f = self.frame(k);
        let mut acc = R::zero();
        for (i, &r) in f.iter().enumerate() {
            let w = if i == 0 || i == n { R::lit(0.5) } else { R::one() };
            acc = acc + w * r * h(self.grid.node(i));
        }
        acc * dx
    }

    /// Linear interpolation in time of the pairing with `h`.
    pub fn pairing_at(&self, t: R, h: impl Fn(R) -> R + Copy) -> R {
        let fdt = self.frame_dt();
        if self.frames() == 1 || fdt <= R::zero() {
            return self.pairing(0, h);
        }
        let s = (t / fdt).max(R::zero());
        let k = s.floor().to_usize().unwrap_or(0).min(self.frames() - 2);
        let t0 = self.time(k);
        let t1 = self.time(k + 1);
        let th = ((t - t0) / (t1 - t0)).max(R::zero()).min(R::one());
        self.pairing(k, h) * (R::one() - th) + self.pairing(k + 1, h) * th
    }

    /// Copy keeping every `every`-th frame. `None` unless `every` divides
    /// the number of stored intervals.
    pub fn thinned(&self, every: usize) -> Option<Self> {
        let last = self.frames() - 1;
        if every == 0 || last % every != 0 {
            return None;
        }
        let data = (0..=last).step_by(every).flat_map(|k| self.frame(k).to_vec()).collect();
        Some(Self { stride: self.stride * every, data, ..self.clone() })
    }
}
