use super::LdpError;
use crate::numerics::uniform_trapezoid;
use crate::pde::DensityField;
use crate::scalar::Real;

/// Density path on a uniform space-time grid with cached derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct PathDensity<R: Real> {
    n: usize,
    frames: usize,
    t_final: R,
    rho: Vec<R>,
    dt_rho: Vec<R>,
    dx_rho: Vec<R>,
    eps_hat: R,
}

impl<R: Real> PathDensity<R> {
    /// `frames[k][i]` is `rho(k T / (K - 1), i / n)`; needs at least three
    /// frames of at least three nodes.
    pub fn new(frames: Vec<Vec<R>>, t_final: R) -> Result<Self, LdpError> {
        if frames.len() < 3 {
            return Err(LdpError::Shape("a path needs at least 3 frames".into()));
        }
        let w = frames[0].len();
        if w < 3 || frames.iter().any(|f| f.len() != w) {
            return Err(LdpError::Shape("frames must share a grid of at least 3 nodes".into()));
        }
        if !(t_final > R::zero()) || !t_final.is_finite() {
            return Err(LdpError::Shape("horizon must be positive".into()));
        }
        let mut eps_hat = R::infinity();
        for (k, f) in frames.iter().enumerate() {
            for (i, v) in f.iter().enumerate() {
                if !(*v >= R::zero() && *v <= R::one()) {
                    return Err(LdpError::Range { k, i, value: v.to_f64_lossy() });
                }
                eps_hat = eps_hat.min(v.min(R::one() - *v));
            }
        }
        let n = w - 1;
        let nt = frames.len();
        let rho: Vec<R> = frames.into_iter().flatten().collect();
        let dx = R::one() / R::from_usize_lossy(n);
        let dt = t_final / R::from_usize_lossy(nt - 1);
        let at = |k: usize, i: usize| rho[k * w + i];
        let diff = |f: &dyn Fn(usize) -> R, j: usize, m: usize, h: R| -> R {
            let two = R::lit(2.0);
            if j == 0 {
                (R::lit(-3.0) * f(0) + R::lit(4.0) * f(1) - f(2)) / (two * h)
            } else if j == m {
                (R::lit(3.0) * f(m) - R::lit(4.0) * f(m - 1) + f(m - 2)) / (two * h)
            } else {
                (f(j + 1) - f(j - 1)) / (two * h)
            }
        };
        let mut dt_rho = vec![R::zero(); rho.len()];
        let mut dx_rho = vec![R::zero(); rho.len()];
        for k in 0..nt {
            for i in 0..w {
                dt_rho[k * w + i] = diff(&|kk| at(kk, i), k, nt - 1, dt);
                dx_rho[k * w + i] = diff(&|ii| at(k, ii), i, n, dx);
            }
        }
        Ok(Self { n, frames: nt, t_final, rho, dt_rho, dx_rho, eps_hat })
    }

    /// Samples `f(t, x)` on `nt + 1` times and `n + 1` nodes.
    pub fn from_fn(f: impl Fn(R, R) -> R, n: usize, nt: usize, t_final: R) -> Result<Self, LdpError> {
        let frames = (0..=nt)
            .map(|k| {
                let t = t_final * R::from_usize_lossy(k) / R::from_usize_lossy(nt);
                (0..=n).map(|i| f(t, R::from_usize_lossy(i) / R::from_usize_lossy(n))).collect()
            })
            .collect();
        Self::new(frames, t_final)
    }

    pub fn from_field(field: &DensityField<R>) -> Result<Self, LdpError> {
        let frames = (0..field.frames()).map(|k| field.frame(k).to_vec()).collect();
        Self::new(frames, field.t_final())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn t_final(&self) -> R {
        self.t_final
    }

    pub fn dx(&self) -> R {
        R::one() / R::from_usize_lossy(self.n)
    }

    pub fn dt(&self) -> R {
        self.t_final / R::from_usize_lossy(self.frames - 1)
    }

    pub fn time(&self, k: usize) -> R {
        if k + 1 == self.frames {
            self.t_final
        } else {
            self.dt() * R::from_usize_lossy(k)
        }
    }

    pub fn node(&self, i: usize) -> R {
        R::from_usize_lossy(i) / R::from_usize_lossy(self.n)
    }

    pub fn rho(&self, k: usize) -> &[R] {
        &self.rho[k * (self.n + 1)..(k + 1) * (self.n + 1)]
    }

    pub fn dt_rho(&self, k: usize) -> &[R] {
        &self.dt_rho[k * (self.n + 1)..(k + 1) * (self.n + 1)]
    }

    pub fn dx_rho(&self, k: usize) -> &[R] {
        &self.dx_rho[k * (self.n + 1)..(k + 1) * (self.n + 1)]
    }

    /// `min(rho, 1 - rho)` over the grid.
    pub fn eps_hat(&self) -> R {
        self.eps_hat
    }

    pub fn require_interior(&self) -> Result<(), LdpError> {
        if self.eps_hat > R::zero() {
            Ok(())
        } else {
            Err(LdpError::NotInterior)
        }
    }

    pub(crate) fn space_weights(&self) -> Vec<R> {
        uniform_trapezoid(self.n, self.dx())
    }

    pub(crate) fn time_weights(&self) -> Vec<R> {
        uniform_trapezoid(self.frames - 1, self.dt())
    }

    /// Checks that `gamma` agrees with the first frame to `1e-9`.
    pub fn check_initial(&self, gamma: &dyn Fn(R) -> R) -> Result<(), LdpError> {
        for (i, v) in self.rho(0).iter().enumerate() {
            let g = gamma(self.node(i));
            if (g - *v).abs() > R::lit(1e-9) {
                return Err(LdpError::InitialMismatch { x: self.node(i).to_f64_lossy(), path: v.to_f64_lossy(), gamma: g.to_f64_lossy() });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_are_exact_on_quadratics() {
        let p = PathDensity::from_fn(|t: f64, x: f64| 0.2 + 0.1 * t * t + 0.3 * x * x, 10, 6, 0.6).unwrap();
        for k in 0..p.frames() {
            for i in 0..=p.n() {
                assert!((p.dt_rho(k)[i] - 0.2 * p.time(k)).abs() < 1e-12);
                assert!((p.dx_rho(k)[i] - 0.6 * p.node(i)).abs() < 1e-12);
            }
        }
        assert!((p.eps_hat() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(PathDensity::new(vec![vec![0.5f64; 4]; 2], 1.0).is_err());
        assert!(PathDensity::new(vec![vec![0.5f64; 4], vec![0.5; 4], vec![0.5; 3]], 1.0).is_err());
        assert!(matches!(PathDensity::new(vec![vec![0.5f64; 4], vec![0.5; 4], vec![1.5; 4]], 1.0), Err(LdpError::Range { k: 2, .. })));
        let edge = PathDensity::new(vec![vec![0.0f64; 4]; 3], 1.0).unwrap();
        assert_eq!(edge.require_interior(), Err(LdpError::NotInterior));
    }
}
