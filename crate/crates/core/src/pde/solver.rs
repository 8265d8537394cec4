use serde::{Deserialize, Serialize};

use super::field::{DensityField, Grid};
use super::PdeError;
use crate::boundary::{BoundaryMoments, PfrakVariant, RateModel, Side};
use crate::numerics::solve_tridiagonal;
use crate::scalar::{mobility, Real};
use crate::testfn::TestFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Forward Euler in time; requires `dt <= 0.4 dx^2`.
    #[default]
    Explicit,
    /// Trapezoidal rule in time, nonlinear boundary rows by damped Newton.
    CrankNicolson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub scheme: Scheme,
    /// Upper bound on the number of stored time intervals.
    pub max_frames: usize,
    /// Initialise nodes with cell averages of `gamma` instead of point values.
    pub cell_average: bool,
    pub pfrak: PfrakVariant,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            scheme: Scheme::Explicit,
            max_frames: 1000,
            cell_average: false,
            pfrak: PfrakVariant::Consistent,
            newton_tol: 1e-12,
            newton_max_iter: 50,
        }
    }
}

/// Values within this distance outside `[0, 1]` are treated as round-off.
const ROUNDOFF: f64 = 1e-12;

/// Solves `d_t rho = Lap rho` with `grad rho(0) = -F_-(rho(0))` and
/// `grad rho(1) = F_+(rho(1))`.
pub fn solve_hydro<R: Real>(
    gamma: &dyn Fn(R) -> R,
    model: &RateModel<R>,
    grid: Grid,
    dt: R,
    t_final: R,
    opts: &SolverOptions,
) -> Result<DensityField<R>, PdeError> {
    run(gamma, model, None, grid, dt, t_final, opts)
}

/// Solves `d_t rho = Lap rho - 2 grad(sigma(rho) grad G)` with boundary
/// flux `pfrak(rho, G)` on each side.
pub fn solve_perturbed<R: Real>(
    gamma: &dyn Fn(R) -> R,
    model: &RateModel<R>,
    g: &TestFunction<R>,
    grid: Grid,
    dt: R,
    t_final: R,
    opts: &SolverOptions,
) -> Result<DensityField<R>, PdeError> {
    run(gamma, model, Some(g), grid, dt, t_final, opts)
}

fn model_hash<R: Real>(model: &RateModel<R>) -> String {
    model.map(|v| v.to_f64_lossy()).content_hash()
}

fn initial<R: Real>(gamma: &dyn Fn(R) -> R, grid: Grid, cell_average: bool) -> Result<Vec<R>, PdeError> {
    let n = grid.n();
    let dx: R = grid.dx();
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let x: R = grid.node(i);
        let v = if cell_average {
            let lo = (x - dx * R::lit(0.5)).max(R::zero());
            let hi = (x + dx * R::lit(0.5)).min(R::one());
            let m = 16;
            let h = (hi - lo) / R::from_usize_lossy(m);
            (0..m).map(|k| gamma(lo + h * (R::from_usize_lossy(k) + R::lit(0.5)))).fold(R::zero(), |a, b| a + b)
                / R::from_usize_lossy(m)
        } else {
            gamma(x)
        };
        if !(v >= R::zero() && v <= R::one()) {
            return Err(PdeError::InitialRange { x: x.to_f64_lossy(), value: v.to_f64_lossy() });
        }
        out.push(v);
    }
    Ok(out)
}

/// Right-hand side of the semi-discrete system and its tridiagonal Jacobian.
struct Rhs<'a, R: Real> {
    moments: BoundaryMoments<R>,
    tilt: Option<&'a TestFunction<R>>,
    pfrak: PfrakVariant,
    n: usize,
    dx: R,
    /// `psi'_m` at the faces `x_{i+1/2}`, face-major.
    face_d1: Vec<R>,
    /// `psi_m(0)` and `psi_m(1)`.
    ends: (Vec<R>, Vec<R>),
    grad_g: Vec<R>,
    g_ends: (R, R),
}

impl<'a, R: Real> Rhs<'a, R> {
    fn new(model: &RateModel<R>, tilt: Option<&'a TestFunction<R>>, grid: Grid, pfrak: PfrakVariant) -> Self {
        let n = grid.n();
        let dx: R = grid.dx();
        let (face_d1, ends) = match tilt {
            Some(g) => {
                let mut d1 = Vec::new();
                for i in 0..n {
                    let x = (R::from_usize_lossy(i) + R::lit(0.5)) * dx;
                    d1.extend(g.basis().eval(g.j(), x).d1);
                }
                (d1, (g.basis().eval(g.j(), R::zero()).v, g.basis().eval(g.j(), R::one()).v))
            }
            None => (Vec::new(), (Vec::new(), Vec::new())),
        };
        Self {
            moments: BoundaryMoments::new(model),
            tilt,
            pfrak,
            n,
            dx,
            face_d1,
            ends,
            grad_g: vec![R::zero(); n],
            g_ends: (R::zero(), R::zero()),
        }
    }

    fn set_time(&mut self, t: R) {
        let Some(g) = self.tilt else { return };
        let (c, _) = g.space_coefficients_at(t);
        let ns = c.len();
        let dot = |a: &[R]| a.iter().zip(&c).map(|(x, y)| *x * *y).fold(R::zero(), |u, v| u + v);
        for i in 0..self.n {
            self.grad_g[i] = dot(&self.face_d1[i * ns..(i + 1) * ns]);
        }
        self.g_ends = (dot(&self.ends.0), dot(&self.ends.1));
    }

    fn boundary(&self, side: Side, rho: R) -> Result<(R, R), PdeError> {
        let r = rho.max(R::zero()).min(R::one());
        let m = match side {
            Side::Left => self.g_ends.0,
            Side::Right => self.g_ends.1,
        };
        Ok((self.moments.pfrak(side, r, m, self.pfrak)?, self.moments.pfrak_dalpha(side, r, m, self.pfrak)?))
    }

    fn eval(&self, rho: &[R], out: &mut [R]) -> Result<(), PdeError> {
        let n = self.n;
        let dx = self.dx;
        let two = R::lit(2.0);
        let half = R::lit(0.5);
        let inv2 = R::one() / (dx * dx);
        let q = |i: usize| two * mobility(half * (rho[i] + rho[i + 1])) * self.grad_g[i];
        let (pl, _) = self.boundary(Side::Left, rho[0])?;
        let (pr, _) = self.boundary(Side::Right, rho[n])?;
        out[0] = two / dx * ((rho[1] - rho[0]) / dx - q(0) + pl);
        for i in 1..n {
            out[i] = (rho[i + 1] - two * rho[i] + rho[i - 1]) * inv2 - (q(i) - q(i - 1)) / dx;
        }
        out[n] = two / dx * (-(rho[n] - rho[n - 1]) / dx + q(n - 1) + pr);
        Ok(())
    }

    /// `(lower, diag, upper)` of `d rhs / d rho`; `lower[i]` multiplies
    /// `rho[i - 1]` in row `i`, as in [`solve_tridiagonal`].
    fn jacobian(&self, rho: &[R]) -> Result<(Vec<R>, Vec<R>, Vec<R>), PdeError> {
        let n = self.n;
        let dx = self.dx;
        let two = R::lit(2.0);
        let half = R::lit(0.5);
        let inv2 = R::one() / (dx * dx);
        // d q_{i+1/2} / d rho_i = d q_{i+1/2} / d rho_{i+1}
        let dq = |i: usize| (R::one() - two * half * (rho[i] + rho[i + 1])) * self.grad_g[i];
        let mut lo = vec![R::zero(); n + 1];
        let mut d = vec![R::zero(); n + 1];
        let mut up = vec![R::zero(); n + 1];
        let (_, dpl) = self.boundary(Side::Left, rho[0])?;
        let (_, dpr) = self.boundary(Side::Right, rho[n])?;
        d[0] = two / dx * (-R::one() / dx - dq(0) + dpl);
        up[0] = two / dx * (R::one() / dx - dq(0));
        for i in 1..n {
            lo[i] = inv2 + dq(i - 1) / dx;
            d[i] = -two * inv2 - (dq(i) - dq(i - 1)) / dx;
            up[i] = inv2 - dq(i) / dx;
        }
        lo[n] = two / dx * (R::one() / dx + dq(n - 1));
        d[n] = two / dx * (-R::one() / dx + dq(n - 1) + dpr);
        Ok((lo, d, up))
    }
}

fn guard<R: Real>(rho: &mut [R], t: R, grid: Grid) -> Result<(), PdeError> {
    let eps = R::lit(ROUNDOFF);
    for (i, v) in rho.iter_mut().enumerate() {
        let x = grid.node::<f64>(i);
        if !v.is_finite() {
            return Err(PdeError::NonFinite { t: t.to_f64_lossy(), x });
        }
        if *v < -eps || *v > R::one() + eps {
            return Err(PdeError::Bounds { t: t.to_f64_lossy(), x, value: v.to_f64_lossy() });
        }
        *v = v.max(R::zero()).min(R::one());
    }
    Ok(())
}

fn run<R: Real>(
    gamma: &dyn Fn(R) -> R,
    model: &RateModel<R>,
    tilt: Option<&TestFunction<R>>,
    grid: Grid,
    dt: R,
    t_final: R,
    opts: &SolverOptions,
) -> Result<DensityField<R>, PdeError> {
    if !(t_final >= R::zero()) || !t_final.is_finite() {
        return Err(PdeError::Horizon);
    }
    if !(dt > R::zero()) || !dt.is_finite() {
        return Err(PdeError::Stability { dt: dt.to_f64_lossy(), bound: grid.explicit_dt::<f64>() });
    }
    let dx: R = grid.dx();
    if opts.scheme == Scheme::Explicit {
        let bound = grid.explicit_dt::<R>();
        if dt > bound * R::lit(1.0 + 1e-12) {
            return Err(PdeError::Stability { dt: dt.to_f64_lossy(), bound: bound.to_f64_lossy() });
        }
        if let Some(g) = tilt {
            let gsup = g.sup_bounds().1;
            if gsup > 0.0 && dt.to_f64_lossy() > dx.to_f64_lossy() / gsup {
                return Err(PdeError::Stability { dt: dt.to_f64_lossy(), bound: dx.to_f64_lossy() / gsup });
            }
        }
    }
    let n = grid.n();
    let mut rho = initial(gamma, grid, opts.cell_average)?;
    let raw_steps = (t_final / dt - R::lit(1e-9)).ceil().to_usize().unwrap_or(0);
    let stride = raw_steps.div_ceil(opts.max_frames.max(1)).max(1);
    let frames = raw_steps.div_ceil(stride);
    let steps = frames * stride;
    let h = if steps == 0 { R::zero() } else { t_final / R::from_usize_lossy(steps) };

    let mut data = Vec::with_capacity((frames + 1) * (n + 1));
    data.extend_from_slice(&rho);
    let mut rhs = Rhs::new(model, tilt, grid, opts.pfrak);
    let mut f = vec![R::zero(); n + 1];
    let mut g = vec![R::zero(); n + 1];
    let mut next = vec![R::zero(); n + 1];
    let half = R::lit(0.5);
    for step in 0..steps {
        let t = h * R::from_usize_lossy(step);
        let t1 = h * R::from_usize_lossy(step + 1);
        rhs.set_time(t);
        rhs.eval(&rho, &mut f)?;
        match opts.scheme {
            Scheme::Explicit => {
                for i in 0..=n {
                    next[i] = rho[i] + h * f[i];
                }
            }
            Scheme::CrankNicolson => {
                let base: Vec<R> = (0..=n).map(|i| rho[i] + half * h * f[i]).collect();
                rhs.set_time(t1);
                next.copy_from_slice(&rho);
                let resid = |y: &[R], g: &mut [R], rhs: &Rhs<R>| -> Result<R, PdeError> {
                    rhs.eval(y, g)?;
                    let mut m = R::zero();
                    for i in 0..=n {
                        g[i] = y[i] - half * h * g[i] - base[i];
                        m = m.max(g[i].abs());
                    }
                    Ok(m)
                };
                let mut norm = resid(&next, &mut g, &rhs)?;
                let mut iter = 0;
                while norm > R::lit(opts.newton_tol) {
                    if iter == opts.newton_max_iter {
                        return Err(PdeError::Newton { t: t1.to_f64_lossy(), residual: norm.to_f64_lossy() });
                    }
                    iter += 1;
                    let (lo, d, up) = rhs.jacobian(&next)?;
                    let lo: Vec<R> = lo.iter().map(|v| -half * h * *v).collect();
                    let up: Vec<R> = up.iter().map(|v| -half * h * *v).collect();
                    let d: Vec<R> = d.iter().map(|v| R::one() - half * h * *v).collect();
                    let delta = solve_tridiagonal(&lo, &d, &up, &g)
                        .ok_or(PdeError::Newton { t: t1.to_f64_lossy(), residual: norm.to_f64_lossy() })?;
                    let mut lambda = R::one();
                    let mut trial = vec![R::zero(); n + 1];
                    loop {
                        for i in 0..=n {
                            trial[i] = next[i] - lambda * delta[i];
                        }
                        let mut tg = vec![R::zero(); n + 1];
                        let tn = resid(&trial, &mut tg, &rhs)?;
                        if tn < norm || lambda < R::lit(1e-4) {
                            next.copy_from_slice(&trial);
                            g = tg;
                            norm = tn;
                            break;
                        }
                        lambda = lambda * half;
                    }
                }
            }
        }
        guard(&mut next, t1, grid)?;
        std::mem::swap(&mut rho, &mut next);
        if (step + 1) % stride == 0 {
            data.extend_from_slice(&rho);
        }
    }
    Ok(DensityField {
        grid,
        dt: h,
        stride,
        t_final,
        data,
        model_hash: model_hash(model),
        tilt: tilt.cloned(),
        pfrak: opts.pfrak,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l3() -> RateModel<f64> {
        RateModel::l3(1.0, 2.0, None).unwrap().0
    }

    #[test]
    fn frames_and_steps() {
        let grid = Grid::new(16).unwrap();
        let opts = SolverOptions { max_frames: 7, ..Default::default() };
        let f = solve_hydro(&|x| 0.3 + 0.2 * x, &l3(), grid, grid.explicit_dt(), 0.05, &opts).unwrap();
        assert!(f.frames() <= 8);
        assert_eq!(f.time(f.frames() - 1), 0.05);
        assert!(f.dt() <= grid.explicit_dt::<f64>());
        assert_eq!(f.frame(0)[16], 0.5);
    }

    #[test]
    fn rejects_unstable_step() {
        let grid = Grid::new(16).unwrap();
        let dt = grid.explicit_dt::<f64>() * 1.5;
        assert!(matches!(
            solve_hydro(&|_| 0.5, &l3(), grid, dt, 0.1, &SolverOptions::default()),
            Err(PdeError::Stability { .. })
        ));
        let cn = SolverOptions { scheme: Scheme::CrankNicolson, ..Default::default() };
        assert!(solve_hydro(&|_| 0.5, &l3(), grid, dt, 0.1, &cn).is_ok());
    }

    #[test]
    fn jacobian_matches_differences() {
        let grid = Grid::new(10).unwrap();
        let g = TestFunction::from_coefficients(crate::testfn::SpaceBasis::Legendre, 1, 2, 1.0, vec![0.1, 0.5, -0.2, 0.3, 0.2, 0.4]).unwrap();
        let model = l3();
        let mut rhs = Rhs::new(&model, Some(&g), grid, PfrakVariant::Consistent);
        rhs.set_time(0.3);
        let rho: Vec<f64> = (0..=10).map(|i| 0.3 + 0.04 * i as f64 - 0.002 * (i * i) as f64).collect();
        let (lo, d, up) = rhs.jacobian(&rho).unwrap();
        let mut base = vec![0.0; 11];
        rhs.eval(&rho, &mut base).unwrap();
        let h = 1e-6;
        for j in 0..=10 {
            let mut r = rho.clone();
            r[j] += h;
            let mut f = vec![0.0; 11];
            rhs.eval(&r, &mut f).unwrap();
            for i in 0..=10 {
                let fd = (f[i] - base[i]) / h;
                let an = if i == j {
                    d[i]
                } else if j == i + 1 {
                    up[i]
                } else if i == j + 1 {
                    lo[i]
                } else {
                    0.0
                };
                assert!((fd - an).abs() < 1e-3 * (1.0 + an.abs()), "({i},{j}) {fd} vs {an}");
            }
        }
    }
}
