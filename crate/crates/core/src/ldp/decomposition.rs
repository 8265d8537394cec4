use serde::Serialize;

use super::functional::{eval_i, quadratic_max, Tensor};
use super::{LdpError, LdpOptions, PathDensity};
use crate::boundary::{BoundaryMoments, RateModel, Side, EXPONENT_CAP};
use crate::scalar::{mobility, Real};
use crate::testfn::Flavor;

/// `Xi`, `dXi/dx` and `zeta` at frame `k`.
fn xi_frame<R: Real>(path: &PathDensity<R>, k: usize) -> (Vec<R>, Vec<R>, R) {
    let inv: Vec<R> = path.rho(k).iter().map(|r| R::one() / mobility(*r)).collect();
    let half_dx = R::lit(0.5) * path.dx();
    let mut cum = vec![R::zero(); inv.len()];
    for i in 1..inv.len() {
        cum[i] = cum[i - 1] + half_dx * (inv[i - 1] + inv[i]);
    }
    let total = cum[inv.len() - 1];
    (cum.iter().map(|c| *c / total).collect(), inv.iter().map(|v| *v / total).collect(), R::one() / total)
}

/// `Xi(t_k, x_i)`: normalised primitive of `1 / sigma(rho_t)`.
pub fn xi_field<R: Real>(path: &PathDensity<R>) -> Result<Vec<Vec<R>>, LdpError> {
    path.require_interior()?;
    Ok((0..path.frames()).map(|k| xi_frame(path, k).0).collect())
}

/// `zeta(t_k) = 1 / <1 / sigma(rho_t)>` for every frame.
pub fn zeta_trace<R: Real>(path: &PathDensity<R>) -> Result<Vec<R>, LdpError> {
    path.require_interior()?;
    Ok((0..path.frames()).map(|k| xi_frame(path, k).2).collect())
}

/// `zeta` at time `t`, linear in time between frames.
pub fn zeta<R: Real>(path: &PathDensity<R>, t: R) -> Result<R, LdpError> {
    let z = zeta_trace(path)?;
    let s = (t / path.dt()).max(R::zero());
    let k = s.floor().to_usize().unwrap_or(0).min(path.frames() - 2);
    let th = (s - R::from_usize_lossy(k)).min(R::one());
    Ok(z[k] * (R::one() - th) + z[k + 1] * th)
}

/// `a(t) = <d rho/dt, 1 - Xi> - <d rho/dx, dXi/dx>` and
/// `b(t) = <d rho/dt, Xi> + <d rho/dx, dXi/dx>` per frame.
pub fn boundary_charges<R: Real>(path: &PathDensity<R>) -> Result<(Vec<R>, Vec<R>), LdpError> {
    path.require_interior()?;
    let wx = path.space_weights();
    let mut a = Vec::with_capacity(path.frames());
    let mut b = Vec::with_capacity(path.frames());
    for k in 0..path.frames() {
        let (xi, dxi, _) = xi_frame(path, k);
        let (mut ak, mut bk) = (R::zero(), R::zero());
        for i in 0..=path.n() {
            let rt = path.dt_rho(k)[i];
            let g = path.dx_rho(k)[i] * dxi[i];
            ak = ak + wx[i] * (rt * (R::one() - xi[i]) - g);
            bk = bk + wx[i] * (rt * xi[i] + g);
        }
        a.push(ak);
        b.push(bk);
    }
    Ok((a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhiMethod {
    Newton,
    GridScan,
}

/// Value and maximiser of the Legendre transform of the boundary cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiResult {
    pub value: f64,
    pub x: f64,
    pub y: f64,
    pub iterations: usize,
    pub method: PhiMethod,
    /// The supremum was not attained inside the exponent range.
    pub unbounded: bool,
}

/// `Upsilon(x, y) = zeta (x - y)^2 + b-(rho0, x) + b+(rho1, y)` at fixed
/// boundary densities.
#[derive(Debug, Clone)]
pub struct BoundaryCost<R> {
    moments: BoundaryMoments<R>,
    rho0: R,
    rho1: R,
    zeta: R,
}

impl<R: Real> BoundaryCost<R> {
    pub fn new(model: &RateModel<R>, rho0: R, rho1: R, zeta: R) -> Result<Self, LdpError> {
        Self::from_moments(BoundaryMoments::new(model), rho0, rho1, zeta)
    }

    fn from_moments(moments: BoundaryMoments<R>, rho0: R, rho1: R, zeta: R) -> Result<Self, LdpError> {
        let open = |r: R| r > R::zero() && r < R::one();
        if !open(rho0) || !open(rho1) {
            return Err(LdpError::NotInterior);
        }
        if !(zeta >= R::zero()) {
            return Err(LdpError::Shape(format!("zeta must be nonnegative, got {zeta}")));
        }
        Ok(Self { moments, rho0, rho1, zeta })
    }

    /// Largest `|x|` allowed by the exponent cap.
    fn reach(&self) -> f64 {
        EXPONENT_CAP / self.moments.l() as f64
    }

    pub fn upsilon(&self, x: R, y: R) -> Result<R, LdpError> {
        let d = x - y;
        Ok(self.zeta * d * d + self.moments.bfrak(Side::Left, self.rho0, x)? + self.moments.bfrak(Side::Right, self.rho1, y)?)
    }

    fn objective(&self, a: R, b: R, x: R, y: R) -> Option<R> {
        self.upsilon(x, y).ok().map(|u| a * x + b * y - u)
    }

    /// Damped Newton from `(0, 0)`; falls back to [`phi_grid_scan`] when the
    /// iteration leaves the exponent range or stalls.
    pub fn phi(&self, a: R, b: R) -> Result<PhiResult, LdpError> {
        match self.phi_newton(a, b)? {
            Some(r) => Ok(r),
            None => Ok(self.phi_grid(a, b)),
        }
    }

    fn phi_newton(&self, a: R, b: R) -> Result<Option<PhiResult>, LdpError> {
        let two = R::lit(2.0);
        let (mut x, mut y) = (R::zero(), R::zero());
        let mut f = R::zero();
        let mut polish = 0;
        let scale = 1.0 + a.to_f64_lossy().abs() + b.to_f64_lossy().abs();
        for it in 0..200 {
            let d = x - y;
            let gx = a - two * self.zeta * d - self.moments.bfrak_dm(Side::Left, self.rho0, x)?;
            let gy = b + two * self.zeta * d - self.moments.bfrak_dm(Side::Right, self.rho1, y)?;
            if gx.abs().max(gy.abs()).to_f64_lossy() <= 1e-12 * scale {
                return Ok(Some(self.result(f, x, y, it, PhiMethod::Newton)));
            }
            let h11 = two * self.zeta + self.moments.bfrak_d2m(Side::Left, self.rho0, x)?;
            let h22 = two * self.zeta + self.moments.bfrak_d2m(Side::Right, self.rho1, y)?;
            let h12 = -two * self.zeta;
            let det = h11 * h22 - h12 * h12;
            if !(det > R::zero()) || !det.is_finite() {
                return Ok(None);
            }
            let dx = (h22 * gx - h12 * gy) / det;
            let dy = (h11 * gy - h12 * gx) / det;
            let slope = gx * dx + gy * dy;
            if slope.to_f64_lossy() <= 1e-12 * (1.0 + f.to_f64_lossy().abs()) {
                // The predicted gain is below what the objective resolves:
                // take full steps and stop once they no longer help.
                let Some(ft) = self.objective(a, b, x + dx, y + dy) else { return Ok(None) };
                x = x + dx;
                y = y + dy;
                f = ft;
                polish += 1;
                if polish > 2 {
                    return Ok(Some(self.result(f, x, y, it + 1, PhiMethod::Newton)));
                }
                continue;
            }
            let mut s = R::one();
            let mut accepted = false;
            for _ in 0..60 {
                let (tx, ty) = (x + s * dx, y + s * dy);
                if let Some(ft) = self.objective(a, b, tx, ty) {
                    if ft >= f + R::lit(1e-4) * s * slope {
                        x = tx;
                        y = ty;
                        f = ft;
                        accepted = true;
                        break;
                    }
                }
                s = s * R::lit(0.5);
            }
            if !accepted {
                return Ok(None);
            }
            let reach = 0.9 * self.reach();
            if x.to_f64_lossy().abs() > reach || y.to_f64_lossy().abs() > reach {
                return Ok(None);
            }
        }
        Ok(None)
    }

    fn result(&self, f: R, x: R, y: R, iterations: usize, method: PhiMethod) -> PhiResult {
        PhiResult { value: f.to_f64_lossy(), x: x.to_f64_lossy(), y: y.to_f64_lossy(), iterations, method, unbounded: false }
    }

    fn scan(&self, a: R, b: R, cx: f64, cy: f64, hw: f64, points: usize) -> Option<(f64, usize, usize)> {
        let h = 2.0 * hw / (points - 1) as f64;
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..points {
            let x = cx - hw + h * i as f64;
            for j in 0..points {
                let y = cy - hw + h * j as f64;
                if let Some(v) = self.objective(a, b, R::lit(x), R::lit(y)) {
                    let v = v.to_f64_lossy();
                    if best.is_none_or(|(bv, _, _)| v > bv) {
                        best = Some((v, i, j));
                    }
                }
            }
        }
        best
    }

    /// Grid scan of `a x + b y - Upsilon`: 401 x 401 points on `[-8, 8]^2`,
    /// widened while the best point sits on the window edge, then zoomed
    /// around the best point until the spacing drops below `1e-9`.
    pub fn phi_grid(&self, a: R, b: R) -> PhiResult {
        let reach = self.reach();
        let (mut cx, mut cy, mut hw) = (0.0f64, 0.0f64, 8.0f64);
        let mut points = 401;
        let mut unbounded = false;
        let mut iterations = 0;
        let on_edge = |i: usize, j: usize, pts: usize| i == 0 || j == 0 || i == pts - 1 || j == pts - 1;
        let mut best = self.scan(a, b, cx, cy, hw, points);
        // Widen.
        while let Some((_, i, j)) = best {
            if !on_edge(i, j, points) {
                break;
            }
            let h = 2.0 * hw / (points - 1) as f64;
            let (bx, by) = (cx - hw + h * i as f64, cy - hw + h * j as f64);
            if hw >= reach {
                unbounded = true;
                cx = bx;
                cy = by;
                break;
            }
            cx = bx;
            cy = by;
            hw = (2.0 * hw).min(reach);
            iterations += 1;
            best = self.scan(a, b, cx, cy, hw, points);
        }
        let Some((mut value, mut i, mut j)) = best else {
            return PhiResult { value: f64::NEG_INFINITY, x: 0.0, y: 0.0, iterations, method: PhiMethod::GridScan, unbounded: true };
        };
        if unbounded {
            return PhiResult { value, x: cx, y: cy, iterations, method: PhiMethod::GridScan, unbounded };
        }
        // Zoom.
        let mut h = 2.0 * hw / (points - 1) as f64;
        let mut bx = cx - hw + h * i as f64;
        let mut by = cy - hw + h * j as f64;
        let mut recentres = 0;
        while h > 1e-9 && recentres < 100 {
            let shrink = points == 401 || !on_edge(i, j, points);
            cx = bx;
            cy = by;
            if shrink {
                hw = 4.0 * h;
                points = 81;
            } else {
                recentres += 1;
            }
            h = 2.0 * hw / (points - 1) as f64;
            iterations += 1;
            if let Some((v, ii, jj)) = self.scan(a, b, cx, cy, hw, points) {
                value = v;
                i = ii;
                j = jj;
                bx = cx - hw + h * i as f64;
                by = cy - hw + h * j as f64;
            }
        }
        // A maximiser pinned at the exponent cap means the supremum lies beyond it.
        let unbounded = bx.abs().max(by.abs()) >= 0.99 * reach;
        PhiResult { value, x: bx, y: by, iterations, method: PhiMethod::GridScan, unbounded }
    }
}

/// `zeta (x - y)^2 + b-(rho0, x) + b+(rho1, y)`.
pub fn upsilon<R: Real>(model: &RateModel<R>, rho0: R, rho1: R, zeta: R, x: R, y: R) -> Result<R, LdpError> {
    BoundaryCost::new(model, rho0, rho1, zeta)?.upsilon(x, y)
}

/// `sup_{x, y} a x + b y - Upsilon(x, y)` and its maximiser.
pub fn phi_legendre<R: Real>(model: &RateModel<R>, rho0: R, rho1: R, zeta: R, a: R, b: R) -> Result<PhiResult, LdpError> {
    BoundaryCost::new(model, rho0, rho1, zeta)?.phi(a, b)
}

/// The grid-scan evaluation of `Phi` on its own.
pub fn phi_grid_scan<R: Real>(model: &RateModel<R>, rho0: R, rho1: R, zeta: R, a: R, b: R) -> Result<PhiResult, LdpError> {
    Ok(BoundaryCost::new(model, rho0, rho1, zeta)?.phi_grid(a, b))
}

/// Rate functional and its bulk and boundary parts with per-frame traces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionReport {
    #[serde(rename = "I")]
    pub i: f64,
    #[serde(rename = "I1")]
    pub i1: f64,
    #[serde(rename = "I2")]
    pub i2: f64,
    /// `|I - I1 - I2|`.
    pub residual: f64,
    /// `max(1e-3, 0.02 I)`.
    pub tolerance: f64,
    pub times: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub zeta: Vec<f64>,
    pub phi: Vec<f64>,
    pub x_star: Vec<f64>,
    pub y_star: Vec<f64>,
    pub phi_iterations: Vec<usize>,
    pub phi_grid_fallbacks: usize,
    pub phi_unbounded: bool,
    pub i_iterations: usize,
    pub i_grad_norm: f64,
    pub p: usize,
    #[serde(rename = "J")]
    pub j: usize,
}

impl DecompositionReport {
    pub fn within_tolerance(&self) -> bool {
        self.residual <= self.tolerance
    }
}

/// Computes `I` by direct maximisation, the bulk part `I1` over
/// zero-boundary test functions and the boundary part `I2` as the time
/// integral of `Phi(a(t), b(t))`.
pub fn decompose_i<R: Real>(path: &PathDensity<R>, model: &RateModel<R>, opts: &LdpOptions) -> Result<DecompositionReport, LdpError> {
    path.require_interior()?;
    let rho0 = path.rho(0).to_vec();
    let gamma = |x: R| {
        let s = (x * R::from_usize_lossy(path.n())).round().to_usize().unwrap_or(0).min(path.n());
        rho0[s]
    };
    let full = eval_i(path, model, &gamma, opts)?;

    if opts.zero_basis.flavor() != Flavor::ZeroBoundary {
        return Err(LdpError::Basis(format!("{:?} does not vanish at the boundary", opts.zero_basis)));
    }
    let tensor = Tensor::new(path, opts.zero_basis, opts.p, opts.j)?;
    let mut ell = vec![R::zero(); tensor.nb()];
    for k in 0..path.frames() {
        let pt = tensor.project(path.dt_rho(k), false);
        let pg = tensor.project(path.dx_rho(k), true);
        let v: Vec<R> = pt.iter().zip(&pg).map(|(a, b)| *a + *b).collect();
        tensor.add_outer(&mut ell, &tensor.phi[k], tensor.wt[k], &v);
    }
    let (i1, _) = quadratic_max(tensor.energy_matrix(path, true), &ell, R::lit(opts.ridge))?;

    let (a, b) = boundary_charges(path)?;
    let zetas = zeta_trace(path)?;
    let moments = BoundaryMoments::new(model);
    let wt: Vec<f64> = path.time_weights().iter().map(|w| w.to_f64_lossy()).collect();
    let mut phis = Vec::with_capacity(path.frames());
    for k in 0..path.frames() {
        let cost = BoundaryCost::from_moments(moments.clone(), path.rho(k)[0], path.rho(k)[path.n()], zetas[k])?;
        phis.push(cost.phi(a[k], b[k])?);
    }
    let i2 = phis.iter().zip(&wt).map(|(p, w)| p.value * w).sum::<f64>();

    let i = full.value.to_f64_lossy();
    let i1 = i1.to_f64_lossy();
    let f64s = |v: &[R]| v.iter().map(|x| x.to_f64_lossy()).collect::<Vec<_>>();
    Ok(DecompositionReport {
        i,
        i1,
        i2,
        residual: (i - i1 - i2).abs(),
        tolerance: (0.02 * i.abs()).max(1e-3),
        times: (0..path.frames()).map(|k| path.time(k).to_f64_lossy()).collect(),
        a: f64s(&a),
        b: f64s(&b),
        zeta: f64s(&zetas),
        phi: phis.iter().map(|p| p.value).collect(),
        x_star: phis.iter().map(|p| p.x).collect(),
        y_star: phis.iter().map(|p| p.y).collect(),
        phi_iterations: phis.iter().map(|p| p.iterations).collect(),
        phi_grid_fallbacks: phis.iter().filter(|p| p.method == PhiMethod::GridScan).count(),
        phi_unbounded: phis.iter().any(|p| p.unbounded),
        i_iterations: full.iterations,
        i_grad_norm: full.grad_norm,
        p: opts.p,
        j: opts.j,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xi_is_linear_for_constant_paths() {
        let path = PathDensity::from_fn(|_, _| 0.3f64, 10, 4, 1.0).unwrap();
        let xi = xi_field(&path).unwrap();
        for (i, v) in xi[2].iter().enumerate() {
            assert!((v - i as f64 / 10.0).abs() < 1e-14);
        }
        assert!((zeta(&path, 0.37).unwrap() - 0.21).abs() < 1e-14);
    }

    #[test]
    fn grid_scan_finds_quadratic_maximum() {
        let model = RateModel::l3(1.0, 2.0, None).unwrap().0;
        let cost = BoundaryCost::new(&model, 0.4, 0.6, 0.3).unwrap();
        let n = cost.phi(0.7, -0.2).unwrap();
        let g = cost.phi_grid(0.7, -0.2);
        assert_eq!(n.method, PhiMethod::Newton);
        assert!((n.value - g.value).abs() < 1e-9, "{n:?} {g:?}");
        assert!((n.x - g.x).abs() < 1e-6 && (n.y - g.y).abs() < 1e-6);
    }
}
