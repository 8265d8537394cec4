//! Runtime checks of properties every solution of the boundary problem has.

use serde::Serialize;

use super::field::DensityField;
use super::PdeError;
use crate::boundary::{BoundaryMoments, RateModel, Side};
use crate::scalar::{mobility, Real};

/// Boundary fluxes `(left, right)` at frame `k`, tilted if the field is.
fn boundary_fluxes<R: Real>(field: &DensityField<R>, m: &BoundaryMoments<R>, k: usize) -> Result<(R, R), PdeError> {
    let f = field.frame(k);
    let (g0, g1) = match field.tilt() {
        Some(g) => {
            let t = field.time(k);
            (g.value(t, R::zero()), g.value(t, R::one()))
        }
        None => (R::zero(), R::zero()),
    };
    let n = field.grid().n();
    Ok((
        m.pfrak(Side::Left, f[0], g0, field.pfrak())?,
        m.pfrak(Side::Right, f[n], g1, field.pfrak())?,
    ))
}

/// `int rho_t - int rho_0 - int_0^t [F_+(rho_s(1)) + F_-(rho_s(0))] ds` at
/// every stored frame, with the tilted fluxes for a perturbed field.
pub fn mass_balance_residual<R: Real>(field: &DensityField<R>, model: &RateModel<R>) -> Result<Vec<R>, PdeError> {
    let m = BoundaryMoments::new(model);
    let one = |_: R| R::one();
    let mass0 = field.pairing(0, one);
    let half = R::lit(0.5);
    let mut out = Vec::with_capacity(field.frames());
    let mut integral = R::zero();
    let (l, r) = boundary_fluxes(field, &m, 0)?;
    let mut prev = l + r;
    out.push(R::zero());
    for k in 1..field.frames() {
        let (l, r) = boundary_fluxes(field, &m, k)?;
        let cur = l + r;
        integral = integral + half * (field.time(k) - field.time(k - 1)) * (prev + cur);
        prev = cur;
        out.push(field.pairing(k, one) - mass0 - integral);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundsReport {
    /// Largest `eps` with `eps <= rho <= 1 - eps` for `t >= t0`.
    pub epsilon: f64,
    pub t0: f64,
    pub min: f64,
    pub max: f64,
}

/// Checks `0 <= rho <= 1` everywhere and reports the interior margin after `t0`
/// (default `T / 10`).
pub fn parabolic_bounds_check<R: Real>(field: &DensityField<R>, t0: Option<R>) -> Result<BoundsReport, PdeError> {
    let t0 = t0.unwrap_or(field.t_final() * R::lit(0.1));
    let mut eps = f64::INFINITY;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 0..field.frames() {
        let t = field.time(k);
        for (i, v) in field.frame(k).iter().enumerate() {
            let v = v.to_f64_lossy();
            if !(0.0..=1.0).contains(&v) {
                return Err(PdeError::Bounds { t: t.to_f64_lossy(), x: field.grid().node(i), value: v });
            }
            if t >= t0 {
                eps = eps.min(v.min(1.0 - v));
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    Ok(BoundsReport { epsilon: eps, t0: t0.to_f64_lossy(), min: lo, max: hi })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyReport {
    /// Smallest constant making the inequality hold at every frame.
    pub min_c0: f64,
    pub c0: f64,
    pub holds: bool,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
}

fn entropy_density(x: f64) -> f64 {
    let xlx = |u: f64| if u <= 0.0 { 0.0 } else { u * u.ln() };
    xlx(x) + xlx(1.0 - x)
}

/// Evaluates the entropy bound
/// `int_0^t int (grad rho)^2 / sigma + sum_sides int_0^t |F(rho) log(rho / (1 - rho))|
///   <= C0 t + int V0(gamma) - int V0(rho_t)`.
pub fn entropy_inequality_check<R: Real>(field: &DensityField<R>, model: &RateModel<R>, c0: f64) -> Result<EntropyReport, PdeError> {
    let grid = field.grid();
    let n = grid.n();
    let dx: f64 = grid.dx();
    for k in 1..field.frames() {
        for (i, v) in field.frame(k).iter().enumerate() {
            let v = v.to_f64_lossy();
            if v <= 0.0 || v >= 1.0 {
                return Err(PdeError::Singular { t: field.time(k).to_f64_lossy(), x: grid.node(i) });
            }
        }
    }
    let m = BoundaryMoments::new(model);
    let space_int = |vals: &[f64]| -> f64 {
        let mut s = 0.5 * (vals[0] + vals[n]);
        s += vals[1..n].iter().sum::<f64>();
        s * dx
    };
    let v0 = |k: usize| -> f64 {
        let vals: Vec<f64> = field.frame(k).iter().map(|v| entropy_density(v.to_f64_lossy())).collect();
        space_int(&vals)
    };
    let rate = |k: usize| -> Result<f64, PdeError> {
        let f: Vec<f64> = field.frame(k).iter().map(|v| v.to_f64_lossy()).collect();
        let mut g = vec![0.0; n + 1];
        g[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dx);
        g[n] = (3.0 * f[n] - 4.0 * f[n - 1] + f[n - 2]) / (2.0 * dx);
        for i in 1..n {
            g[i] = (f[i + 1] - f[i - 1]) / (2.0 * dx);
        }
        let dens: Vec<f64> = (0..=n).map(|i| if mobility(f[i]) > 0.0 { g[i] * g[i] / mobility(f[i]) } else { 0.0 }).collect();
        let logit = |u: f64| (u / (1.0 - u)).ln();
        let bl = m.flux(Side::Left, R::lit(f[0]))?.to_f64_lossy() * logit(f[0]);
        let br = m.flux(Side::Right, R::lit(f[n]))?.to_f64_lossy() * logit(f[n]);
        Ok(space_int(&dens) + bl.abs() + br.abs())
    };
    let v_init = v0(0);
    let mut lhs = vec![0.0];
    let mut rhs = vec![0.0];
    let mut min_c0 = 0.0f64;
    let mut acc = 0.0;
    let mut prev = if field.frames() > 1 { rate(1)? } else { 0.0 };
    for k in 1..field.frames() {
        let t = field.time(k).to_f64_lossy();
        let dt = t - field.time(k - 1).to_f64_lossy();
        let cur = rate(k)?;
        // the first interval uses the t > 0 value at both ends
        acc += 0.5 * dt * (prev + cur);
        prev = cur;
        let dv = v_init - v0(k);
        lhs.push(acc);
        rhs.push(c0 * t + dv);
        if t > 0.0 {
            min_c0 = min_c0.max((acc - dv) / t);
        }
    }
    Ok(EntropyReport { min_c0, c0, holds: min_c0 <= c0, lhs, rhs })
}
