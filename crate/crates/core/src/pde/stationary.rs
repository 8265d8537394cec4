use serde::Serialize;

use super::field::Grid;
use super::solver::{solve_hydro, SolverOptions};
use super::PdeError;
use crate::boundary::{MomentPolynomials, RateModel, Side};
use crate::scalar::Real;

/// Linear stationary profile `(beta - alpha) x + alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationaryProfile {
    pub alpha: f64,
    pub beta: f64,
    /// `|-F_-(alpha) - (beta - alpha)|`.
    pub residual_left: f64,
    /// `|F_+(beta) - (beta - alpha)|`.
    pub residual_right: f64,
}

impl StationaryProfile {
    pub fn eval(&self, x: f64) -> f64 {
        (self.beta - self.alpha) * x + self.alpha
    }
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * x + v)
}

/// Scans `alpha` on an `m`-grid, sets `beta = alpha - F_-(alpha)` and
/// bisects sign changes of `F_+(beta) + F_-(alpha)` down to `tol`.
pub fn stationary_profiles<R: Real>(model: &RateModel<R>, m: usize, tol: f64) -> Result<Vec<StationaryProfile>, PdeError> {
    if m < 100 {
        return Err(PdeError::Resolution(m));
    }
    let fl = MomentPolynomials::new(&model.table(Side::Left).map(|v| v.to_f64_lossy())).flux_monomial();
    let fr = MomentPolynomials::new(&model.table(Side::Right).map(|v| v.to_f64_lossy())).flux_monomial();
    let beta = |a: f64| a - horner(&fl, a);
    let resid = |a: f64| -> Option<f64> {
        let b = beta(a);
        (0.0..=1.0).contains(&b).then(|| horner(&fr, b) + horner(&fl, a))
    };
    let mut roots: Vec<f64> = Vec::new();
    let grid: Vec<f64> = (0..=m).map(|i| i as f64 / m as f64).collect();
    let vals: Vec<Option<f64>> = grid.iter().map(|&a| resid(a)).collect();
    for i in 0..m {
        let (Some(r0), Some(r1)) = (vals[i], vals[i + 1]) else { continue };
        if r0 == 0.0 {
            roots.push(grid[i]);
            continue;
        }
        if r1 == 0.0 || r0.signum() == r1.signum() {
            continue;
        }
        let (mut lo, mut hi, mut flo) = (grid[i], grid[i + 1], r0);
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            match resid(mid) {
                Some(fm) if fm == 0.0 => {
                    lo = mid;
                    hi = mid;
                }
                Some(fm) if fm.signum() == flo.signum() => {
                    lo = mid;
                    flo = fm;
                }
                Some(_) => hi = mid,
                None => break,
            }
        }
        roots.push(0.5 * (lo + hi));
    }
    if let Some(r) = vals[m] {
        if r == 0.0 {
            roots.push(1.0);
        }
    }
    let mut out: Vec<StationaryProfile> = Vec::new();
    for a in roots {
        if out.iter().any(|p| (p.alpha - a).abs() <= 10.0 * tol) {
            continue;
        }
        let b = beta(a);
        out.push(StationaryProfile {
            alpha: a,
            beta: b,
            residual_left: (-horner(&fl, a) - (b - a)).abs(),
            residual_right: (horner(&fr, b) - (b - a)).abs(),
        });
    }
    Ok(out)
}

/// Heuristic label from time integration of perturbed starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stability {
    Stable,
    Unstable,
    Inconclusive,
}

/// Integrates from `profile +- delta` and compares the sup distance to the
/// profile at `t_final` with the initial one. This is a numerical heuristic,
/// not a proof of stability.
pub fn classify_stability(model: &RateModel<f64>, profile: &StationaryProfile, delta: f64, t_final: f64) -> Result<Stability, PdeError> {
    let grid = Grid::new(32)?;
    let opts = SolverOptions { max_frames: 1, ..Default::default() };
    let mut shrink = 0;
    let mut grow = 0;
    for sign in [1.0, -1.0] {
        let gamma = |x: f64| (profile.eval(x) + sign * delta).clamp(0.0, 1.0);
        let field = solve_hydro(&gamma, model, grid, grid.explicit_dt(), t_final, &opts)?;
        let dist = field
            .last()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - profile.eval(grid.node(i))).abs())
            .fold(0.0, f64::max);
        if dist < 0.5 * delta {
            shrink += 1;
        } else if dist > 2.0 * delta {
            grow += 1;
        }
    }
    Ok(match (shrink, grow) {
        (2, _) => Stability::Stable,
        (_, g) if g > 0 => Stability::Unstable,
        _ => Stability::Inconclusive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horner_evaluates_monomials() {
        assert_eq!(horner(&[1.0, -10.0, 24.0, -16.0], 0.5), 0.0);
        assert!((horner(&[1.0, -10.0, 24.0, -16.0], 0.3) + 0.272).abs() < 1e-12);
    }

    #[test]
    fn rejects_coarse_scan() {
        let model = RateModel::l3(1.0, 2.0, None).unwrap().0;
        assert_eq!(stationary_profiles(&model, 50, 1e-12), Err(PdeError::Resolution(50)));
    }
}
