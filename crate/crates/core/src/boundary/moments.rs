use serde::{Deserialize, Serialize};

use super::table::{BoundaryRateTable, RateModel, MAX_WINDOW};
use super::window::{Side, WindowState};
use super::BoundaryError;
use crate::scalar::{binomial, Real, Scalar};

/// Largest admissible `|M| * l` in the exponential boundary functions.
pub const EXPONENT_CAP: f64 = 500.0;

fn check_density<R: Real>(alpha: R) -> Result<(), BoundaryError> {
    if alpha >= R::zero() && alpha <= R::one() {
        Ok(())
    } else {
        Err(BoundaryError::DensityRange(alpha.to_f64_lossy()))
    }
}

fn check_k(k: usize, l: usize) -> Result<(), BoundaryError> {
    if k >= 1 && k <= l {
        Ok(())
    } else {
        Err(BoundaryError::KRange { k, l })
    }
}

/// Particle-number change of a window replacement.
fn delta(from: WindowState, to: WindowState) -> i32 {
    to.count() as i32 - from.count() as i32
}

fn times<S: Scalar>(x: &S, k: u32) -> S {
    (0..k).fold(S::zero(), |acc, _| acc + x.clone())
}

/// `E_{nu_alpha}[f]` over a window of `l` sites, by enumerating all `2^l` states.
pub fn window_expectation<R: Real>(l: usize, f: impl Fn(WindowState) -> R, alpha: R) -> Result<R, BoundaryError> {
    check_density(alpha)?;
    let mut pow_a = vec![R::one(); l + 1];
    let mut pow_b = vec![R::one(); l + 1];
    for j in 1..=l {
        pow_a[j] = pow_a[j - 1] * alpha;
        pow_b[j] = pow_b[j - 1] * (R::one() - alpha);
    }
    let mut acc = R::zero();
    for w in WindowState::all(l) {
        let c = w.count() as usize;
        acc = acc + f(w) * pow_a[c] * pow_b[l - c];
    }
    Ok(acc)
}

/// Net rate at which the boundary window gains particles from state `window`.
pub fn h_boundary<S: Scalar>(model: &RateModel<S>, side: Side, window: WindowState) -> S {
    let mut acc = S::zero();
    for (to, r) in model.table(side).transitions(window) {
        let d = delta(window, to);
        if d > 0 {
            acc = acc + times(r, d as u32);
        } else {
            acc = acc - times(r, (-d) as u32);
        }
    }
    acc
}

fn rate_with<R: Real>(table: &BoundaryRateTable<R>, w: WindowState, keep: impl Fn(i32) -> R) -> R {
    table.transitions(w).map(|(to, r)| *r * keep(delta(w, to))).fold(R::zero(), |a, b| a + b)
}

/// Mean boundary flux `E_{nu_alpha}[h]`.
pub fn flux<R: Real>(model: &RateModel<R>, side: Side, alpha: R) -> Result<R, BoundaryError> {
    window_expectation(model.l(), |w| h_boundary(model, side, w), alpha)
}

/// Mean creation rate, counting particles created.
pub fn creation_rate<R: Real>(model: &RateModel<R>, side: Side, alpha: R) -> Result<R, BoundaryError> {
    let t = model.table(side);
    window_expectation(model.l(), |w| rate_with(t, w, |d| R::from_usize_lossy(d.max(0) as usize)), alpha)
}

/// Mean destruction rate, counting particles removed.
pub fn destruction_rate<R: Real>(model: &RateModel<R>, side: Side, alpha: R) -> Result<R, BoundaryError> {
    let t = model.table(side);
    window_expectation(model.l(), |w| rate_with(t, w, |d| R::from_usize_lossy((-d).max(0) as usize)), alpha)
}

/// Mean total rate of moves creating exactly `k` particles.
pub fn creation_rate_k<R: Real>(model: &RateModel<R>, side: Side, k: usize, alpha: R) -> Result<R, BoundaryError> {
    check_k(k, model.l())?;
    let t = model.table(side);
    window_expectation(model.l(), |w| rate_with(t, w, |d| if d == k as i32 { R::one() } else { R::zero() }), alpha)
}

/// Mean total rate of moves removing exactly `k` particles.
pub fn destruction_rate_k<R: Real>(model: &RateModel<R>, side: Side, k: usize, alpha: R) -> Result<R, BoundaryError> {
    check_k(k, model.l())?;
    let t = model.table(side);
    window_expectation(model.l(), |w| rate_with(t, w, |d| if d == -(k as i32) { R::one() } else { R::zero() }), alpha)
}

/// Exact polynomial form of the `k`-particle creation and destruction rates.
///
/// Stored as coefficients `c_j` of `alpha^j (1 - alpha)^(l - j)`, where `c_j`
/// sums the relevant rates over windows with `j` particles. Only ring
/// operations are used, so exact rationals work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentPolynomials<S> {
    side: Side,
    l: usize,
    create: Vec<Vec<S>>,
    destroy: Vec<Vec<S>>,
}

impl<S: Scalar> MomentPolynomials<S> {
    pub fn new(table: &BoundaryRateTable<S>) -> Self {
        let l = table.l();
        let mut create = vec![vec![S::zero(); l + 1]; l];
        let mut destroy = vec![vec![S::zero(); l + 1]; l];
        for w in WindowState::all(l) {
            let j = w.count() as usize;
            for (to, r) in table.transitions(w) {
                let d = delta(w, to);
                let slot = if d > 0 {
                    &mut create[d as usize - 1][j]
                } else if d < 0 {
                    &mut destroy[(-d) as usize - 1][j]
                } else {
                    continue;
                };
                *slot = slot.clone() + r.clone();
            }
        }
        Self { side: table.side(), l, create, destroy }
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn l(&self) -> usize {
        self.l
    }

    /// Coefficients of `B_k` against `alpha^j (1 - alpha)^(l - j)`.
    pub fn create_coefficients(&self, k: usize) -> Result<&[S], BoundaryError> {
        check_k(k, self.l)?;
        Ok(&self.create[k - 1])
    }

    pub fn destroy_coefficients(&self, k: usize) -> Result<&[S], BoundaryError> {
        check_k(k, self.l)?;
        Ok(&self.destroy[k - 1])
    }

    fn to_monomial(&self, c: &[S]) -> Vec<S> {
        let l = self.l;
        let pascal = pascal_rows::<S>(l);
        let mut out = vec![S::zero(); l + 1];
        for (j, cj) in c.iter().enumerate() {
            for (i, b) in pascal[l - j].iter().enumerate() {
                let term = cj.clone() * b.clone();
                out[j + i] = if i % 2 == 0 { out[j + i].clone() + term } else { out[j + i].clone() - term };
            }
        }
        out
    }

    /// Coefficients of `B_k` in powers `alpha^0 ..= alpha^l`.
    pub fn create_monomial(&self, k: usize) -> Result<Vec<S>, BoundaryError> {
        Ok(self.to_monomial(self.create_coefficients(k)?))
    }

    pub fn destroy_monomial(&self, k: usize) -> Result<Vec<S>, BoundaryError> {
        Ok(self.to_monomial(self.destroy_coefficients(k)?))
    }

    /// Coefficients of `F = sum_k k (B_k - D_{-k})` in powers of `alpha`.
    pub fn flux_monomial(&self) -> Vec<S> {
        let mut c = vec![S::zero(); self.l + 1];
        for k in 1..=self.l {
            for j in 0..=self.l {
                let d = self.create[k - 1][j].clone() - self.destroy[k - 1][j].clone();
                c[j] = c[j].clone() + times(&d, k as u32);
            }
        }
        self.to_monomial(&c)
    }

    fn eval(&self, c: &[S], alpha: &S) -> S {
        let one_minus = S::one() - alpha.clone();
        let mut acc = S::zero();
        for (j, cj) in c.iter().enumerate() {
            let mut term = cj.clone();
            for _ in 0..j {
                term = term * alpha.clone();
            }
            for _ in j..self.l {
                term = term * one_minus.clone();
            }
            acc = acc + term;
        }
        acc
    }

    pub fn eval_create(&self, k: usize, alpha: &S) -> Result<S, BoundaryError> {
        Ok(self.eval(self.create_coefficients(k)?, alpha))
    }

    pub fn eval_destroy(&self, k: usize, alpha: &S) -> Result<S, BoundaryError> {
        Ok(self.eval(self.destroy_coefficients(k)?, alpha))
    }
}

fn pascal_rows<S: Scalar>(n: usize) -> Vec<Vec<S>> {
    let mut rows: Vec<Vec<S>> = vec![vec![S::one()]];
    for m in 1..=n {
        let prev = &rows[m - 1];
        let mut row = vec![S::one(); m + 1];
        for i in 1..m {
            row[i] = prev[i - 1].clone() + prev[i].clone();
        }
        rows.push(row);
    }
    rows
}

/// De Casteljau evaluation of `sum_j beta_j C(n, j) alpha^j (1 - alpha)^(n - j)`.
pub fn bernstein_eval<R: Real>(beta: &[R], alpha: R) -> R {
    if beta.is_empty() {
        return R::zero();
    }
    let mut buf = [R::zero(); MAX_WINDOW + 1];
    let n = beta.len();
    buf[..n].copy_from_slice(beta);
    let s = R::one() - alpha;
    for r in 1..n {
        for j in 0..n - r {
            buf[j] = s * buf[j] + alpha * buf[j + 1];
        }
    }
    buf[0]
}

/// Bernstein coefficients of the derivative (degree drops by one).
pub fn bernstein_derivative<R: Real>(beta: &[R]) -> Vec<R> {
    let n = beta.len().saturating_sub(1);
    let deg = R::from_usize_lossy(n);
    beta.windows(2).map(|w| deg * (w[1] - w[0])).collect()
}

/// Which expression is used for the boundary flux of the tilted equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PfrakVariant {
    /// `d/dM bfrak(alpha, M)`.
    #[default]
    Consistent,
    /// `M * d/dM bfrak(alpha, M)`, as literally displayed.
    Paper,
}

#[derive(Debug, Clone)]
struct SidePolys<R> {
    create: Vec<Vec<R>>,
    destroy: Vec<Vec<R>>,
    create_d: Vec<Vec<R>>,
    destroy_d: Vec<Vec<R>>,
}

/// Fast floating-point evaluator of every boundary moment function.
///
/// Built once from a model; all evaluations go through normalised Bernstein
/// coefficients, so `flux(alpha)` and `bfrak_dm(alpha, 0)` share one code path.
#[derive(Debug, Clone)]
pub struct BoundaryMoments<R> {
    l: usize,
    sides: [SidePolys<R>; 2],
}

impl<R: Real> BoundaryMoments<R> {
    pub fn new(model: &RateModel<R>) -> Self {
        let build = |side| {
            let p = MomentPolynomials::new(model.table(side));
            let l = p.l();
            let norm = |c: &Vec<R>| -> Vec<R> { c.iter().enumerate().map(|(j, v)| *v / binomial::<R>(l, j)).collect() };
            let create: Vec<Vec<R>> = p.create.iter().map(norm).collect();
            let destroy: Vec<Vec<R>> = p.destroy.iter().map(norm).collect();
            let create_d = create.iter().map(|c| bernstein_derivative(c)).collect();
            let destroy_d = destroy.iter().map(|c| bernstein_derivative(c)).collect();
            SidePolys { create, destroy, create_d, destroy_d }
        };
        Self { l: model.l(), sides: [build(Side::Left), build(Side::Right)] }
    }

    pub fn l(&self) -> usize {
        self.l
    }

    fn polys(&self, side: Side) -> &SidePolys<R> {
        match side {
            Side::Left => &self.sides[0],
            Side::Right => &self.sides[1],
        }
    }

    /// `(B_k(alpha), D_{-k}(alpha))` for `k = 1..=l`.
    fn rates(&self, side: Side, alpha: R) -> ([R; MAX_WINDOW], [R; MAX_WINDOW]) {
        let p = self.polys(side);
        let mut b = [R::zero(); MAX_WINDOW];
        let mut d = [R::zero(); MAX_WINDOW];
        for k in 0..self.l {
            b[k] = bernstein_eval(&p.create[k], alpha);
            d[k] = bernstein_eval(&p.destroy[k], alpha);
        }
        (b, d)
    }

    fn rates_dalpha(&self, side: Side, alpha: R) -> ([R; MAX_WINDOW], [R; MAX_WINDOW]) {
        let p = self.polys(side);
        let mut b = [R::zero(); MAX_WINDOW];
        let mut d = [R::zero(); MAX_WINDOW];
        for k in 0..self.l {
            b[k] = bernstein_eval(&p.create_d[k], alpha);
            d[k] = bernstein_eval(&p.destroy_d[k], alpha);
        }
        (b, d)
    }

    fn check_m(&self, m: R) -> Result<(), BoundaryError> {
        let e = m.abs().to_f64_lossy() * self.l as f64;
        if e <= EXPONENT_CAP {
            Ok(())
        } else {
            Err(BoundaryError::ExponentRange(e))
        }
    }

    pub fn b_k(&self, side: Side, k: usize, alpha: R) -> Result<R, BoundaryError> {
        check_density(alpha)?;
        check_k(k, self.l)?;
        Ok(bernstein_eval(&self.polys(side).create[k - 1], alpha))
    }

    pub fn d_minus_k(&self, side: Side, k: usize, alpha: R) -> Result<R, BoundaryError> {
        check_density(alpha)?;
        check_k(k, self.l)?;
        Ok(bernstein_eval(&self.polys(side).destroy[k - 1], alpha))
    }

    pub fn creation(&self, side: Side, alpha: R) -> Result<R, BoundaryError> {
        check_density(alpha)?;
        let (b, _) = self.rates(side, alpha);
        Ok((0..self.l).map(|k| R::from_usize_lossy(k + 1) * b[k]).fold(R::zero(), |a, x| a + x))
    }

    pub fn destruction(&self, side: Side, alpha: R) -> Result<R, BoundaryError> {
        check_density(alpha)?;
        let (_, d) = self.rates(side, alpha);
        Ok((0..self.l).map(|k| R::from_usize_lossy(k + 1) * d[k]).fold(R::zero(), |a, x| a + x))
    }

    /// `F(alpha)`; identical to `bfrak_dm(alpha, 0)`.
    pub fn flux(&self, side: Side, alpha: R) -> Result<R, BoundaryError> {
        self.bfrak_dm(side, alpha, R::zero())
    }

    pub fn flux_dalpha(&self, side: Side, alpha: R) -> Result<R, BoundaryError> {
        self.bfrak_dm_dalpha(side, alpha, R::zero())
    }

    /// `sum_k (e^{Mk} - 1) B_k + (e^{-Mk} - 1) D_{-k}`.
    pub fn bfrak(&self, side: Side, alpha: R, m: R) -> Result<R, BoundaryError> {
        check_density(alpha)?;
        self.check_m(m)?;
        let (b, d) = self.rates(side, alpha);
        let mut acc = R::zero();
        for k in 0..self.l {
            let mk = m * R::from_usize_lossy(k + 1);
            acc = acc + mk.exp_m1() * b[k] + (-mk).exp_m1() * d[k];
        }
        Ok(acc)
    }

    /// `d/dM bfrak = sum_k k (e^{Mk} B_k - e^{-Mk} D_{-k})`.
    pub fn bfrak_dm(&self, side: Side, alpha: R, m: R) -> Result<R, BoundaryError> {
        check_density(alpha)?;
        self.check_m(m)?;
        let (b, d) = self.rates(side, alpha);
        Ok(Self::dm_kernel(self.l, &b, &d, m))
    }

    fn dm_kernel(l: usize, b: &[R], d: &[R], m: R) -> R {
        let mut acc = R::zero();
        for k in 0..l {
            let kk = R::from_usize_lossy(k + 1);
            let mk = m * kk;
            acc = acc + kk * (mk.exp() * b[k] - (-mk).exp() * d[k]);
        }
        acc
    }

    /// `d^2/dM^2 bfrak = sum_k k^2 (e^{Mk} B_k + e^{-Mk} D_{-k})`, nonnegative.
    pub fn bfrak_d2m(&self, side: Side, alpha: R, m: R) -> Result<R, BoundaryError> {
        check_density(alpha)?;
        self.check_m(m)?;
        let (b, d) = self.rates(side, alpha);
        let mut acc = R::zero();
        for k in 0..self.l {
            let kk = R::from_usize_lossy(k + 1);
            let mk = m * kk;
            acc = acc + kk * kk * (mk.exp() * b[k] + (-mk).exp() * d[k]);
        }
        Ok(acc)
    }

    /// `d/dalpha` of `bfrak_dm(alpha, M)`.
    pub fn bfrak_dm_dalpha(&self, side: Side, alpha: R, m: R) -> Result<R, BoundaryError> {
        check_density(alpha)?;
        self.check_m(m)?;
        let (b, d) = self.rates_dalpha(side, alpha);
        Ok(Self::dm_kernel(self.l, &b, &d, m))
    }

    pub fn pfrak(&self, side: Side, alpha: R, m: R, variant: PfrakVariant) -> Result<R, BoundaryError> {
        let v = self.bfrak_dm(side, alpha, m)?;
        Ok(match variant {
            PfrakVariant::Consistent => v,
            PfrakVariant::Paper => m * v,
        })
    }

    pub fn pfrak_dalpha(&self, side: Side, alpha: R, m: R, variant: PfrakVariant) -> Result<R, BoundaryError> {
        let v = self.bfrak_dm_dalpha(side, alpha, m)?;
        Ok(match variant {
            PfrakVariant::Consistent => v,
            PfrakVariant::Paper => m * v,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use num_rational::Ratio;

    fn l3() -> RateModel<f64> {
        RateModel::l3(1.0, 2.0, None).unwrap().0
    }

    fn closed_form(rho: f64) -> f64 {
        let u = 2.0 * rho - 1.0;
        (2.0 - 1.0) * u - 2.0 * u * u * u
    }

    #[test]
    fn window_expectation_basics() {
        assert_abs_diff_eq!(window_expectation(3, |_| 1.0, 0.37).unwrap(), 1.0, epsilon = 1e-15);
        let site1 = |w: WindowState| if w.occupied(0) { 1.0 } else { 0.0 };
        assert_abs_diff_eq!(window_expectation(3, site1, 0.3).unwrap(), 0.3, epsilon = 1e-15);
        let all = |w: WindowState| if w == WindowState::full(4) { 1.0 } else { 0.0 };
        assert_abs_diff_eq!(window_expectation(4, all, 0.6).unwrap(), 0.6f64.powi(4), epsilon = 1e-15);
        assert!(window_expectation(3, |_| 1.0, 1.1).is_err());
    }

    #[test]
    fn h_boundary_on_l3_windows() {
        let m = l3();
        assert_eq!(h_boundary(&m, Side::Left, WindowState::from_sites(&[1, 0, 1])), 17.0);
        assert_eq!(h_boundary(&m, Side::Left, WindowState::from_sites(&[0, 0, 0])), 1.0);
        assert_eq!(h_boundary(&m, Side::Left, WindowState::from_sites(&[1, 1, 1])), -1.0);
        let swap_only = BoundaryRateTable::from_triples(Side::Left, 2, [(1, 2, 3.0)]).unwrap();
        let sm = RateModel::symmetric(swap_only).unwrap();
        assert_eq!(h_boundary(&sm, Side::Left, WindowState::new(1)), 0.0);
    }

    #[test]
    fn l3_flux_matches_closed_form() {
        let m = l3();
        let bm = BoundaryMoments::new(&m);
        assert_abs_diff_eq!(flux(&m, Side::Left, 0.3).unwrap(), -0.272, epsilon = 1e-12);
        for i in 0..=100 {
            let a = i as f64 / 100.0;
            let cf = closed_form(a);
            assert_abs_diff_eq!(flux(&m, Side::Left, a).unwrap(), cf, epsilon = 1e-12);
            assert_abs_diff_eq!(bm.flux(Side::Left, a).unwrap(), cf, epsilon = 1e-12);
            assert_abs_diff_eq!(bm.flux(Side::Right, a).unwrap(), cf, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(bm.flux(Side::Left, 0.5).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn l3_creation_moments() {
        let bm = BoundaryMoments::new(&l3());
        assert_abs_diff_eq!(bm.b_k(Side::Left, 1, 0.0).unwrap(), 1.0, epsilon = 1e-15);
        for i in 0..=10 {
            let a = i as f64 / 10.0;
            assert_eq!(bm.b_k(Side::Left, 2, a).unwrap(), 0.0);
            assert_eq!(bm.b_k(Side::Left, 3, a).unwrap(), 0.0);
            assert_eq!(bm.d_minus_k(Side::Left, 3, a).unwrap(), 0.0);
        }
        assert_abs_diff_eq!(bm.b_k(Side::Left, 1, 0.3).unwrap(), 2.884, epsilon = 1e-12);
        assert_abs_diff_eq!(bm.d_minus_k(Side::Left, 1, 0.3).unwrap(), 3.156, epsilon = 1e-12);
        assert!(bm.b_k(Side::Left, 4, 0.3).is_err());
        assert!(bm.b_k(Side::Left, 0, 0.3).is_err());
    }

    #[test]
    fn bfrak_l3_value() {
        let bm = BoundaryMoments::new(&l3());
        for &mm in &[-1.3, -0.2, 0.0, 0.7, 2.0] {
            let m: f64 = mm;
            let expect = (m.exp() - 1.0) * 2.884 + ((-m).exp() - 1.0) * 3.156;
            assert_abs_diff_eq!(bm.bfrak(Side::Left, 0.3, m).unwrap(), expect, epsilon = 1e-11);
        }
        assert_eq!(bm.bfrak(Side::Left, 0.3, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn exponent_cap_is_enforced() {
        let bm = BoundaryMoments::new(&l3());
        assert!(bm.bfrak(Side::Left, 0.3, 166.0).is_ok());
        assert!(matches!(bm.bfrak(Side::Left, 0.3, 167.0), Err(BoundaryError::ExponentRange(_))));
        assert!(bm.pfrak(Side::Right, 0.3, -200.0, PfrakVariant::Consistent).is_err());
    }

    #[test]
    fn pfrak_variants() {
        let bm = BoundaryMoments::new(&l3());
        let h = 1e-5;
        for &(a, m) in &[(0.3, 0.4), (0.8, -1.1), (0.5, 0.0), (0.05, 2.5)] {
            let c = bm.pfrak(Side::Left, a, m, PfrakVariant::Consistent).unwrap();
            let p = bm.pfrak(Side::Left, a, m, PfrakVariant::Paper).unwrap();
            assert_abs_diff_eq!(p, m * c, epsilon = 1e-14);
            let fd = (bm.bfrak(Side::Left, a, m + h).unwrap() - bm.bfrak(Side::Left, a, m - h).unwrap()) / (2.0 * h);
            assert_abs_diff_eq!(c, fd, epsilon = 1e-6 * (1.0 + c.abs()));
        }
        assert_eq!(bm.pfrak(Side::Left, 0.3, 0.0, PfrakVariant::Paper).unwrap(), 0.0);
    }

    #[test]
    fn alpha_derivative_matches_finite_difference() {
        let bm = BoundaryMoments::new(&l3());
        let h = 1e-6;
        for &(a, m) in &[(0.3, 0.4), (0.7, -0.9), (0.5, 0.0)] {
            let d = bm.bfrak_dm_dalpha(Side::Left, a, m).unwrap();
            let fd = (bm.bfrak_dm(Side::Left, a + h, m).unwrap() - bm.bfrak_dm(Side::Left, a - h, m).unwrap()) / (2.0 * h);
            assert_abs_diff_eq!(d, fd, epsilon = 1e-6);
        }
        // F'(rho) = 2(b - a) - 6b(2rho - 1)^2
        assert_abs_diff_eq!(bm.flux_dalpha(Side::Left, 0.5).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn l3_b1_polynomial_is_exact() {
        let r = |n: i64| Ratio::from_integer(n);
        let (m, _) = RateModel::l3(r(1), r(2), None).unwrap();
        let p = MomentPolynomials::new(m.table(Side::Left));
        // (1-a)^3 + 17 a^2 (1-a) + 10 a (1-a)^2
        let expect = vec![r(1), r(-3 + 10), r(3 + 17 - 20), r(-1 - 17 + 10)];
        assert_eq!(p.create_monomial(1).unwrap(), expect);
        // second derivative 4a - 4a2 + 8b - 24 b alpha with (a, b, a2) = (1, 2, 5)
        assert_eq!(r(2) * expect[2], r(4 - 20 + 16));
        assert_eq!(r(6) * expect[3], r(-48));
        // (b-a)(2r-1) - b(2r-1)^3 = 1 - 10r + 24r^2 - 16r^3
        let f = p.flux_monomial();
        let closed = vec![r(1), r(-10), r(24), r(-16)];
        assert_eq!(f, closed);
    }

    #[test]
    fn l3_b1_concavity_for_general_parameters() {
        let r = |n: i64, d: i64| Ratio::new(n, d);
        for &(a, b, a2) in &[(r(1, 1), r(2, 1), r(5, 1)), (r(1, 2), r(3, 1), r(15, 2)), (r(1, 3), r(1, 2), r(4, 1))] {
            let (m, _) = RateModel::l3(a, b, Some(a2)).unwrap();
            let c = MomentPolynomials::new(m.table(Side::Left)).create_monomial(1).unwrap();
            assert_eq!(r(2, 1) * c[2], r(4, 1) * a - r(4, 1) * a2 + r(8, 1) * b);
            assert_eq!(r(6, 1) * c[3], r(-24, 1) * b);
        }
    }

    #[test]
    fn single_site_creation() {
        let m = RateModel::single_site((2.5, 0.0), (0.0, 1.0)).unwrap();
        let bm = BoundaryMoments::new(&m);
        for i in 0..=10 {
            let a = i as f64 / 10.0;
            assert_abs_diff_eq!(bm.b_k(Side::Left, 1, a).unwrap(), 2.5 * (1.0 - a), epsilon = 1e-15);
        }
    }

    #[test]
    fn polynomials_match_enumeration_at_chebyshev_nodes() {
        let m = l3();
        let bm = BoundaryMoments::new(&m);
        for i in 0..11 {
            let a = 0.5 - 0.5 * ((2 * i + 1) as f64 * std::f64::consts::PI / 22.0).cos();
            for side in Side::BOTH {
                for k in 1..=3 {
                    assert_abs_diff_eq!(bm.b_k(side, k, a).unwrap(), creation_rate_k(&m, side, k, a).unwrap(), epsilon = 1e-13);
                    assert_abs_diff_eq!(bm.d_minus_k(side, k, a).unwrap(), destruction_rate_k(&m, side, k, a).unwrap(), epsilon = 1e-13);
                }
                assert_abs_diff_eq!(bm.creation(side, a).unwrap(), creation_rate(&m, side, a).unwrap(), epsilon = 1e-13);
                assert_abs_diff_eq!(bm.destruction(side, a).unwrap(), destruction_rate(&m, side, a).unwrap(), epsilon = 1e-13);
            }
        }
    }
}
