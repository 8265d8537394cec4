//! Smooth space-time test functions with analytic derivatives.
//!
//! `H(t, x) = sum_{i, m} c[i][m] phi_i(t) psi_m(x)` with Bernstein polynomials
//! `phi_i` of degree `p` on `[0, T]` and one of several spatial families.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{binomial, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TestFunctionError {
    #[error("horizon T must be positive and finite")]
    Horizon,
    #[error("expected {expected} coefficients, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("non-finite coefficient")]
    NonFinite,
    #[error("{0}")]
    Unsupported(String),
}

/// Whether the spatial family constrains the boundary values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flavor {
    FreeBoundary,
    ZeroBoundary,
}

/// Spatial basis family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpaceBasis {
    /// `cos(m pi x)`, `m = 0..=J`.
    Cosine,
    /// `sin(m pi x)`, `m = 1..=J`.
    Sine,
    /// Shifted Legendre polynomials `P_m(2x - 1)`, `m = 0..=J`.
    #[default]
    Legendre,
    /// `x (1 - x) P_m(2x - 1)`, `m = 0..J`.
    LegendreBubble,
}

impl SpaceBasis {
    pub fn flavor(self) -> Flavor {
        match self {
            SpaceBasis::Cosine | SpaceBasis::Legendre => Flavor::FreeBoundary,
            SpaceBasis::Sine | SpaceBasis::LegendreBubble => Flavor::ZeroBoundary,
        }
    }

    /// Number of spatial functions for size parameter `j`.
    pub fn len(self, j: usize) -> usize {
        match self {
            SpaceBasis::Cosine | SpaceBasis::Legendre => j + 1,
            SpaceBasis::Sine | SpaceBasis::LegendreBubble => j,
        }
    }

    /// Values, first and second derivatives of every basis function at `x`.
    pub fn eval<R: Real>(self, j: usize, x: R) -> SpaceValues<R> {
        let n = self.len(j);
        let mut out = SpaceValues { v: vec![R::zero(); n], d1: vec![R::zero(); n], d2: vec![R::zero(); n] };
        let pi = R::lit(std::f64::consts::PI);
        match self {
            SpaceBasis::Cosine | SpaceBasis::Sine => {
                let off = if self == SpaceBasis::Cosine { 0 } else { 1 };
                for k in 0..n {
                    let w = pi * R::from_usize_lossy(k + off);
                    let (s, c) = (w * x).sin_cos();
                    if self == SpaceBasis::Cosine {
                        out.v[k] = c;
                        out.d1[k] = -w * s;
                        out.d2[k] = -w * w * c;
                    } else {
                        out.v[k] = s;
                        out.d1[k] = w * c;
                        out.d2[k] = -w * w * s;
                    }
                }
            }
            SpaceBasis::Legendre => {
                let (p, dp, ddp) = legendre(n, R::lit(2.0) * x - R::one());
                for k in 0..n {
                    out.v[k] = p[k];
                    out.d1[k] = R::lit(2.0) * dp[k];
                    out.d2[k] = R::lit(4.0) * ddp[k];
                }
            }
            SpaceBasis::LegendreBubble => {
                let (p, dp, ddp) = legendre(n, R::lit(2.0) * x - R::one());
                let q = x * (R::one() - x);
                let dq = R::one() - R::lit(2.0) * x;
                for k in 0..n {
                    let (pk, dpk, ddpk) = (p[k], R::lit(2.0) * dp[k], R::lit(4.0) * ddp[k]);
                    out.v[k] = q * pk;
                    out.d1[k] = dq * pk + q * dpk;
                    out.d2[k] = R::lit(-2.0) * pk + R::lit(2.0) * dq * dpk + q * ddpk;
                }
            }
        }
        out
    }

    /// Per-function bounds on `sup |psi|` and `sup |psi'|` over `[0, 1]`.
    fn sup_bounds(self, j: usize) -> (Vec<f64>, Vec<f64>) {
        let n = self.len(j);
        let pi = std::f64::consts::PI;
        (0..n)
            .map(|k| {
                let kf = k as f64;
                match self {
                    SpaceBasis::Cosine => (1.0, kf * pi),
                    SpaceBasis::Sine => (1.0, (kf + 1.0) * pi),
                    SpaceBasis::Legendre => (1.0, kf * (kf + 1.0)),
                    SpaceBasis::LegendreBubble => (0.25, 1.0 + kf * (kf + 1.0) / 4.0),
                }
            })
            .unzip()
    }
}

/// Basis values at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceValues<R> {
    pub v: Vec<R>,
    pub d1: Vec<R>,
    pub d2: Vec<R>,
}

/// `P_k(y)`, `P_k'(y)`, `P_k''(y)` for `k < n`.
fn legendre<R: Real>(n: usize, y: R) -> (Vec<R>, Vec<R>, Vec<R>) {
    let mut p = vec![R::zero(); n.max(2)];
    let mut dp = vec![R::zero(); n.max(2)];
    let mut ddp = vec![R::zero(); n.max(2)];
    p[0] = R::one();
    p[1] = y;
    dp[1] = R::one();
    for k in 1..n.saturating_sub(1) {
        let kf = R::from_usize_lossy(k);
        let two_k1 = R::from_usize_lossy(2 * k + 1);
        p[k + 1] = (two_k1 * y * p[k] - kf * p[k - 1]) / (kf + R::one());
        dp[k + 1] = dp[k - 1] + two_k1 * p[k];
        ddp[k + 1] = ddp[k - 1] + two_k1 * dp[k];
    }
    p.truncate(n);
    dp.truncate(n);
    ddp.truncate(n);
    (p, dp, ddp)
}

/// Bernstein basis of degree `p` on `[0, t_final]` and its time derivative.
pub fn bernstein_basis<R: Real>(p: usize, t_final: R, t: R) -> (Vec<R>, Vec<R>) {
    let s = (t / t_final).max(R::zero()).min(R::one());
    let basis = |deg: usize| -> Vec<R> {
        (0..=deg)
            .map(|i| binomial::<R>(deg, i) * s.powi(i as i32) * (R::one() - s).powi((deg - i) as i32))
            .collect()
    };
    let v = basis(p);
    let mut d = vec![R::zero(); p + 1];
    if p > 0 {
        let lower = basis(p - 1);
        let scale = R::from_usize_lossy(p) / t_final;
        for i in 0..=p {
            let left = if i > 0 { lower[i - 1] } else { R::zero() };
            let right = if i < p { lower[i] } else { R::zero() };
            d[i] = scale * (left - right);
        }
    }
    (v, d)
}

/// `int_0^t phi_i(s) ds` for every Bernstein polynomial of degree `p` on `[0, t_final]`.
pub fn bernstein_antiderivative<R: Real>(p: usize, t_final: R, t: R) -> Vec<R> {
    let (up, _) = bernstein_basis(p + 1, t_final, t);
    let scale = t_final / R::from_usize_lossy(p + 1);
    let mut out = vec![R::zero(); p + 1];
    let mut tail = R::zero();
    for i in (0..=p).rev() {
        tail = tail + up[i + 1];
        out[i] = scale * tail;
    }
    out
}

/// Point values of `H` and its derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet<R> {
    pub h: R,
    pub dt: R,
    pub dx: R,
    pub dxx: R,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TestFunctionRepr<R>", into = "TestFunctionRepr<R>")]
#[serde(bound(serialize = "R: Real + Serialize", deserialize = "R: Real + Deserialize<'de>"))]
pub struct TestFunction<R: Real> {
    basis: SpaceBasis,
    p: usize,
    j: usize,
    t_final: R,
    coeffs: Vec<R>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TestFunctionRepr<R> {
    flavor: Flavor,
    basis: SpaceBasis,
    p: usize,
    #[serde(rename = "J")]
    j: usize,
    t_final: R,
    coefficients: Vec<Vec<R>>,
}

impl<R: Real> TryFrom<TestFunctionRepr<R>> for TestFunction<R> {
    type Error = TestFunctionError;

    fn try_from(r: TestFunctionRepr<R>) -> Result<Self, Self::Error> {
        if r.flavor != r.basis.flavor() {
            return Err(TestFunctionError::Unsupported(format!("flavor does not match basis {:?}", r.basis)));
        }
        if r.coefficients.len() != r.p + 1 {
            return Err(TestFunctionError::Shape { expected: r.p + 1, got: r.coefficients.len() });
        }
        let flat: Vec<R> = r.coefficients.into_iter().flatten().collect();
        TestFunction::from_coefficients(r.basis, r.p, r.j, r.t_final, flat)
    }
}

impl<R: Real> From<TestFunction<R>> for TestFunctionRepr<R> {
    fn from(h: TestFunction<R>) -> Self {
        let ns = h.space_len();
        TestFunctionRepr {
            flavor: h.basis.flavor(),
            basis: h.basis,
            p: h.p,
            j: h.j,
            t_final: h.t_final,
            coefficients: h.coeffs.chunks(ns.max(1)).map(|c| c.to_vec()).collect(),
        }
    }
}

impl<R: Real> TestFunction<R> {
    pub fn zeros(basis: SpaceBasis, p: usize, j: usize, t_final: R) -> Result<Self, TestFunctionError> {
        let n = (p + 1) * basis.len(j);
        Self::from_coefficients(basis, p, j, t_final, vec![R::zero(); n])
    }

    /// Coefficients in row-major order: row `i` holds the spatial
    /// coefficients multiplying the `i`-th Bernstein polynomial.
    pub fn from_coefficients(basis: SpaceBasis, p: usize, j: usize, t_final: R, coeffs: Vec<R>) -> Result<Self, TestFunctionError> {
        if !(t_final > R::zero()) || !t_final.is_finite() {
            return Err(TestFunctionError::Horizon);
        }
        let expected = (p + 1) * basis.len(j);
        if coeffs.len() != expected {
            return Err(TestFunctionError::Shape { expected, got: coeffs.len() });
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(TestFunctionError::NonFinite);
        }
        Ok(Self { basis, p, j, t_final, coeffs })
    }

    /// Time-independent function with the given spatial coefficients.
    pub fn static_space(basis: SpaceBasis, p: usize, j: usize, t_final: R, space: &[R]) -> Result<Self, TestFunctionError> {
        let ns = basis.len(j);
        if space.len() != ns {
            return Err(TestFunctionError::Shape { expected: ns, got: space.len() });
        }
        let coeffs = (0..=p).flat_map(|_| space.iter().copied()).collect();
        Self::from_coefficients(basis, p, j, t_final, coeffs)
    }

    /// `c0 + c1 x` in the Legendre basis.
    pub fn affine(c0: R, c1: R, p: usize, j: usize, t_final: R) -> Result<Self, TestFunctionError> {
        if j < 1 {
            return Err(TestFunctionError::Unsupported("affine functions need J >= 1".into()));
        }
        let half = R::lit(0.5);
        let mut space = vec![R::zero(); SpaceBasis::Legendre.len(j)];
        space[0] = c0 + half * c1;
        space[1] = half * c1;
        Self::static_space(SpaceBasis::Legendre, p, j, t_final, &space)
    }

    pub fn basis(&self) -> SpaceBasis {
        self.basis
    }

    pub fn flavor(&self) -> Flavor {
        self.basis.flavor()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn t_final(&self) -> R {
        self.t_final
    }

    pub fn space_len(&self) -> usize {
        self.basis.len(self.j)
    }

    pub fn coefficients(&self) -> &[R] {
        &self.coeffs
    }

    pub fn coefficient_norm(&self) -> R {
        self.coeffs.iter().map(|c| *c * *c).fold(R::zero(), |a, b| a + b).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == R::zero())
    }

    /// True when every Bernstein row carries the same spatial coefficients.
    pub fn is_time_independent(&self) -> bool {
        let ns = self.space_len();
        self.coeffs.chunks(ns.max(1)).all(|row| row == &self.coeffs[..ns])
    }

    /// Spatial coefficients at time `t` (the Bernstein-weighted row mix).
    pub fn space_coefficients_at(&self, t: R) -> (Vec<R>, Vec<R>) {
        let (phi, dphi) = bernstein_basis(self.p, self.t_final, t);
        let ns = self.space_len();
        let mut c = vec![R::zero(); ns];
        let mut dc = vec![R::zero(); ns];
        for i in 0..=self.p {
            for m in 0..ns {
                c[m] = c[m] + phi[i] * self.coeffs[i * ns + m];
                dc[m] = dc[m] + dphi[i] * self.coeffs[i * ns + m];
            }
        }
        (c, dc)
    }

    pub fn jet(&self, t: R, x: R) -> Jet<R> {
        let (c, dc) = self.space_coefficients_at(t);
        let s = self.basis.eval(self.j, x);
        let dot = |a: &[R], b: &[R]| a.iter().zip(b).map(|(x, y)| *x * *y).fold(R::zero(), |u, v| u + v);
        Jet { h: dot(&c, &s.v), dt: dot(&dc, &s.v), dx: dot(&c, &s.d1), dxx: dot(&c, &s.d2) }
    }

    pub fn value(&self, t: R, x: R) -> R {
        self.jet(t, x).h
    }

    /// Values of `H(t, .)` at each point of `xs`.
    pub fn values_at(&self, t: R, xs: &[R]) -> Vec<R> {
        let (c, _) = self.space_coefficients_at(t);
        xs.iter()
            .map(|&x| {
                let s = self.basis.eval(self.j, x);
                c.iter().zip(&s.v).map(|(a, b)| *a * *b).fold(R::zero(), |u, v| u + v)
            })
            .collect()
    }

    /// Upper bounds on `sup |H|` and `sup |dH/dx|` over `[0, T] x [0, 1]`.
    pub fn sup_bounds(&self) -> (f64, f64) {
        let (vb, db) = self.basis.sup_bounds(self.j);
        let ns = self.space_len();
        let mut best = (0.0f64, 0.0f64);
        for row in self.coeffs.chunks(ns.max(1)) {
            let v: f64 = row.iter().zip(&vb).map(|(c, b)| c.to_f64_lossy().abs() * b).sum();
            let d: f64 = row.iter().zip(&db).map(|(c, b)| c.to_f64_lossy().abs() * b).sum();
            best = (best.0.max(v), best.1.max(d));
        }
        best
    }

    /// Grid estimate of `sup |self - other|` on `[0, T] x [0, 1]`.
    pub fn sup_distance(&self, other: &Self, nt: usize, nx: usize) -> R {
        let mut best = R::zero();
        for a in 0..=nt {
            let t = self.t_final * R::from_usize_lossy(a) / R::from_usize_lossy(nt.max(1));
            for b in 0..=nx {
                let x = R::from_usize_lossy(b) / R::from_usize_lossy(nx.max(1));
                best = best.max((self.value(t, x) - other.value(t, x)).abs());
            }
        }
        best
    }

    pub fn scaled(&self, s: R) -> Self {
        Self { coeffs: self.coeffs.iter().map(|c| *c * s).collect(), ..self.clone() }
    }

    pub fn with_coefficients(&self, coeffs: Vec<R>) -> Result<Self, TestFunctionError> {
        Self::from_coefficients(self.basis, self.p, self.j, self.t_final, coeffs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sample(basis: SpaceBasis) -> TestFunction<f64> {
        let (p, j) = (3, 5);
        let n = (p + 1) * basis.len(j);
        let coeffs = (0..n).map(|k| ((k * 37 % 11) as f64 - 5.0) / 7.0).collect();
        TestFunction::from_coefficients(basis, p, j, 0.7, coeffs).unwrap()
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for basis in [SpaceBasis::Cosine, SpaceBasis::Sine, SpaceBasis::Legendre, SpaceBasis::LegendreBubble] {
            let h = sample(basis);
            let e = 1e-5;
            for &(t, x) in &[(0.1, 0.2), (0.35, 0.5), (0.6, 0.93)] {
                let jet = h.jet(t, x);
                let fdt = (h.value(t + e, x) - h.value(t - e, x)) / (2.0 * e);
                let fdx = (h.value(t, x + e) - h.value(t, x - e)) / (2.0 * e);
                let fdxx = (h.value(t, x + e) - 2.0 * jet.h + h.value(t, x - e)) / (e * e);
                assert_abs_diff_eq!(jet.dt, fdt, epsilon = 1e-6 * (1.0 + fdt.abs()));
                assert_abs_diff_eq!(jet.dx, fdx, epsilon = 1e-6 * (1.0 + fdx.abs()));
                assert_abs_diff_eq!(jet.dxx, fdxx, epsilon = 1e-3 * (1.0 + fdxx.abs()));
            }
        }
    }

    #[test]
    fn zero_boundary_families_vanish_at_ends() {
        for basis in [SpaceBasis::Sine, SpaceBasis::LegendreBubble] {
            let h = sample(basis);
            for &t in &[0.0, 0.3, 0.7] {
                assert!(h.value(t, 0.0).abs() < 1e-14);
                assert!(h.value(t, 1.0).abs() < 1e-14);
            }
        }
        assert_eq!(SpaceBasis::Sine.flavor(), Flavor::ZeroBoundary);
    }

    #[test]
    fn affine_is_exact() {
        let g = TestFunction::affine(0.0, 0.5, 2, 4, 0.3).unwrap();
        for &x in &[0.0, 0.25, 0.8, 1.0] {
            let jet = g.jet(0.17, x);
            assert_abs_diff_eq!(jet.h, 0.5 * x, epsilon = 1e-15);
            assert_abs_diff_eq!(jet.dx, 0.5, epsilon = 1e-14);
            assert_abs_diff_eq!(jet.dxx, 0.0, epsilon = 1e-13);
            assert_abs_diff_eq!(jet.dt, 0.0, epsilon = 1e-14);
        }
        assert!(g.is_time_independent());
    }

    #[test]
    fn sup_bounds_dominate_grid_values() {
        for basis in [SpaceBasis::Cosine, SpaceBasis::Sine, SpaceBasis::Legendre, SpaceBasis::LegendreBubble] {
            let h = sample(basis);
            let (vb, db) = h.sup_bounds();
            for a in 0..=20 {
                for b in 0..=200 {
                    let jet = h.jet(0.7 * a as f64 / 20.0, b as f64 / 200.0);
                    assert!(jet.h.abs() <= vb + 1e-12);
                    assert!(jet.dx.abs() <= db + 1e-12);
                }
            }
        }
    }

    #[test]
    fn bernstein_partition_of_unity() {
        let (v, d) = bernstein_basis(5, 2.0, 0.77);
        assert_abs_diff_eq!(v.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.iter().sum::<f64>(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn antiderivative_matches_quadrature() {
        let (p, tf, t) = (4, 1.5, 0.9);
        let a = bernstein_antiderivative(p, tf, t);
        let m = 2000;
        for i in 0..=p {
            let mut s = 0.0;
            for k in 0..m {
                let u = t * (k as f64 + 0.5) / m as f64;
                s += bernstein_basis(p, tf, u).0[i] * t / m as f64;
            }
            assert_abs_diff_eq!(a[i], s, epsilon = 1e-7);
        }
        let full: f64 = bernstein_antiderivative(p, tf, tf).iter().sum();
        assert_abs_diff_eq!(full, tf, epsilon = 1e-14);
    }

    #[test]
    fn json_round_trip() {
        let h = sample(SpaceBasis::Cosine);
        let s = serde_json::to_string(&h).unwrap();
        assert!(s.contains("\"flavor\":\"free-boundary\""));
        let back: TestFunction<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(h, back);
        let bad = s.replace("free-boundary", "zero-boundary");
        assert!(serde_json::from_str::<TestFunction<f64>>(&bad).is_err());
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(TestFunction::from_coefficients(SpaceBasis::Sine, 1, 2, 1.0, vec![0.0; 3]).is_err());
        assert!(TestFunction::<f64>::zeros(SpaceBasis::Sine, 1, 2, 0.0).is_err());
    }
}
