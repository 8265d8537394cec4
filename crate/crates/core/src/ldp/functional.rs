use super::{LdpError, LdpOptions, PathDensity};
use crate::boundary::{BoundaryMoments, RateModel, Side};
use crate::numerics::cholesky_solve;
use crate::scalar::{mobility, Real};
use crate::testfn::{bernstein_antiderivative, bernstein_basis, Flavor, SpaceBasis, TestFunction};

/// Tensor basis `phi_i(t_k) psi_m(x_i)` sampled on a path grid.
pub(crate) struct Tensor<R> {
    pub basis: SpaceBasis,
    pub p: usize,
    pub ns: usize,
    pub phi: Vec<Vec<R>>,
    /// `int phi_i'(t) hat_k(t) dt` with the piecewise-linear hat of frame `k`.
    pub hat_dphi: Vec<Vec<R>>,
    pub psi: Vec<Vec<R>>,
    pub dpsi: Vec<Vec<R>>,
    pub wx: Vec<R>,
    pub wt: Vec<R>,
}

impl<R: Real> Tensor<R> {
    pub fn new(path: &PathDensity<R>, basis: SpaceBasis, p: usize, j: usize) -> Result<Self, LdpError> {
        let ns = basis.len(j);
        if ns == 0 {
            return Err(LdpError::Basis(format!("empty spatial basis {basis:?} with J = {j}")));
        }
        let (phi, _): (Vec<Vec<R>>, Vec<Vec<R>>) = (0..path.frames()).map(|k| bernstein_basis(p, path.t_final(), path.time(k))).unzip();
        let prim: Vec<Vec<R>> = (0..path.frames()).map(|k| bernstein_antiderivative(p, path.t_final(), path.time(k))).collect();
        let last = path.frames() - 1;
        let mut hat_dphi = vec![vec![R::zero(); p + 1]; path.frames()];
        for k in 0..path.frames() {
            for i in 0..=p {
                // Integration by parts against the hat function.
                let mut v = R::zero();
                if k == 0 {
                    v = v - phi[0][i];
                }
                if k == last {
                    v = v + phi[last][i];
                }
                if k > 0 {
                    v = v - (prim[k][i] - prim[k - 1][i]) / (path.time(k) - path.time(k - 1));
                }
                if k < last {
                    v = v + (prim[k + 1][i] - prim[k][i]) / (path.time(k + 1) - path.time(k));
                }
                hat_dphi[k][i] = v;
            }
        }
        let (psi, dpsi) = (0..=path.n())
            .map(|i| {
                let s = basis.eval(j, path.node(i));
                (s.v, s.d1)
            })
            .unzip();
        Ok(Self { basis, p, ns, phi, hat_dphi, psi, dpsi, wx: path.space_weights(), wt: path.time_weights() })
    }

    pub fn nb(&self) -> usize {
        (self.p + 1) * self.ns
    }

    /// `int f psi_m` (or `psi_m'`) by the trapezoidal rule.
    pub fn project(&self, f: &[R], derivative: bool) -> Vec<R> {
        let table = if derivative { &self.dpsi } else { &self.psi };
        let mut out = vec![R::zero(); self.ns];
        for (i, row) in table.iter().enumerate() {
            let wf = self.wx[i] * f[i];
            for (o, v) in out.iter_mut().zip(row) {
                *o = *o + wf * *v;
            }
        }
        out
    }

    /// `int q psi_m psi_n` (or with derivatives) by the trapezoidal rule.
    pub fn gram(&self, q: &[R], derivative: bool) -> Vec<R> {
        let table = if derivative { &self.dpsi } else { &self.psi };
        let ns = self.ns;
        let mut s = vec![R::zero(); ns * ns];
        for (i, row) in table.iter().enumerate() {
            let wq = self.wx[i] * q[i];
            for m in 0..ns {
                let a = wq * row[m];
                for n in m..ns {
                    s[m * ns + n] = s[m * ns + n] + a * row[n];
                }
            }
        }
        for m in 0..ns {
            for n in 0..m {
                s[m * ns + n] = s[n * ns + m];
            }
        }
        s
    }

    /// Adds `w phi_i phi_j s[m, n]` at frame `k` to the full matrix.
    pub fn add_kron(&self, target: &mut [R], k: usize, w: R, s: &[R]) {
        let ns = self.ns;
        let nb = self.nb();
        let phi = &self.phi[k];
        for i in 0..=self.p {
            for jj in 0..=self.p {
                let f = w * phi[i] * phi[jj];
                if f == R::zero() {
                    continue;
                }
                for m in 0..ns {
                    let row = (i * ns + m) * nb + jj * ns;
                    for n in 0..ns {
                        target[row + n] = target[row + n] + f * s[m * ns + n];
                    }
                }
            }
        }
    }

    /// Adds `w phi_i(t_k) v[m]` to a coefficient vector.
    pub fn add_outer(&self, target: &mut [R], phi: &[R], w: R, v: &[R]) {
        for i in 0..=self.p {
            let f = w * phi[i];
            for m in 0..self.ns {
                target[i * self.ns + m] = target[i * self.ns + m] + f * v[m];
            }
        }
    }

    /// `phi_i(t_k) psi_m(x)` at a boundary node.
    pub fn boundary_vector(&self, k: usize, node: usize) -> Vec<R> {
        let mut v = vec![R::zero(); self.nb()];
        self.add_outer(&mut v, &self.phi[k].clone(), R::one(), &self.psi[node].clone());
        v
    }

    /// `sum_k w_k phi phi^T (x) int sigma(rho_k) psi' psi'`.
    pub fn energy_matrix(&self, path: &PathDensity<R>, derivative: bool) -> Vec<R> {
        let nb = self.nb();
        let mut a = vec![R::zero(); nb * nb];
        for k in 0..path.frames() {
            let sigma: Vec<R> = path.rho(k).iter().map(|r| mobility(*r)).collect();
            let s = self.gram(&sigma, derivative);
            self.add_kron(&mut a, k, self.wt[k], &s);
        }
        a
    }
}

pub(crate) fn dot<R: Real>(a: &[R], b: &[R]) -> R {
    a.iter().zip(b).fold(R::zero(), |acc, (x, y)| acc + *x * *y)
}

fn quad_form<R: Real>(a: &[R], c: &[R]) -> R {
    let n = c.len();
    let mut acc = R::zero();
    for i in 0..n {
        acc = acc + c[i] * dot(&a[i * n..(i + 1) * n], c);
    }
    acc
}

/// `int <rho, dH/dt>` is integrated exactly against the piecewise-linear
/// interpolant of the path in time, so constant paths give `l = 0` exactly.
///
/// `J(c) = l.c - c^T A c - sum_k w_k [b-(rho_k(0), v0_k.c) + b+(rho_k(1), v1_k.c)]`.
struct JDesign<R: Real> {
    ell: Vec<R>,
    a: Vec<R>,
    wt: Vec<R>,
    v0: Vec<Vec<R>>,
    v1: Vec<Vec<R>>,
    rho0: Vec<R>,
    rho1: Vec<R>,
    moments: BoundaryMoments<R>,
    boundary: bool,
}

impl<R: Real> JDesign<R> {
    fn new(path: &PathDensity<R>, tensor: &Tensor<R>, model: &RateModel<R>) -> Self {
        let nb = tensor.nb();
        let last = path.frames() - 1;
        let mut ell = vec![R::zero(); nb];
        let end = tensor.project(path.rho(last), false);
        tensor.add_outer(&mut ell, &tensor.phi[last], R::one(), &end);
        let start = tensor.project(path.rho(0), false);
        tensor.add_outer(&mut ell, &tensor.phi[0], -R::one(), &start);
        for k in 0..path.frames() {
            let pr = tensor.project(path.rho(k), false);
            tensor.add_outer(&mut ell, &tensor.hat_dphi[k], -R::one(), &pr);
            let pg = tensor.project(path.dx_rho(k), true);
            tensor.add_outer(&mut ell, &tensor.phi[k], tensor.wt[k], &pg);
        }
        let boundary = tensor.basis.flavor() == Flavor::FreeBoundary;
        let (v0, v1) = if boundary {
            ((0..path.frames()).map(|k| tensor.boundary_vector(k, 0)).collect(), (0..path.frames()).map(|k| tensor.boundary_vector(k, path.n())).collect())
        } else {
            (Vec::new(), Vec::new())
        };
        Self {
            ell,
            a: tensor.energy_matrix(path, true),
            wt: tensor.wt.clone(),
            v0,
            v1,
            rho0: (0..path.frames()).map(|k| path.rho(k)[0]).collect(),
            rho1: (0..path.frames()).map(|k| path.rho(k)[path.n()]).collect(),
            moments: BoundaryMoments::new(model),
            boundary,
        }
    }

    fn value(&self, c: &[R]) -> Result<R, LdpError> {
        let mut v = dot(&self.ell, c) - quad_form(&self.a, c);
        if self.boundary {
            for k in 0..self.wt.len() {
                let b = self.moments.bfrak(Side::Left, self.rho0[k], dot(&self.v0[k], c))?
                    + self.moments.bfrak(Side::Right, self.rho1[k], dot(&self.v1[k], c))?;
                v = v - self.wt[k] * b;
            }
        }
        Ok(v)
    }

    /// Gradient and negated Hessian.
    fn derivatives(&self, c: &[R]) -> Result<(Vec<R>, Vec<R>), LdpError> {
        let nb = c.len();
        let mut g = self.ell.clone();
        let mut h = vec![R::zero(); nb * nb];
        for r in 0..nb {
            let row = &self.a[r * nb..(r + 1) * nb];
            g[r] = g[r] - R::lit(2.0) * dot(row, c);
            for (hv, av) in h[r * nb..(r + 1) * nb].iter_mut().zip(row) {
                *hv = R::lit(2.0) * *av;
            }
        }
        if self.boundary {
            for k in 0..self.wt.len() {
                for (side, v, rho) in [(Side::Left, &self.v0[k], self.rho0[k]), (Side::Right, &self.v1[k], self.rho1[k])] {
                    let m = dot(v, c);
                    let d1 = self.wt[k] * self.moments.bfrak_dm(side, rho, m)?;
                    let d2 = self.wt[k] * self.moments.bfrak_d2m(side, rho, m)?;
                    for r in 0..nb {
                        if v[r] == R::zero() {
                            continue;
                        }
                        g[r] = g[r] - d1 * v[r];
                        let f = d2 * v[r];
                        for s in 0..nb {
                            h[r * nb + s] = h[r * nb + s] + f * v[s];
                        }
                    }
                }
            }
        }
        Ok((g, h))
    }
}

fn inf_norm<R: Real>(v: &[R]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.to_f64_lossy().abs()))
}

struct Optimum<R> {
    value: R,
    c: Vec<R>,
    iterations: usize,
    grad_norm: f64,
}

/// Damped Newton ascent from zero with Armijo halving.
fn maximize<R: Real>(design: &JDesign<R>, opts: &LdpOptions) -> Result<Optimum<R>, LdpError> {
    let nb = design.ell.len();
    let mut c = vec![R::zero(); nb];
    let mut f = design.value(&c)?;
    let ridge = R::lit(opts.ridge);
    let mut grad_norm = f64::INFINITY;
    let mut polish = 0;
    for it in 0..opts.max_iter {
        let (g, mut h) = design.derivatives(&c)?;
        grad_norm = inf_norm(&g);
        if grad_norm <= opts.grad_tol {
            return Ok(Optimum { value: f, c, iterations: it, grad_norm });
        }
        for r in 0..nb {
            h[r * nb + r] = h[r * nb + r] + ridge;
        }
        let d = cholesky_solve(&h, &g).ok_or(LdpError::Singular)?;
        let slope = dot(&g, &d);
        if slope.to_f64_lossy() <= 1e-12 * (1.0 + f.to_f64_lossy().abs()) {
            // The predicted gain is below what the objective resolves: take
            // full steps and stop once they no longer help.
            let trial: Vec<R> = c.iter().zip(&d).map(|(a, b)| *a + *b).collect();
            f = design.value(&trial)?;
            c = trial;
            polish += 1;
            if polish > 2 {
                let (g, _) = design.derivatives(&c)?;
                return Ok(Optimum { value: f, c, iterations: it + 1, grad_norm: grad_norm.min(inf_norm(&g)) });
            }
            continue;
        }
        let mut s = R::one();
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<R> = c.iter().zip(&d).map(|(a, b)| *a + s * *b).collect();
            // Steps past the exponent cap count as rejected.
            if let Ok(ft) = design.value(&trial) {
                if ft >= f + R::lit(1e-4) * s * slope {
                    c = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
            }
            s = s * R::lit(0.5);
        }
        if !accepted {
            break;
        }
    }
    let (g, _) = design.derivatives(&c)?;
    grad_norm = grad_norm.min(inf_norm(&g));
    if grad_norm <= opts.grad_tol {
        return Ok(Optimum { value: f, c, iterations: opts.max_iter, grad_norm });
    }
    Err(LdpError::NonConvergence {
        iterations: opts.max_iter,
        grad_norm,
        value: f.to_f64_lossy(),
        last: c.iter().map(|v| v.to_f64_lossy()).collect(),
    })
}

fn check_horizon<R: Real>(path: &PathDensity<R>, h: &TestFunction<R>) -> Result<(), LdpError> {
    let (a, b) = (path.t_final().to_f64_lossy(), h.t_final().to_f64_lossy());
    if (a - b).abs() > 1e-12 * a.abs().max(1.0) {
        return Err(LdpError::Horizon { path: a, test: b });
    }
    Ok(())
}

/// `J(H)` by trapezoidal quadrature on the path grid.
pub fn eval_j<R: Real>(path: &PathDensity<R>, h: &TestFunction<R>, model: &RateModel<R>, gamma: &dyn Fn(R) -> R) -> Result<R, LdpError> {
    path.check_initial(gamma)?;
    check_horizon(path, h)?;
    if h.flavor() == Flavor::FreeBoundary {
        path.require_interior()?;
    }
    let tensor = Tensor::new(path, h.basis(), h.p(), h.j())?;
    JDesign::new(path, &tensor, model).value(h.coefficients())
}

/// Maximum of `J` over the free-boundary basis and its maximiser.
#[derive(Debug, Clone, PartialEq)]
pub struct IResult<R: Real> {
    pub value: R,
    pub argmax: TestFunction<R>,
    pub iterations: usize,
    pub grad_norm: f64,
}

pub fn eval_i<R: Real>(path: &PathDensity<R>, model: &RateModel<R>, gamma: &dyn Fn(R) -> R, opts: &LdpOptions) -> Result<IResult<R>, LdpError> {
    path.check_initial(gamma)?;
    path.require_interior()?;
    if opts.free_basis.flavor() != Flavor::FreeBoundary {
        return Err(LdpError::Basis(format!("{:?} constrains boundary values", opts.free_basis)));
    }
    let tensor = Tensor::new(path, opts.free_basis, opts.p, opts.j)?;
    let design = JDesign::new(path, &tensor, model);
    let opt = maximize(&design, opts)?;
    let argmax = TestFunction::from_coefficients(opts.free_basis, opts.p, opts.j, path.t_final(), opt.c)?;
    Ok(IResult { value: opt.value, argmax, iterations: opt.iterations, grad_norm: opt.grad_norm })
}

/// `max_c l.c - c^T A c = l^T A^{-1} l / 4` with a ridge on `A`.
pub(crate) fn quadratic_max<R: Real>(mut a: Vec<R>, ell: &[R], ridge: R) -> Result<(R, Vec<R>), LdpError> {
    let nb = ell.len();
    for r in 0..nb {
        a[r * nb + r] = a[r * nb + r] + ridge;
    }
    let x = cholesky_solve(&a, ell).ok_or(LdpError::Singular)?;
    let value = R::lit(0.25) * dot(ell, &x);
    Ok((value, x.into_iter().map(|v| v * R::lit(0.5)).collect()))
}

/// Energy by maximising `int int rho dH/dx - 1/2 int int sigma(rho) H^2`
/// over zero-boundary `H`.
pub fn eval_q<R: Real>(path: &PathDensity<R>, opts: &LdpOptions) -> Result<R, LdpError> {
    if opts.zero_basis.flavor() != Flavor::ZeroBoundary {
        return Err(LdpError::Basis(format!("{:?} does not vanish at the boundary", opts.zero_basis)));
    }
    let tensor = Tensor::new(path, opts.zero_basis, opts.p, opts.j)?;
    // `int rho H' = -int rho' H` for zero-boundary `H`; the right side is
    // far less sensitive to quadrature error in high spatial modes.
    let mut ell = vec![R::zero(); tensor.nb()];
    for k in 0..path.frames() {
        let pr = tensor.project(path.dx_rho(k), false);
        tensor.add_outer(&mut ell, &tensor.phi[k], -tensor.wt[k], &pr);
    }
    // With the weight 1/2 the maximum is l^T B^{-1} l / 2 = quadratic_max(B / 2).
    let b: Vec<R> = tensor.energy_matrix(path, false).into_iter().map(|v| v * R::lit(0.5)).collect();
    Ok(quadratic_max(b, &ell, R::lit(opts.ridge))?.0)
}

/// `1/2 int int (d rho/dx)^2 / sigma(rho)`.
pub fn closed_form_q<R: Real>(path: &PathDensity<R>) -> Result<R, LdpError> {
    path.require_interior()?;
    let wx = path.space_weights();
    let wt = path.time_weights();
    let mut total = R::zero();
    for k in 0..path.frames() {
        let inner = path
            .dx_rho(k)
            .iter()
            .zip(path.rho(k))
            .zip(&wx)
            .fold(R::zero(), |acc, ((g, r), w)| acc + *w * *g * *g / mobility(*r));
        total = total + wt[k] * inner;
    }
    Ok(R::lit(0.5) * total)
}
