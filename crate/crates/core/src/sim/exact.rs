//! Exact transient law of small systems by uniformization.

use super::SimError;
use crate::boundary::{RateModel, Side, WindowState};

/// Largest number of sites handled by the dense-state oracle.
pub const MAX_EXACT_SITES: usize = 14;

/// Sparse generator on the `2^(N-1)` configurations (bit `s` = site `s`).
#[derive(Debug, Clone)]
pub struct SparseGenerator {
    pub n: usize,
    row_start: Vec<usize>,
    cols: Vec<u32>,
    rates: Vec<f64>,
    exit: Vec<f64>,
}

fn window_of(state: u32, side: Side, l: usize, sites: usize) -> WindowState {
    let mut m = 0;
    for i in 0..l {
        let s = match side {
            Side::Left => i,
            Side::Right => sites - 1 - i,
        };
        m |= ((state >> s) & 1) << i;
    }
    WindowState::new(m)
}

fn with_window(state: u32, side: Side, l: usize, sites: usize, w: WindowState) -> u32 {
    let mut out = state;
    for i in 0..l {
        let s = match side {
            Side::Left => i,
            Side::Right => sites - 1 - i,
        };
        out = (out & !(1 << s)) | ((w.occupied(i) as u32) << s);
    }
    out
}

impl SparseGenerator {
    pub fn new(model: &RateModel<f64>, n: usize) -> Result<Self, SimError> {
        let sites = n.saturating_sub(1);
        if sites > MAX_EXACT_SITES {
            return Err(SimError::Invalid(format!("{sites} sites exceed the exact-law limit {MAX_EXACT_SITES}")));
        }
        let l = model.l();
        if sites < 2 * l + 1 {
            return Err(SimError::Invalid("lattice too small for the windows".into()));
        }
        let nf = n as f64;
        let dim = 1usize << sites;
        let mut row_start = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut rates = Vec::new();
        let mut exit = Vec::with_capacity(dim);
        for state in 0..dim as u32 {
            row_start.push(cols.len());
            let mut out = 0.0;
            for b in 0..sites - 1 {
                if (state >> b & 1) != (state >> (b + 1) & 1) {
                    cols.push(state ^ (0b11 << b));
                    rates.push(nf * nf);
                    out += nf * nf;
                }
            }
            for side in Side::BOTH {
                let w = window_of(state, side, l, sites);
                for (xi, r) in model.table(side).transitions(w) {
                    cols.push(with_window(state, side, l, sites, xi));
                    rates.push(nf * r);
                    out += nf * r;
                }
            }
            exit.push(out);
        }
        row_start.push(cols.len());
        Ok(Self { n, row_start, cols, rates, exit })
    }

    pub fn dim(&self) -> usize {
        self.exit.len()
    }

    /// Sum of row `i` including the diagonal `-exit`.
    pub fn row_sum(&self, i: usize) -> f64 {
        self.rates[self.row_start[i]..self.row_start[i + 1]].iter().sum::<f64>() - self.exit[i]
    }

    pub fn max_exit(&self) -> f64 {
        self.exit.iter().fold(0.0f64, |a, &b| a.max(b))
    }

    /// `mu exp(tQ)` by uniformization with rate `rate_factor * max_exit`,
    /// truncated once the Poisson tail is below `tol`.
    pub fn transient(&self, mu: &[f64], t: f64, rate_factor: f64, tol: f64) -> Result<Vec<f64>, SimError> {
        if !(rate_factor >= 1.0) {
            return Err(SimError::Invalid("uniformization rate factor must be >= 1".into()));
        }
        let lambda = self.max_exit() * rate_factor;
        if t == 0.0 || lambda == 0.0 {
            return Ok(mu.to_vec());
        }
        let lt = lambda * t;
        let mut v = mu.to_vec();
        let mut next = vec![0.0; v.len()];
        let mut out = vec![0.0; v.len()];
        let mut log_fact = 0.0;
        let mut cum = 0.0;
        let mut k = 0usize;
        loop {
            let w = (-lt + k as f64 * lt.ln() - log_fact).exp();
            for (o, x) in out.iter_mut().zip(&v) {
                *o += w * x;
            }
            cum += w;
            if k as f64 > lt && (1.0 - cum < tol || w < tol * 1e-6) {
                break;
            }
            if k > 100_000 + (20.0 * lt) as usize {
                return Err(SimError::Internal("uniformization did not converge".into()));
            }
            // next = v P with P = I + Q / lambda
            for (i, x) in v.iter().enumerate() {
                next[i] += x * (1.0 - self.exit[i] / lambda);
                for p in self.row_start[i]..self.row_start[i + 1] {
                    next[self.cols[p] as usize] += x * self.rates[p] / lambda;
                }
            }
            std::mem::swap(&mut v, &mut next);
            next.iter_mut().for_each(|x| *x = 0.0);
            k += 1;
            log_fact += (k as f64).ln();
        }
        Ok(out)
    }
}

/// Product Bernoulli law with densities `gamma(s / N)`.
pub fn product_law(gamma: &dyn Fn(f64) -> f64, n: usize) -> Result<Vec<f64>, SimError> {
    let sites = n - 1;
    let p: Vec<f64> = (1..n).map(|s| gamma(s as f64 / n as f64)).collect();
    if p.iter().any(|q| !(0.0..=1.0).contains(q)) {
        return Err(SimError::Invalid("initial density outside [0, 1]".into()));
    }
    Ok((0..1u32 << sites)
        .map(|state| (0..sites).map(|s| if state >> s & 1 == 1 { p[s] } else { 1.0 - p[s] }).product())
        .collect())
}

/// `E <pi, h>` under `law`.
pub fn law_expectation(law: &[f64], n: usize, h: &dyn Fn(f64) -> f64) -> f64 {
    let sites = n - 1;
    let hv: Vec<f64> = (1..n).map(|s| h(s as f64 / n as f64)).collect();
    law.iter()
        .enumerate()
        .map(|(state, p)| {
            let pair: f64 = (0..sites).filter(|&s| state >> s & 1 == 1).map(|s| hv[s]).sum();
            p * pair / sites as f64
        })
        .sum()
}

/// `E <pi_T, H>` for the untilted process started from product Bernoulli(`gamma`).
pub fn exact_law_small_n(model: &RateModel<f64>, n: usize, gamma: &dyn Fn(f64) -> f64, t: f64, h: &dyn Fn(f64) -> f64) -> Result<f64, SimError> {
    let g = SparseGenerator::new(model, n)?;
    let mu = product_law(gamma, n)?;
    let law = g.transient(&mu, t, 1.0, 1e-12)?;
    Ok(law_expectation(&law, n, h))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l3() -> RateModel<f64> {
        RateModel::l3(1.0, 2.0, None).unwrap().0
    }

    #[test]
    fn generator_rows_sum_to_zero() {
        let g = SparseGenerator::new(&l3(), 8).unwrap();
        for i in 0..g.dim() {
            assert!(g.row_sum(i).abs() < 1e-9);
        }
    }

    #[test]
    fn time_zero_is_initial_pairing() {
        let gamma = |x: f64| 0.2 + 0.5 * x;
        let h = |x: f64| (std::f64::consts::PI * x).cos();
        let v = exact_law_small_n(&l3(), 8, &gamma, 0.0, &h).unwrap();
        let direct: f64 = (1..8).map(|s| gamma(s as f64 / 8.0) * h(s as f64 / 8.0)).sum::<f64>() / 7.0;
        assert!((v - direct).abs() < 1e-14);
    }

    #[test]
    fn step_sizes_agree() {
        let g = SparseGenerator::new(&l3(), 8).unwrap();
        let mu = product_law(&|x| 0.5 + 0.3 * (std::f64::consts::PI * x).cos(), 8).unwrap();
        let a = g.transient(&mu, 0.2, 1.0, 1e-12).unwrap();
        let b = g.transient(&mu, 0.2, 1.7, 1e-12).unwrap();
        let h = |x: f64| x;
        assert!((law_expectation(&a, 8, &h) - law_expectation(&b, 8, &h)).abs() < 1e-8);
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_large_systems() {
        assert!(SparseGenerator::new(&l3(), 16).is_err());
    }
}
