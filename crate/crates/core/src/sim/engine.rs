use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::configuration::{sample_initial, Configuration};
use super::rng::replica_rng;
use super::SimError;
use crate::boundary::{validate_irreducibility, RateModel, Side, WindowState, EXPONENT_CAP};
use crate::scalar::KahanSum;
use crate::testfn::{bernstein_antiderivative, bernstein_basis, TestFunction};

/// Run parameters for one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub t_final: f64,
    pub sample_times: Vec<f64>,
    pub tilt: Option<TestFunction<f64>>,
    pub observables: Vec<TestFunction<f64>>,
    /// Track `int (d/ds + L_N) <pi_s, H_s> ds` for every observable.
    pub accumulate: bool,
    pub snapshots: bool,
}

impl SimConfig {
    pub fn new(n: usize, t_final: f64) -> Self {
        Self {
            n,
            t_final,
            sample_times: vec![0.0, t_final],
            tilt: None,
            observables: Vec::new(),
            accumulate: false,
            snapshots: false,
        }
    }

    pub fn validate(&self, l: usize) -> Result<(), SimError> {
        if self.n < 2 * l + 2 {
            return Err(SimError::Invalid(format!("N - 1 = {} sites cannot hold two disjoint windows of size {l} and a bulk site", self.n.saturating_sub(1))));
        }
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(SimError::Invalid("T must be finite and nonnegative".into()));
        }
        if self.sample_times.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(SimError::Invalid("sample times must be sorted".into()));
        }
        if self.sample_times.iter().any(|&s| !(0.0..=self.t_final).contains(&s)) {
            return Err(SimError::Invalid("sample times must lie in [0, T]".into()));
        }
        for h in self.observables.iter().chain(self.tilt.iter()) {
            if !h.is_time_independent() && h.t_final() < self.t_final {
                return Err(SimError::Invalid("time-dependent test functions must cover [0, T]".into()));
            }
        }
        if let Some(g) = &self.tilt {
            let (gsup, _) = g.sup_bounds();
            if gsup * l as f64 > EXPONENT_CAP {
                return Err(SimError::Invalid(format!("tilt bound |G| l = {} exceeds the exponent cap {EXPONENT_CAP}", gsup * l as f64)));
            }
            if self.accumulate && !g.is_time_independent() {
                return Err(SimError::Unsupported("generator integrals under a time-dependent tilt".into()));
            }
        }
        Ok(())
    }
}

/// A single transition of the process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Event {
    /// Exchange across the bond between sites `bond` and `bond + 1` (0-based).
    Swap { bond: usize },
    Boundary { side: Side, to: WindowState },
}

pub fn apply_event(conf: &mut Configuration, l: usize, event: Event) {
    match event {
        Event::Swap { bond } => conf.swap(bond),
        Event::Boundary { side, to } => conf.set_window(side, l, to),
    }
}

/// `(1/(N-1)) sum_x eta(x) H(t, x)`.
pub fn empirical_pair(conf: &Configuration, h: &TestFunction<f64>, t: f64) -> f64 {
    let n = conf.n() as f64;
    let xs: Vec<f64> = (1..conf.n()).map(|s| s as f64 / n).collect();
    let vals = h.values_at(t, &xs);
    let acc: KahanSum = conf.occupancy().iter().zip(&vals).map(|(&o, v)| if o == 1 { *v } else { 0.0 }).collect();
    acc.value() / (conf.n() - 1) as f64
}

fn tilt_exponent(conf: &Configuration, l: usize, event: Event, g: &TestFunction<f64>, t: f64) -> f64 {
    let n = conf.n() as f64;
    let scale = n / (n - 1.0);
    let gx = |s: usize| g.value(t, (s + 1) as f64 / n);
    match event {
        Event::Swap { bond } => {
            let occ = conf.occupancy();
            let d = occ[bond] as f64 - occ[bond + 1] as f64;
            scale * d * (gx(bond + 1) - gx(bond))
        }
        Event::Boundary { side, to } => {
            let from = conf.window(side, l);
            (0..l)
                .map(|i| {
                    let d = to.occupied(i) as i32 - from.occupied(i) as i32;
                    scale * d as f64 * gx(conf.window_site(side, i))
                })
                .sum()
        }
    }
}

/// Every effective transition out of `conf` with its rate.
pub fn event_catalog(conf: &Configuration, model: &RateModel<f64>, tilt: Option<(&TestFunction<f64>, f64)>) -> Vec<(Event, f64)> {
    let n = conf.n() as f64;
    let l = model.l();
    let mut bonds: Vec<usize> = conf.discrepancies().iter().map(|b| b as usize).collect();
    bonds.sort_unstable();
    let mut out: Vec<(Event, f64)> = bonds.into_iter().map(|bond| (Event::Swap { bond }, n * n)).collect();
    for side in Side::BOTH {
        let w = conf.window(side, l);
        for (to, r) in model.table(side).transitions(w) {
            out.push((Event::Boundary { side, to }, n * r));
        }
    }
    if let Some((g, t)) = tilt {
        for (e, r) in out.iter_mut() {
            *r *= tilt_exponent(conf, l, *e, g, t).exp();
        }
    }
    out
}

/// Direct-method draw from a catalog: `(index, waiting time)`.
pub fn gillespie_step<G: Rng + ?Sized>(catalog: &[(Event, f64)], rng: &mut G) -> Result<(usize, f64), SimError> {
    let total: f64 = catalog.iter().map(|(_, r)| r).sum();
    if !(total > 0.0) {
        return Err(SimError::Absorbing);
    }
    let wait = exp_draw(rng) / total;
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, (_, r)) in catalog.iter().enumerate() {
        acc += r;
        if target < acc {
            return Ok((i, wait));
        }
    }
    Ok((catalog.len() - 1, wait))
}

#[inline]
fn exp_draw<G: Rng + ?Sized>(rng: &mut G) -> f64 {
    -(1.0 - rng.random::<f64>()).ln()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounters {
    pub bulk: u64,
    pub left: u64,
    pub right: u64,
    /// Thinning candidates that were not executed.
    pub rejected: u64,
}

impl EventCounters {
    pub fn total(&self) -> u64 {
        self.bulk + self.left + self.right
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct RunStats {
    pub wall_seconds: f64,
    pub events_per_second: f64,
}

/// Output of one trajectory. Equality ignores the wall-clock statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub n: usize,
    pub t_final: f64,
    pub sample_times: Vec<f64>,
    /// `values[k][j]` is `<pi_{t_k}, H^j_{t_k}>`.
    pub values: Vec<Vec<f64>>,
    pub snapshots: Option<Vec<String>>,
    pub counters: EventCounters,
    pub initial_values: Vec<f64>,
    pub final_values: Vec<f64>,
    /// `int_0^T L_N <pi_s, H_s> ds` per observable.
    pub generator_integrals: Option<Vec<f64>>,
    /// `int_0^T <pi_s, d_s H_s> ds` per observable.
    pub time_integrals: Option<Vec<f64>>,
    pub stats: RunStats,
}

impl PartialEq for TrajectoryRecord {
    fn eq(&self, o: &Self) -> bool {
        self.n == o.n
            && self.t_final == o.t_final
            && self.sample_times == o.sample_times
            && self.values == o.values
            && self.snapshots == o.snapshots
            && self.counters == o.counters
            && self.initial_values == o.initial_values
            && self.final_values == o.final_values
            && self.generator_integrals == o.generator_integrals
            && self.time_integrals == o.time_integrals
    }
}

/// Dynkin martingale `M^H_N(T)` for observable `index`.
pub fn dynkin_residual(traj: &TrajectoryRecord, index: usize) -> Result<f64, SimError> {
    let gen = traj.generator_integrals.as_ref().ok_or(SimError::MissingAccumulator(index))?;
    let dt = traj.time_integrals.as_ref().ok_or(SimError::MissingAccumulator(index))?;
    if index >= gen.len() {
        return Err(SimError::MissingAccumulator(index));
    }
    Ok(traj.final_values[index] - traj.initial_values[index] - dt[index] - gen[index])
}

struct Row {
    to: Vec<u32>,
    cum: Vec<f64>,
    total: f64,
}

impl Row {
    #[inline]
    fn pick(&self, u: f64) -> WindowState {
        let target = u * self.total;
        let i = self.cum.partition_point(|&c| c <= target).min(self.to.len() - 1);
        WindowState::new(self.to[i])
    }
}

fn build_rows(model: &RateModel<f64>, side: Side, weight: impl Fn(WindowState, WindowState, f64) -> f64) -> Vec<Row> {
    let t = model.table(side);
    WindowState::all(model.l())
        .map(|w| {
            let mut to = Vec::new();
            let mut cum = Vec::new();
            let mut acc = 0.0;
            for (xi, r) in t.transitions(w) {
                acc += weight(w, xi, *r);
                to.push(xi.mask);
                cum.push(acc);
            }
            Row { to, cum, total: acc }
        })
        .collect()
}

enum Tilt {
    None,
    /// Time-independent `G`: exact per-bond multipliers.
    Static { m_right: Vec<f64>, m_left: Vec<f64>, m_max: f64 },
    /// Time-dependent `G`: thinning against sup-norm bounds.
    Dynamic { g: TestFunction<f64>, psi: Vec<f64>, ns: usize, m_max: f64, gsup: f64 },
}

struct Term {
    h: Vec<f64>,
    dh: Vec<f64>,
    bnd: [Vec<f64>; 2],
    bulk: f64,
    s: f64,
}

struct Tracker {
    terms: Vec<Term>,
    time: Option<(usize, f64)>,
    gen: KahanSum,
    dt: KahanSum,
    phi: Vec<f64>,
    big_phi: Vec<f64>,
}

struct Engine {
    l: usize,
    n: usize,
    conf: Configuration,
    rows: [Vec<Row>; 2],
    tilt: Tilt,
    n2: f64,
    wl: usize,
    wr: usize,
    trackers: Vec<Tracker>,
}

impl Engine {
    fn new(cfg: &SimConfig, model: &RateModel<f64>, conf: Configuration) -> Result<Self, SimError> {
        let l = model.l();
        let n = cfg.n;
        let nf = n as f64;
        let scale = nf / (nf - 1.0);
        let sites = n - 1;
        let x = |s: usize| (s + 1) as f64 / nf;
        let tilt = match &cfg.tilt {
            Some(g) if !g.is_zero() && g.is_time_independent() => {
                let gv = g.values_at(0.0, &(0..sites).map(x).collect::<Vec<_>>());
                let m_right: Vec<f64> = (0..sites - 1).map(|b| (scale * (gv[b + 1] - gv[b])).exp()).collect();
                let m_left: Vec<f64> = m_right.iter().map(|m| 1.0 / m).collect();
                let m_max = m_right.iter().chain(&m_left).fold(1.0f64, |a, &b| a.max(b));
                Tilt::Static { m_right, m_left, m_max }
            }
            Some(g) if !g.is_zero() => {
                let (gsup, dsup) = g.sup_bounds();
                let ns = g.space_len();
                let mut psi = Vec::with_capacity(sites * ns);
                for s in 0..sites {
                    psi.extend(g.basis().eval(g.j(), x(s)).v);
                }
                Tilt::Dynamic { g: g.clone(), psi, ns, m_max: (dsup / (nf - 1.0)).exp(), gsup }
            }
            _ => Tilt::None,
        };
        let rows = Side::BOTH.map(|side| {
            let site = |i: usize| match side {
                Side::Left => i,
                Side::Right => sites - 1 - i,
            };
            match &tilt {
                Tilt::Static { .. } => {
                    let g = cfg.tilt.as_ref().expect("static tilt");
                    build_rows(model, side, |w, xi, r| {
                        let e: f64 = (0..l)
                            .map(|i| (xi.occupied(i) as i32 - w.occupied(i) as i32) as f64 * g.value(0.0, x(site(i))))
                            .sum();
                        nf * r * (scale * e).exp()
                    })
                }
                Tilt::Dynamic { gsup, .. } => {
                    build_rows(model, side, |w, xi, r| nf * r * (scale * gsup * (w.mask ^ xi.mask).count_ones() as f64).exp())
                }
                Tilt::None => build_rows(model, side, |_, _, r| nf * r),
            }
        });
        let wl = conf.window(Side::Left, l).mask as usize;
        let wr = conf.window(Side::Right, l).mask as usize;
        let mut e = Self { l, n, conf, rows, tilt, n2: nf * nf, wl, wr, trackers: Vec::new() };
        if cfg.accumulate {
            e.trackers = cfg.observables.iter().map(|h| e.build_tracker(h)).collect();
            e.refresh_trackers();
        }
        Ok(e)
    }

    fn sites(&self) -> usize {
        self.n - 1
    }

    fn build_tracker(&self, h: &TestFunction<f64>) -> Tracker {
        let nf = self.n as f64;
        let sites = self.sites();
        let xs: Vec<f64> = (0..sites).map(|s| (s + 1) as f64 / nf).collect();
        let ns = h.space_len();
        let rows: Vec<Vec<f64>> = if h.is_time_independent() {
            vec![h.coefficients()[..ns].to_vec()]
        } else {
            h.coefficients().chunks(ns).map(|c| c.to_vec()).collect()
        };
        let psi: Vec<Vec<f64>> = xs.iter().map(|&x| h.basis().eval(h.j(), x).v).collect();
        let terms = rows
            .iter()
            .map(|c| {
                let hv: Vec<f64> = psi.iter().map(|p| p.iter().zip(c).map(|(a, b)| a * b).sum()).collect();
                let dh: Vec<f64> = hv.windows(2).map(|w| w[1] - w[0]).collect();
                let bnd = Side::BOTH.map(|side| {
                    let site = |i: usize| match side {
                        Side::Left => i,
                        Side::Right => sites - 1 - i,
                    };
                    let rows = &self.rows[side as usize];
                    WindowState::all(self.l)
                        .map(|w| {
                            let row = &rows[w.mask as usize];
                            let mut prev = 0.0;
                            let mut acc = 0.0;
                            for (k, &to) in row.to.iter().enumerate() {
                                let rate = row.cum[k] - prev;
                                prev = row.cum[k];
                                let xi = WindowState::new(to);
                                let d: f64 = (0..self.l)
                                    .map(|i| (xi.occupied(i) as i32 - w.occupied(i) as i32) as f64 * hv[site(i)])
                                    .sum();
                                acc += rate * d;
                            }
                            acc / (nf - 1.0)
                        })
                        .collect()
                });
                Term { h: hv, dh, bnd, bulk: 0.0, s: 0.0 }
            })
            .collect();
        let time = if h.is_time_independent() { None } else { Some((h.p(), h.t_final())) };
        let (phi, big_phi) = match time {
            Some((p, tf)) => (bernstein_basis(p, tf, 0.0).0, bernstein_antiderivative(p, tf, 0.0)),
            None => (Vec::new(), Vec::new()),
        };
        Tracker { terms, time, gen: KahanSum::new(), dt: KahanSum::new(), phi, big_phi }
    }

    #[inline]
    fn multipliers(&self, b: usize) -> (f64, f64) {
        match &self.tilt {
            Tilt::Static { m_right, m_left, .. } => (m_right[b], m_left[b]),
            _ => (1.0, 1.0),
        }
    }

    #[inline]
    fn bond_contrib(&self, term: &Term, b: usize) -> f64 {
        let occ = self.conf.occupancy();
        let (a, c) = (occ[b], occ[b + 1]);
        if a == c {
            return 0.0;
        }
        let (mr, ml) = self.multipliers(b);
        let coef = self.n2 / (self.n as f64 - 1.0);
        if a == 1 {
            coef * mr * term.dh[b]
        } else {
            -coef * ml * term.dh[b]
        }
    }

    fn refresh_trackers(&mut self) {
        let occ = self.conf.occupancy().to_vec();
        for ti in 0..self.trackers.len() {
            for k in 0..self.trackers[ti].terms.len() {
                let term = &self.trackers[ti].terms[k];
                let bulk: KahanSum = (0..occ.len() - 1).map(|b| self.bond_contrib(term, b)).collect();
                let s: KahanSum = occ.iter().zip(&term.h).map(|(&o, h)| if o == 1 { *h } else { 0.0 }).collect();
                let term = &mut self.trackers[ti].terms[k];
                term.bulk = bulk.value();
                term.s = s.value();
            }
        }
    }

    /// Adds the contribution of `[t0, t1]` with the current state frozen.
    fn accumulate(&mut self, t0: f64, t1: f64) {
        let (wl, wr) = (self.wl, self.wr);
        let inv = 1.0 / (self.n as f64 - 1.0);
        for tr in &mut self.trackers {
            match tr.time {
                None => {
                    let term = &tr.terms[0];
                    tr.gen.add((term.bulk + term.bnd[0][wl] + term.bnd[1][wr]) * (t1 - t0));
                }
                Some((p, tf)) => {
                    let phi = bernstein_basis(p, tf, t1).0;
                    let big_phi = bernstein_antiderivative(p, tf, t1);
                    let mut g = 0.0;
                    let mut d = 0.0;
                    for (i, term) in tr.terms.iter().enumerate() {
                        g += (term.bulk + term.bnd[0][wl] + term.bnd[1][wr]) * (big_phi[i] - tr.big_phi[i]);
                        d += term.s * inv * (phi[i] - tr.phi[i]);
                    }
                    tr.gen.add(g);
                    tr.dt.add(d);
                    tr.phi = phi;
                    tr.big_phi = big_phi;
                }
            }
        }
    }

    fn bond_range_update(&mut self, bonds: std::ops::Range<usize>, apply: impl FnOnce(&mut Configuration)) {
        if self.trackers.is_empty() {
            apply(&mut self.conf);
            return;
        }
        let bonds = bonds.start..bonds.end.min(self.sites() - 1);
        let lo = bonds.start;
        let hi = (bonds.end + 1).min(self.sites());
        let before = self.conf.occupancy()[lo..hi].to_vec();
        for ti in 0..self.trackers.len() {
            for k in 0..self.trackers[ti].terms.len() {
                let old: f64 = bonds.clone().map(|b| self.bond_contrib(&self.trackers[ti].terms[k], b)).sum();
                self.trackers[ti].terms[k].bulk -= old;
            }
        }
        apply(&mut self.conf);
        let after = self.conf.occupancy()[lo..hi].to_vec();
        for ti in 0..self.trackers.len() {
            for k in 0..self.trackers[ti].terms.len() {
                let new: f64 = bonds.clone().map(|b| self.bond_contrib(&self.trackers[ti].terms[k], b)).sum();
                let term = &mut self.trackers[ti].terms[k];
                term.bulk += new;
                for (k, s) in (lo..hi).enumerate() {
                    if before[k] != after[k] {
                        term.s += (after[k] as f64 - before[k] as f64) * term.h[s];
                    }
                }
            }
        }
    }

    fn apply(&mut self, event: Event) {
        let sites = self.sites();
        let l = self.l;
        match event {
            Event::Swap { bond } => {
                self.bond_range_update(bond.saturating_sub(1)..bond + 2, |c| c.swap(bond));
                if bond < l {
                    self.wl = self.conf.window(Side::Left, l).mask as usize;
                }
                if bond + 1 >= sites - l {
                    self.wr = self.conf.window(Side::Right, l).mask as usize;
                }
            }
            Event::Boundary { side, to } => {
                let range = match side {
                    Side::Left => 0..l,
                    Side::Right => sites - l - 1..sites - 1,
                };
                self.bond_range_update(range, |c| c.set_window(side, l, to));
                match side {
                    Side::Left => self.wl = to.mask as usize,
                    Side::Right => self.wr = to.mask as usize,
                }
            }
        }
    }

    fn g_at(&self, c: &[f64], psi: &[f64], ns: usize, s: usize) -> f64 {
        c.iter().zip(&psi[s * ns..(s + 1) * ns]).map(|(a, b)| a * b).sum()
    }

    /// Draws a candidate at time `t` and executes it unless thinned.
    fn step<G: Rng + ?Sized>(&mut self, t: f64, rng: &mut G, counters: &mut EventCounters) {
        let m_max = match &self.tilt {
            Tilt::Static { m_max, .. } | Tilt::Dynamic { m_max, .. } => *m_max,
            Tilt::None => 1.0,
        };
        let bulk = self.n2 * m_max * self.conf.discrepancies().len() as f64;
        let lt = self.rows[0][self.wl].total;
        let rt = self.rows[1][self.wr].total;
        let u = rng.random::<f64>() * (bulk + lt + rt);
        let (event, side_counter) = if u < bulk {
            let d = self.conf.discrepancies();
            let bond = d.get(rng.random_range(0..d.len())) as usize;
            (Event::Swap { bond }, 0)
        } else if u < bulk + lt {
            (Event::Boundary { side: Side::Left, to: self.rows[0][self.wl].pick(rng.random()) }, 1)
        } else {
            (Event::Boundary { side: Side::Right, to: self.rows[1][self.wr].pick(rng.random()) }, 2)
        };
        let accept = match (&self.tilt, event) {
            (Tilt::None, _) => 1.0,
            (Tilt::Static { .. }, Event::Boundary { .. }) => 1.0,
            (Tilt::Static { m_max, .. }, Event::Swap { bond }) => {
                let (mr, ml) = self.multipliers(bond);
                (if self.conf.occupancy()[bond] == 1 { mr } else { ml }) / m_max
            }
            (Tilt::Dynamic { g, psi, ns, m_max, gsup }, ev) => {
                let (c, _) = g.space_coefficients_at(t);
                let scale = self.n as f64 / (self.n as f64 - 1.0);
                match ev {
                    Event::Swap { bond } => {
                        let occ = self.conf.occupancy();
                        let d = occ[bond] as f64 - occ[bond + 1] as f64;
                        let e = scale * d * (self.g_at(&c, psi, *ns, bond + 1) - self.g_at(&c, psi, *ns, bond));
                        e.exp() / m_max
                    }
                    Event::Boundary { side, to } => {
                        let from = self.conf.window(side, self.l);
                        let e: f64 = (0..self.l)
                            .map(|i| {
                                let d = to.occupied(i) as i32 - from.occupied(i) as i32;
                                d as f64 * self.g_at(&c, psi, *ns, self.conf.window_site(side, i))
                            })
                            .sum();
                        let bound = gsup * (from.mask ^ to.mask).count_ones() as f64;
                        (scale * (e - bound)).exp()
                    }
                }
            }
        };
        if accept < 1.0 && rng.random::<f64>() >= accept {
            counters.rejected += 1;
            return;
        }
        match side_counter {
            0 => counters.bulk += 1,
            1 => counters.left += 1,
            _ => counters.right += 1,
        }
        self.apply(event);
    }

    fn total_bound(&self) -> f64 {
        let m_max = match &self.tilt {
            Tilt::Static { m_max, .. } | Tilt::Dynamic { m_max, .. } => *m_max,
            Tilt::None => 1.0,
        };
        self.n2 * m_max * self.conf.discrepancies().len() as f64 + self.rows[0][self.wl].total + self.rows[1][self.wr].total
    }
}

const REFRESH_EVERY: u64 = 1 << 16;
const CHECK_EVERY: u64 = 1 << 12;

/// Runs the process from `initial` over `[0, cfg.t_final]`.
pub fn simulate<G: Rng + ?Sized>(cfg: &SimConfig, model: &RateModel<f64>, initial: Configuration, rng: &mut G) -> Result<TrajectoryRecord, SimError> {
    cfg.validate(model.l())?;
    if initial.n() != cfg.n {
        return Err(SimError::Invalid(format!("configuration has N = {}, config has N = {}", initial.n(), cfg.n)));
    }
    if !validate_irreducibility(model).accepted() {
        return Err(SimError::Reducible);
    }
    let started = Instant::now();
    let initial_values: Vec<f64> = cfg.observables.iter().map(|h| empirical_pair(&initial, h, 0.0)).collect();
    let mut eng = Engine::new(cfg, model, initial)?;
    let mut counters = EventCounters::default();
    let mut values = Vec::with_capacity(cfg.sample_times.len());
    let mut snaps = cfg.snapshots.then(Vec::new);
    let mut next_sample = 0;
    let mut t = 0.0;
    let mut candidates: u64 = 0;
    let t_final = cfg.t_final;
    loop {
        let total = eng.total_bound();
        let t_next = if total > 0.0 { t + exp_draw(rng) / total } else { f64::INFINITY };
        let t_end = t_next.min(t_final);
        while next_sample < cfg.sample_times.len() && cfg.sample_times[next_sample] <= t_end && cfg.sample_times[next_sample] < t_next {
            let ts = cfg.sample_times[next_sample];
            values.push(cfg.observables.iter().map(|h| empirical_pair(&eng.conf, h, ts)).collect());
            if let Some(s) = snaps.as_mut() {
                s.push(eng.conf.bitstring());
            }
            next_sample += 1;
        }
        if !eng.trackers.is_empty() {
            eng.accumulate(t, t_end);
        }
        if t_next > t_final {
            break;
        }
        t = t_next;
        eng.step(t, rng, &mut counters);
        candidates += 1;
        if candidates % REFRESH_EVERY == 0 && !eng.trackers.is_empty() {
            eng.refresh_trackers();
        }
        if cfg!(debug_assertions) && candidates % CHECK_EVERY == 0 && !eng.conf.check_consistency() {
            return Err(SimError::Internal("discrepancy index out of sync".into()));
        }
    }
    let final_values = cfg.observables.iter().map(|h| empirical_pair(&eng.conf, h, t_final)).collect();
    let (generator_integrals, time_integrals) = if cfg.accumulate {
        (
            Some(eng.trackers.iter().map(|t| t.gen.value()).collect()),
            Some(eng.trackers.iter().map(|t| t.dt.value()).collect()),
        )
    } else {
        (None, None)
    };
    let wall = started.elapsed().as_secs_f64();
    Ok(TrajectoryRecord {
        n: cfg.n,
        t_final,
        sample_times: cfg.sample_times.clone(),
        values,
        snapshots: snaps,
        initial_values,
        final_values,
        generator_integrals,
        time_integrals,
        stats: RunStats { wall_seconds: wall, events_per_second: if wall > 0.0 { counters.total() as f64 / wall } else { 0.0 } },
        counters,
    })
}

/// Samples the initial state from `gamma` and runs replica `replica`.
pub fn run_replica(cfg: &SimConfig, model: &RateModel<f64>, gamma: &dyn Fn(f64) -> f64, seed: u64, replica: u64, stream: u64) -> Result<TrajectoryRecord, SimError> {
    let mut rng = replica_rng(seed, replica, stream);
    let conf = sample_initial(gamma, cfg.n, &mut rng)?;
    simulate(cfg, model, conf, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::replica_rng;
    use crate::testfn::SpaceBasis;

    fn brute_generator(conf: &Configuration, model: &RateModel<f64>, h: &TestFunction<f64>, tilt: Option<&TestFunction<f64>>) -> f64 {
        let base = empirical_pair(conf, h, 0.0);
        event_catalog(conf, model, tilt.map(|g| (g, 0.0)))
            .into_iter()
            .map(|(e, r)| {
                let mut c = conf.clone();
                apply_event(&mut c, model.l(), e);
                r * (empirical_pair(&c, h, 0.0) - base)
            })
            .sum()
    }

    #[test]
    fn incremental_generator_matches_brute_force() {
        let (model, _) = RateModel::l3(1.0, 2.0, None).unwrap();
        let h = TestFunction::static_space(SpaceBasis::Cosine, 0, 3, 1.0, &[0.2, 1.0, -0.4, 0.3]).unwrap();
        let g = TestFunction::affine(0.1, 0.5, 0, 2, 1.0).unwrap();
        for tilt in [None, Some(g)] {
            let mut cfg = SimConfig::new(24, 1.0);
            cfg.observables = vec![h.clone()];
            cfg.accumulate = true;
            cfg.tilt = tilt.clone();
            let mut rng = replica_rng(11, 0, 0);
            let conf = sample_initial(&|x| 0.3 + 0.4 * x, 24, &mut rng).unwrap();
            let mut eng = Engine::new(&cfg, &model, conf).unwrap();
            let mut counters = EventCounters::default();
            for step in 0..3000 {
                eng.step(0.0, &mut rng, &mut counters);
                if step % 97 == 0 {
                    let term = &eng.trackers[0].terms[0];
                    let inc = term.bulk + term.bnd[0][eng.wl] + term.bnd[1][eng.wr];
                    let brute = brute_generator(&eng.conf, &model, &h, tilt.as_ref());
                    assert!((inc - brute).abs() < 1e-8 * (1.0 + brute.abs()), "{inc} vs {brute}");
                    assert!(eng.conf.check_consistency());
                    assert_eq!(eng.wl as u32, eng.conf.window(Side::Left, 3).mask);
                    assert_eq!(eng.wr as u32, eng.conf.window(Side::Right, 3).mask);
                }
            }
            if tilt.is_some() {
                assert!(counters.rejected > 0);
            }
        }
    }
}
