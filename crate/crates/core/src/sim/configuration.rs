use rand::Rng;

use super::SimError;
use crate::boundary::{Side, WindowState};

/// Set of small integers with O(1) insert, remove and uniform pick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexedSet {
    items: Vec<u32>,
    pos: Vec<u32>,
}

const ABSENT: u32 = u32::MAX;

impl IndexedSet {
    pub fn new(capacity: usize) -> Self {
        Self { items: Vec::with_capacity(capacity), pos: vec![ABSENT; capacity] }
    }

    #[inline]
    pub fn contains(&self, v: u32) -> bool {
        self.pos[v as usize] != ABSENT
    }

    #[inline]
    pub fn insert(&mut self, v: u32) {
        if !self.contains(v) {
            self.pos[v as usize] = self.items.len() as u32;
            self.items.push(v);
        }
    }

    #[inline]
    pub fn remove(&mut self, v: u32) {
        let p = self.pos[v as usize];
        if p == ABSENT {
            return;
        }
        let last = *self.items.last().expect("non-empty");
        self.items[p as usize] = last;
        self.pos[last as usize] = p;
        self.items.pop();
        self.pos[v as usize] = ABSENT;
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> u32 {
        self.items[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.items.iter().copied()
    }
}

/// Occupancies of the `N - 1` sites `x = 1/N, ..., (N-1)/N`, with the set of
/// bonds `(s, s + 1)` whose ends differ.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Configuration {
    occ: Vec<u8>,
    disc: IndexedSet,
}

impl Configuration {
    pub fn from_occupancy(occ: Vec<u8>) -> Result<Self, SimError> {
        if occ.len() < 2 {
            return Err(SimError::Invalid("configuration needs at least two sites".into()));
        }
        if occ.iter().any(|&o| o > 1) {
            return Err(SimError::Invalid("occupancies must be 0 or 1".into()));
        }
        let mut disc = IndexedSet::new(occ.len() - 1);
        for b in 0..occ.len() - 1 {
            if occ[b] != occ[b + 1] {
                disc.insert(b as u32);
            }
        }
        Ok(Self { occ, disc })
    }

    /// Lattice parameter `N` (one more than the number of sites).
    pub fn n(&self) -> usize {
        self.occ.len() + 1
    }

    pub fn sites(&self) -> usize {
        self.occ.len()
    }

    pub fn occupancy(&self) -> &[u8] {
        &self.occ
    }

    pub fn discrepancies(&self) -> &IndexedSet {
        &self.disc
    }

    pub fn particles(&self) -> usize {
        self.occ.iter().map(|&o| o as usize).sum()
    }

    #[inline]
    fn refresh_bond(&mut self, b: usize) {
        if self.occ[b] != self.occ[b + 1] {
            self.disc.insert(b as u32);
        } else {
            self.disc.remove(b as u32);
        }
    }

    #[inline]
    fn refresh_around(&mut self, s: usize) {
        if s > 0 {
            self.refresh_bond(s - 1);
        }
        if s + 1 < self.occ.len() {
            self.refresh_bond(s);
        }
    }

    /// Exchanges the occupancies at the ends of bond `b`.
    #[inline]
    pub fn swap(&mut self, b: usize) {
        self.occ.swap(b, b + 1);
        if b > 0 {
            self.refresh_bond(b - 1);
        }
        self.refresh_bond(b);
        if b + 2 < self.occ.len() {
            self.refresh_bond(b + 1);
        }
    }

    #[inline]
    pub fn window_site(&self, side: Side, i: usize) -> usize {
        match side {
            Side::Left => i,
            Side::Right => self.occ.len() - 1 - i,
        }
    }

    pub fn window(&self, side: Side, l: usize) -> WindowState {
        let mut m = 0u32;
        for i in 0..l {
            m |= (self.occ[self.window_site(side, i)] as u32) << i;
        }
        WindowState::new(m)
    }

    /// Replaces the `l`-site window on `side` by `to`.
    pub fn set_window(&mut self, side: Side, l: usize, to: WindowState) {
        for i in 0..l {
            let s = self.window_site(side, i);
            let v = to.occupied(i) as u8;
            if self.occ[s] != v {
                self.occ[s] = v;
                self.refresh_around(s);
            }
        }
    }

    /// Rebuilds the discrepancy set and compares it with the maintained one.
    pub fn check_consistency(&self) -> bool {
        let fresh = Self::from_occupancy(self.occ.clone()).expect("valid occupancy");
        fresh.disc.len() == self.disc.len() && fresh.disc.iter().all(|b| self.disc.contains(b))
    }

    pub fn bitstring(&self) -> String {
        self.occ.iter().map(|&o| if o == 1 { '1' } else { '0' }).collect()
    }
}

/// Independent Bernoulli(`gamma(x)`) occupancies at `x = s / N`.
pub fn sample_initial<G: Rng + ?Sized>(gamma: &dyn Fn(f64) -> f64, n: usize, rng: &mut G) -> Result<Configuration, SimError> {
    if n < 3 {
        return Err(SimError::Invalid("N must be at least 3".into()));
    }
    let mut occ = Vec::with_capacity(n - 1);
    for s in 1..n {
        let p = gamma(s as f64 / n as f64);
        if !(0.0..=1.0).contains(&p) {
            return Err(SimError::Invalid(format!("initial density {p} at x = {} outside [0, 1]", s as f64 / n as f64)));
        }
        occ.push((rng.random::<f64>() < p) as u8);
    }
    Configuration::from_occupancy(occ)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::replica_rng;

    #[test]
    fn indexed_set_operations() {
        let mut s = IndexedSet::new(10);
        for v in [3, 7, 1, 9] {
            s.insert(v);
        }
        s.insert(7);
        assert_eq!(s.len(), 4);
        s.remove(3);
        s.remove(3);
        assert!(!s.contains(3) && s.contains(9) && s.contains(1));
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn swaps_are_involutions_and_keep_index_consistent() {
        let mut c = Configuration::from_occupancy(vec![1, 0, 1, 1, 0, 1, 0]).unwrap();
        assert_eq!(c.discrepancies().len(), 5);
        let orig = c.clone();
        c.swap(3);
        assert!(c.check_consistency());
        c.swap(3);
        assert_eq!(c.occupancy(), orig.occupancy());
        assert!(c.check_consistency());
    }

    #[test]
    fn windows_read_outermost_first() {
        let mut c = Configuration::from_occupancy(vec![1, 0, 1, 1, 0, 1, 0]).unwrap();
        assert_eq!(c.window(Side::Left, 3), WindowState::from_sites(&[1, 0, 1]));
        assert_eq!(c.window(Side::Right, 3), WindowState::from_sites(&[0, 1, 0]));
        c.set_window(Side::Right, 3, WindowState::from_sites(&[0, 0, 1]));
        assert_eq!(c.occupancy(), &[1, 0, 1, 1, 1, 0, 0]);
        assert!(c.check_consistency());
    }

    #[test]
    fn sample_initial_extremes_and_mean() {
        let mut rng = replica_rng(1, 0, 0);
        let ones = sample_initial(&|_| 1.0, 50, &mut rng).unwrap();
        assert_eq!(ones.particles(), 49);
        assert_eq!(sample_initial(&|_| 0.0, 50, &mut rng).unwrap().particles(), 0);
        let n = 10_000;
        let half = sample_initial(&|_| 0.5, n, &mut rng).unwrap();
        let mean = half.particles() as f64 / (n - 1) as f64;
        assert!((mean - 0.5).abs() <= 3.0 * 0.5 / ((n - 1) as f64).sqrt());
        assert!(sample_initial(&|_| 1.2, 10, &mut rng).is_err());
    }
}
