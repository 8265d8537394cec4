use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::window::{Side, WindowState};
use super::BoundaryError;
use crate::scalar::Scalar;

/// Largest supported window. A dense table has `4^l` entries.
pub const MAX_WINDOW: usize = 12;

/// Dense `2^l x 2^l` table of window replacement rates for one reservoir.
///
/// Entry `(eta, xi)` is the rate, in macroscopic time before the speed-up
/// by `N`, at which window configuration `eta` is replaced by `xi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRateTable<S> {
    side: Side,
    l: usize,
    rates: Vec<S>,
}

impl<S: Scalar> BoundaryRateTable<S> {
    /// Validates and stores a row-major table. Diagonal entries are zeroed.
    pub fn new(side: Side, l: usize, mut rates: Vec<S>) -> Result<Self, BoundaryError> {
        check_window(l)?;
        let dim = 1usize << l;
        if rates.len() != dim * dim {
            return Err(BoundaryError::TableShape { expected: dim * dim, got: rates.len() });
        }
        for (idx, r) in rates.iter().enumerate() {
            if !(r >= &S::zero()) {
                return Err(BoundaryError::NegativeRate {
                    side,
                    from: (idx / dim) as u32,
                    to: (idx % dim) as u32,
                });
            }
        }
        for i in 0..dim {
            rates[i * dim + i] = S::zero();
        }
        Ok(Self { side, l, rates })
    }

    /// Table with every rate equal to zero.
    pub fn zeros(side: Side, l: usize) -> Result<Self, BoundaryError> {
        check_window(l)?;
        let dim = 1usize << l;
        Self::new(side, l, vec![S::zero(); dim * dim])
    }

    /// Builds a table from sparse `(from, to, rate)` triples; unlisted pairs are 0.
    pub fn from_triples(
        side: Side,
        l: usize,
        triples: impl IntoIterator<Item = (u32, u32, S)>,
    ) -> Result<Self, BoundaryError> {
        check_window(l)?;
        let dim = 1usize << l;
        let mut rates = vec![S::zero(); dim * dim];
        for (from, to, r) in triples {
            if from as usize >= dim || to as usize >= dim {
                return Err(BoundaryError::MaskOutOfRange { l, mask: from.max(to) });
            }
            rates[from as usize * dim + to as usize] = r;
        }
        Self::new(side, l, rates)
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn dim(&self) -> usize {
        1 << self.l
    }

    #[inline]
    pub fn rate(&self, from: WindowState, to: WindowState) -> &S {
        &self.rates[from.mask as usize * self.dim() + to.mask as usize]
    }

    /// Row of rates leaving `from`.
    pub fn row(&self, from: WindowState) -> &[S] {
        let d = self.dim();
        &self.rates[from.mask as usize * d..(from.mask as usize + 1) * d]
    }

    /// Positive-rate transitions out of `from`.
    pub fn transitions(&self, from: WindowState) -> impl Iterator<Item = (WindowState, &S)> + '_ {
        self.row(from)
            .iter()
            .enumerate()
            .filter(|(_, r)| **r > S::zero())
            .map(|(to, r)| (WindowState::new(to as u32), r))
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> BoundaryRateTable<T> {
        BoundaryRateTable { side: self.side, l: self.l, rates: self.rates.iter().map(f).collect() }
    }

    /// Same rates attached to the other reservoir.
    pub fn mirrored(&self) -> Self {
        let side = match self.side {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        };
        Self { side, l: self.l, rates: self.rates.clone() }
    }
}

fn check_window(l: usize) -> Result<(), BoundaryError> {
    if l == 0 || l > MAX_WINDOW {
        Err(BoundaryError::WindowSize { l, max: MAX_WINDOW })
    } else {
        Ok(())
    }
}

/// Left and right reservoir tables sharing a window size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateModel<S> {
    l: usize,
    left: BoundaryRateTable<S>,
    right: BoundaryRateTable<S>,
}

/// Parameters of the three-site example model with multiple stationary profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L3Params<S> {
    pub a0: S,
    pub a1: S,
    pub a2: S,
}

impl<S: Scalar> RateModel<S> {
    pub fn new(left: BoundaryRateTable<S>, right: BoundaryRateTable<S>) -> Result<Self, BoundaryError> {
        if left.side != Side::Left || right.side != Side::Right {
            return Err(BoundaryError::SideMismatch);
        }
        if left.l != right.l {
            return Err(BoundaryError::WindowMismatch { left: left.l, right: right.l });
        }
        Ok(Self { l: left.l, left, right })
    }

    /// Both reservoirs driven by the same table (mirror-symmetric model).
    pub fn symmetric(left: BoundaryRateTable<S>) -> Result<Self, BoundaryError> {
        let right = left.mirrored();
        Self::new(left, right)
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn table(&self, side: Side) -> &BoundaryRateTable<S> {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> RateModel<T> {
        RateModel { l: self.l, left: self.left.map(&f), right: self.right.map(&f) }
    }

    /// The `l = 3` model whose reservoirs flip only the middle window site,
    /// at a rate set by the two outer sites.
    ///
    /// Requires `0 < a < b`; `a2` defaults to its smallest admissible value
    /// `a + 2b` and `a0 = 2 a2 + 4b - a`.
    pub fn l3(a: S, b: S, a2: Option<S>) -> Result<(Self, L3Params<S>), BoundaryError> {
        let zero = S::zero();
        if !(a > zero) || !(b > zero) {
            return Err(BoundaryError::Preset("l3 requires a > 0 and b > 0".into()));
        }
        if !(a < b) {
            return Err(BoundaryError::Preset("l3 requires a < b".into()));
        }
        let two_b = b.clone() + b.clone();
        let min_a2 = a.clone() + two_b.clone();
        let a2 = match a2 {
            Some(v) => {
                if !(v >= min_a2) {
                    return Err(BoundaryError::Preset("l3 requires a2 >= a + 2b".into()));
                }
                v
            }
            None => min_a2,
        };
        let a1 = a.clone();
        let a0 = a2.clone() + a2.clone() + two_b.clone() + two_b - a;
        let params = L3Params { a0: a0.clone(), a1: a1.clone(), a2: a2.clone() };

        let mut triples = Vec::with_capacity(8);
        for w in WindowState::all(3) {
            let (outer, mid, inner) = (w.occupied(0), w.occupied(1), w.occupied(2));
            let rate = if outer != inner {
                a2.clone()
            } else if mid == outer {
                a1.clone()
            } else {
                a0.clone()
            };
            triples.push((w.mask, w.mask ^ 0b010, rate));
        }
        let left = BoundaryRateTable::from_triples(Side::Left, 3, triples)?;
        Ok((Self::symmetric(left)?, params))
    }

    /// Single-site reservoirs: creation at rate `in_rate` into an empty site,
    /// removal at rate `out_rate` from an occupied one.
    pub fn single_site(
        left: (S, S),
        right: (S, S),
    ) -> Result<Self, BoundaryError> {
        let l = BoundaryRateTable::from_triples(Side::Left, 1, [(0, 1, left.0), (1, 0, left.1)])?;
        let r = BoundaryRateTable::from_triples(Side::Right, 1, [(0, 1, right.0), (1, 0, right.1)])?;
        Self::new(l, r)
    }
}

impl RateModel<f64> {
    /// Random tables with each off-diagonal entry present with probability
    /// `fill` and uniform on `(0, max_rate)`; redrawn until irreducible.
    pub fn random_irreducible<G: Rng + ?Sized>(l: usize, fill: f64, max_rate: f64, rng: &mut G) -> Result<Self, BoundaryError> {
        check_window(l)?;
        for _ in 0..10_000 {
            let left = random_table(Side::Left, l, fill, max_rate, rng)?;
            let right = random_table(Side::Right, l, fill, max_rate, rng)?;
            let model = Self::new(left, right)?;
            if super::validate_irreducibility(&model).accepted() {
                return Ok(model);
            }
        }
        Err(BoundaryError::Preset("could not draw an irreducible random model".into()))
    }

    /// Reads the plain-text table format: `side <left|right>`, `l <n>`, then
    /// whitespace-separated `from to rate` triples (masks in decimal).
    /// Lines starting with `#` are comments.
    pub fn parse_text(text: &str) -> Result<Self, BoundaryError> {
        let mut blocks: Vec<(Side, Option<usize>, Vec<(u32, u32, f64)>)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line_no = lineno + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let err = |msg: String| BoundaryError::Parse { line: line_no, message: msg };
            match toks[0] {
                "side" => {
                    let side = match toks.get(1).copied() {
                        Some("left") => Side::Left,
                        Some("right") => Side::Right,
                        other => return Err(err(format!("unknown side {other:?}"))),
                    };
                    if blocks.iter().any(|b| b.0 == side) {
                        return Err(err(format!("side {side} given twice")));
                    }
                    blocks.push((side, None, Vec::new()));
                }
                "l" => {
                    let block = blocks.last_mut().ok_or_else(|| err("`l` before `side`".into()))?;
                    let l: usize = toks
                        .get(1)
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| err("expected `l <window size>`".into()))?;
                    block.1 = Some(l);
                }
                _ => {
                    let block = blocks.last_mut().ok_or_else(|| err("rate triple before `side`".into()))?;
                    if block.1.is_none() {
                        return Err(err("rate triple before `l`".into()));
                    }
                    if toks.len() != 3 {
                        return Err(err(format!("expected `from to rate`, got {} fields", toks.len())));
                    }
                    let from: u32 = toks[0].parse().map_err(|_| err(format!("bad mask {:?}", toks[0])))?;
                    let to: u32 = toks[1].parse().map_err(|_| err(format!("bad mask {:?}", toks[1])))?;
                    let rate: f64 = toks[2].parse().map_err(|_| err(format!("bad rate {:?}", toks[2])))?;
                    if !rate.is_finite() || rate < 0.0 {
                        return Err(err(format!("rate must be finite and >= 0, got {rate}")));
                    }
                    block.2.push((from, to, rate));
                }
            }
        }
        let mut left = None;
        let mut right = None;
        for (side, l, triples) in blocks {
            let l = l.ok_or(BoundaryError::Parse { line: 0, message: format!("side {side} missing `l`") })?;
            let table = BoundaryRateTable::from_triples(side, l, triples)?;
            match side {
                Side::Left => left = Some(table),
                Side::Right => right = Some(table),
            }
        }
        match (left, right) {
            (Some(l), Some(r)) => Self::new(l, r),
            _ => Err(BoundaryError::Parse { line: 0, message: "both `side left` and `side right` are required".into() }),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, BoundaryError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BoundaryError::Io(format!("{}: {e}", path.display())))?;
        Self::parse_text(&text)
    }

    /// Writes the model in the format accepted by [`RateModel::parse_text`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for side in Side::BOTH {
            let t = self.table(side);
            let _ = writeln!(out, "side {side}\nl {}", t.l());
            for from in WindowState::all(t.l()) {
                for (to, r) in t.transitions(from) {
                    let _ = writeln!(out, "{} {} {}", from.mask, to.mask, r);
                }
            }
        }
        out
    }

    /// Content hash of the canonical text form (hex SHA-256).
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

fn random_table<G: Rng + ?Sized>(side: Side, l: usize, fill: f64, max_rate: f64, rng: &mut G) -> Result<BoundaryRateTable<f64>, BoundaryError> {
    let dim = 1usize << l;
    let mut rates = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            if i != j && rng.random::<f64>() < fill {
                rates[i * dim + j] = max_rate * (1.0 - rng.random::<f64>());
            }
        }
    }
    BoundaryRateTable::new(side, l, rates)
}
