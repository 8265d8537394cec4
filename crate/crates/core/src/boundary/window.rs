use serde::{Deserialize, Serialize};
use std::fmt;

/// Which reservoir a window belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Left => f.write_str("left"),
            Side::Right => f.write_str("right"),
        }
    }
}

/// Occupancy of the `l` sites nearest a boundary.
///
/// Bit `i` is the `(i+1)`-th site counted from the boundary inward, on both
/// sides: for the left window bit 0 is the site next to `x = 0`, for the
/// right window bit 0 is the site next to `x = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WindowState {
    pub mask: u32,
}

impl WindowState {
    pub fn new(mask: u32) -> Self {
        Self { mask }
    }

    /// Builds a window from occupancies listed outermost site first.
    pub fn from_sites(sites: &[u8]) -> Self {
        let mask = sites
            .iter()
            .enumerate()
            .fold(0u32, |m, (i, &s)| if s != 0 { m | (1 << i) } else { m });
        Self { mask }
    }

    #[inline]
    pub fn occupied(self, i: usize) -> bool {
        self.mask >> i & 1 == 1
    }

    #[inline]
    pub fn count(self) -> u32 {
        self.mask.count_ones()
    }

    /// Exchanges the occupancies of positions `i` and `i + 1`.
    #[inline]
    pub fn swapped(self, i: usize) -> Self {
        let a = self.mask >> i & 1;
        let b = self.mask >> (i + 1) & 1;
        if a == b {
            self
        } else {
            Self { mask: self.mask ^ (0b11 << i) }
        }
    }

    pub fn full(l: usize) -> Self {
        Self { mask: (1u32 << l) - 1 }
    }

    pub fn all(l: usize) -> impl Iterator<Item = WindowState> {
        (0..1u32 << l).map(WindowState::new)
    }

    /// Particle-hole conjugate within a window of size `l`.
    pub fn complement(self, l: usize) -> Self {
        Self { mask: !self.mask & ((1u32 << l) - 1) }
    }
}
