use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::MapParams;

/// A half-open interval `(lo, hi]` inside `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&lo) || !(hi > lo && hi <= 1.0) {
            return Err(Error::Parameter(format!(
                "interval ({lo}, {hi}] is not a non-empty subinterval of (0, 1]"
            )));
        }
        Ok(Self { lo, hi })
    }

    /// The whole phase space `(0, 1]`.
    pub const UNIT: Interval = Interval { lo: 0.0, hi: 1.0 };

    /// The inducing set `Y = (1/2, 1]`.
    pub const Y: Interval = Interval { lo: 0.5, hi: 1.0 };

    #[inline]
    pub fn lo(&self) -> f64 {
        self.lo
    }

    #[inline]
    pub fn hi(&self) -> f64 {
        self.hi
    }

    #[inline]
    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x <= self.hi
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        self.lo >= other.lo && self.hi <= other.hi
    }

    /// Length of the intersection with `(lo, hi]`.
    #[inline]
    pub fn overlap(&self, lo: f64, hi: f64) -> f64 {
        (self.hi.min(hi) - self.lo.max(lo)).max(0.0)
    }

    /// `T^{-1}(self)` as its left-branch and right-branch pieces.
    pub fn preimage(&self, params: &MapParams) -> [Interval; 2] {
        let left = Interval {
            lo: if self.lo == 0.0 {
                0.0
            } else {
                params.left_inverse_unchecked(self.lo)
            },
            hi: params.left_inverse_unchecked(self.hi),
        };
        [left, self.right_preimage()]
    }

    /// `T^{-1}(self) ∩ (1/2, 1]`; the right branch is affine, so the length halves.
    pub fn right_preimage(&self) -> Interval {
        Interval {
            lo: 0.5 * (1.0 + self.lo),
            hi: 0.5 * (1.0 + self.hi),
        }
    }
}
