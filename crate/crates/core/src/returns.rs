//! First-return structure of `Y = (1/2, 1]`.
//!
//! The left-branch preimage chain `y_0 = 1`, `y_1 = 1/2`, `y_{k+1} = T_left^{-1}(y_k)`
//! cuts `(0, 1]` into the level sets of the hitting time of `Y`. Pulling the
//! chain back through the right branch gives the return-time intervals
//!
//! ```text
//! I_n = ((1 + y_n) / 2, (1 + y_{n-1}) / 2],     n >= 1,
//! ```
//!
//! on which the first return time to `Y` equals `n`, and the inverse branches
//! `psi_n : Y -> I_n` of `T^n`.

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::map::MapParams;

pub const DEFAULT_N_MAX: usize = 4096;

#[derive(Debug, Clone)]
pub struct FirstReturnStructure {
    params: MapParams,
    cut_points: Vec<f64>,
    lengths: Vec<f64>,
}

/// `psi_n(w)` together with `psi_n'(w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchPoint {
    pub point: f64,
    pub derivative: f64,
}

impl FirstReturnStructure {
    /// Builds the cut points `y_0..=y_{n_max}` by backward recursion.
    pub fn build(params: MapParams, n_max: usize) -> Result<Self> {
        if n_max < 2 {
            return Err(Error::Range {
                what: "n_max",
                value: n_max,
                lo: 2,
                hi: usize::MAX,
            });
        }
        let mut cut_points = Vec::with_capacity(n_max + 1);
        cut_points.push(1.0);
        cut_points.push(0.5);
        for k in 1..n_max {
            let y = params.left_inverse_unchecked(cut_points[k]);
            if !(y > 0.0 && y < cut_points[k]) {
                return Err(Error::Numeric {
                    method: "left-branch inverse",
                    iterations: k,
                    residual: y,
                });
            }
            cut_points.push(y);
        }
        // |I_n| = (y_{n-1} - y_n) / 2 and y_{n-1} = T(y_n), so the difference is
        // y_n (2 y_n)^alpha, which has full relative precision.
        let lengths = (1..=n_max)
            .map(|n| {
                if n == 1 {
                    0.25
                } else {
                    let y = cut_points[n];
                    0.5 * y * (2.0 * y).powf(params.alpha())
                }
            })
            .collect();
        Ok(Self {
            params,
            cut_points,
            lengths,
        })
    }

    pub fn params(&self) -> &MapParams {
        &self.params
    }

    pub fn n_max(&self) -> usize {
        self.lengths.len()
    }

    /// `y_0..=y_{n_max}`.
    pub fn cut_points(&self) -> &[f64] {
        &self.cut_points
    }

    fn check_branch(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.n_max() {
            return Err(Error::Range {
                what: "branch",
                value: n,
                lo: 1,
                hi: self.n_max(),
            });
        }
        Ok(())
    }

    /// `I_n`.
    pub fn interval(&self, n: usize) -> Result<Interval> {
        self.check_branch(n)?;
        Interval::new(
            0.5 * (1.0 + self.cut_points[n]),
            0.5 * (1.0 + self.cut_points[n - 1]),
        )
    }

    /// `Leb(I_n)`.
    pub fn length(&self, n: usize) -> Result<f64> {
        self.check_branch(n)?;
        Ok(self.lengths[n - 1])
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    /// `Leb` of the part of `Y` with return time beyond `n_max`, exactly `y_{n_max} / 2`.
    pub fn tail_length(&self) -> f64 {
        0.5 * self.cut_points[self.n_max()]
    }

    /// Return time of `x` in `Y` read off the partition, or `None` past `n_max`.
    pub fn locate(&self, x: f64) -> Option<usize> {
        if !(x > 0.5 && x <= 1.0) {
            return None;
        }
        let z = 2.0 * x - 1.0;
        // cut_points is strictly decreasing; find n with y_n < z <= y_{n-1}.
        let n = self.cut_points.partition_point(|&y| y >= z);
        (n >= 1 && n <= self.n_max()).then_some(n)
    }

    /// Least-squares `c` in `|I_n| ~ c / n^(beta + 1)` over the last decade
    /// of computed branches.
    pub fn tail_constant(&self) -> f64 {
        let e = self.params.beta() + 1.0;
        let lo = (self.n_max() / 10).max(1);
        let (mut num, mut den) = (0.0, 0.0);
        for n in lo..=self.n_max() {
            let g = (n as f64).powf(-e);
            num += self.lengths[n - 1] * g;
            den += g * g;
        }
        num / den
    }

    /// `|I_n|` for any `n`: exact up to `n_max`, asymptotic beyond.
    pub fn length_or_asymptotic(&self, n: usize) -> f64 {
        if n >= 1 && n <= self.n_max() {
            self.lengths[n - 1]
        } else {
            self.tail_constant() * (n as f64).powf(-(self.params.beta() + 1.0))
        }
    }

    /// `psi_n(w)` and `psi_n'(w)` for `w` in `Y`.
    ///
    /// The point is `(1 + T_left^{-(n-1)}(w)) / 2`; the derivative is
    /// `1 / (T^n)'(psi_n w)`, with `(T^n)'` the product of `T'` along the
    /// forward orbit `psi_n w -> z_{n-1} -> ... -> z_1 -> w`, where the
    /// `z_k = T_left^{-k}(w)` are the backward chain.
    pub fn inverse_branch(&self, n: usize, w: f64) -> Result<BranchPoint> {
        self.check_branch(n)?;
        if !(w > 0.5 && w <= 1.0) {
            return Err(Error::Domain {
                what: "w",
                value: w,
                domain: "(1/2, 1]",
            });
        }
        Ok(self.branch_unchecked(n, w))
    }

    /// As [`inverse_branch`](Self::inverse_branch) but defined on the closed `[1/2, 1]`.
    pub(crate) fn branch_unchecked(&self, n: usize, w: f64) -> BranchPoint {
        let mut z = w;
        let mut slope = 2.0;
        for _ in 1..n {
            z = self.params.left_inverse_unchecked(z);
            slope *= self.params.derivative_unchecked(z);
        }
        BranchPoint {
            point: 0.5 * (1.0 + z),
            derivative: 1.0 / slope,
        }
    }
}
