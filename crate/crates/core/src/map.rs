//! The intermittent map, its derivative and the inverse of its neutral branch.

use crate::error::{Error, Result};

/// Parameter of the map. `beta = 1 / alpha` is cached alongside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapParams {
    alpha: f64,
    beta: f64,
}

/// Outcome of [`first_return_time`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReturnTime {
    Returned(usize),
    /// The orbit had not come back after `cap` steps.
    Overflow,
}

impl MapParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain {
                what: "alpha",
                value: alpha,
                domain: "(0, 1)",
            });
        }
        Ok(Self {
            alpha,
            beta: 1.0 / alpha,
        })
    }

    #[inline]
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[inline]
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// One step of the map without the domain check. Also defined at 0.
    #[inline]
    pub fn step(&self, x: f64) -> f64 {
        if x <= 0.5 {
            // (2x)^alpha instead of 2^alpha x^alpha keeps T(1/2) = 1 exact.
            x * (1.0 + (2.0 * x).powf(self.alpha))
        } else {
            2.0 * x - 1.0
        }
    }

    #[inline]
    pub fn derivative_unchecked(&self, x: f64) -> f64 {
        if x <= 0.5 {
            1.0 + (1.0 + self.alpha) * (2.0 * x).powf(self.alpha)
        } else {
            2.0
        }
    }

    /// Solves `u (1 + (2u)^alpha) = y` for `u` in `[0, 1/2]`, `y` in `[0, 1]`.
    ///
    /// Newton iteration inside a shrinking bracket, falling back to bisection
    /// whenever the Newton step leaves the bracket. Iterates until the update
    /// is below a few ulps of `u`, which is much tighter than `1e-14`
    /// absolute near the neutral fixed point.
    pub fn left_inverse_unchecked(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        if y >= 1.0 {
            return 0.5;
        }
        let a = self.alpha;
        let mut hi = y.min(0.5);
        // T(u) <= u (1 + (2 hi)^alpha) gives a lower bound that is already
        // accurate to O(y^(1 + 2 alpha)) near 0.
        let mut lo = y / (1.0 + (2.0 * hi).powf(a));
        let mut u = lo;
        for _ in 0..200 {
            let p = (2.0 * u).powf(a);
            let f = u + u * p - y;
            if f == 0.0 {
                return u;
            }
            if f < 0.0 {
                lo = lo.max(u);
            } else {
                hi = hi.min(u);
            }
            let mut next = u - f / (1.0 + (1.0 + a) * p);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let done = (next - u).abs() <= 4.0 * f64::EPSILON * u || hi - lo <= f64::EPSILON * hi;
            u = next;
            if done {
                return u;
            }
        }
        u
    }
}

fn check_point(x: f64) -> Result<()> {
    if x > 0.0 && x <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "x",
            value: x,
            domain: "(0, 1]",
        })
    }
}

/// `T(x)`; the left branch owns `x = 1/2`.
pub fn apply_map(x: f64, params: &MapParams) -> Result<f64> {
    check_point(x)?;
    Ok(params.step(x))
}

/// `T'(x)`, which is `> 1` for every `x > 0`.
pub fn derivative(x: f64, params: &MapParams) -> Result<f64> {
    check_point(x)?;
    Ok(params.derivative_unchecked(x))
}

/// The unique `u` in `(0, 1/2]` with `T(u) = y`.
pub fn left_inverse(y: f64, params: &MapParams) -> Result<f64> {
    check_point(y)?;
    Ok(params.left_inverse_unchecked(y))
}

/// Streams `x_k = T^k(x0)` for `k = 1..=steps` to `visit(k, x_k)` and
/// returns the final state.
pub fn iterate_orbit<F>(x0: f64, steps: usize, params: &MapParams, mut visit: F) -> Result<f64>
where
    F: FnMut(usize, f64),
{
    check_point(x0)?;
    let mut x = x0;
    for k in 1..=steps {
        x = params.step(x);
        visit(k, x);
    }
    Ok(x)
}

/// Smallest `n >= 1` with `T^n(x)` in `Y = (1/2, 1]`.
pub fn first_return_time(x: f64, params: &MapParams, cap: usize) -> Result<ReturnTime> {
    if !(x > 0.5 && x <= 1.0) {
        return Err(Error::Domain {
            what: "x",
            value: x,
            domain: "(1/2, 1]",
        });
    }
    let mut y = x;
    for n in 1..=cap {
        y = params.step(y);
        if y > 0.5 {
            return Ok(ReturnTime::Returned(n));
        }
    }
    Ok(ReturnTime::Overflow)
}
