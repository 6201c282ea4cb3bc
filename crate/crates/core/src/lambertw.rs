//! Lower real branch `W₋₁` of the Lambert W function.
//!
//! For `x ∈ [−1/e, 0)`, `W₋₁(x)` is the unique `w ≤ −1` with `w·eʷ = x`.
//! The solver works on `y = ln(−x)` and finds the root of
//! `w + ln(−w) = y`, which stays well scaled even when `x` underflows.

use crate::error::{Error, Result};
use crate::scalar::Real;

const MAX_ITERATIONS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambertResult<T> {
    /// `W₋₁(x) ≤ −1`.
    pub value: T,
    /// Halley steps taken (0 on the branch-point series path).
    pub iterations: usize,
    /// `|value·e^value − x|`.
    pub residual: T,
}

/// Evaluates `W₋₁(x)` for `−1/e ≤ x < 0`.
pub fn lambert_w_minus1<T: Real>(x: T) -> Result<LambertResult<T>> {
    let inv_e = T::E().recip();
    if !(x >= -inv_e && x < T::zero()) {
        return Err(Error::LambertDomain(x.to_f64_lossy()));
    }
    if x == -inv_e {
        return Ok(LambertResult {
            value: -T::one(),
            iterations: 0,
            residual: T::zero(),
        });
    }
    // distance to the branch point, scaled: 1 + e·x ∈ (0, 1)
    let gap = T::one() + T::E() * x;
    let (value, iterations) = solve(x.neg().ln(), gap, x + inv_e <= T::lit(1e-8));
    Ok(LambertResult {
        value,
        iterations,
        residual: (value * value.exp() - x).abs(),
    })
}

/// Evaluates `W₋₁(−e^y)` for `y ≤ −1` without forming `−e^y`.
///
/// The reported residual is `|w + ln(−w) − y|`, the log-space analogue.
pub fn lambert_w_minus1_of_neg_exp<T: Real>(y: T) -> Result<LambertResult<T>> {
    if !(y <= -T::one()) {
        return Err(Error::LambertDomain(-(y.to_f64_lossy().exp())));
    }
    if y == -T::one() {
        return Ok(LambertResult {
            value: -T::one(),
            iterations: 0,
            residual: T::zero(),
        });
    }
    let gap = -(y + T::one()).exp_m1();
    let (value, iterations) = solve(y, gap, gap <= T::E() * T::lit(1e-8));
    Ok(LambertResult {
        value,
        iterations,
        residual: (value + value.neg().ln() - y).abs(),
    })
}

/// Branch-point expansion in `p = √(2(1 + e·x))`, taken on the `w ≤ −1` side.
fn branch_series<T: Real>(gap: T) -> T {
    let p = (T::lit(2.0) * gap.max(T::zero())).sqrt();
    let p2 = p * p;
    -T::one() - p - p2 / T::lit(3.0) - T::lit(11.0 / 72.0) * p2 * p - T::lit(43.0 / 540.0) * p2 * p2
}

/// `W₋₁(−e^y)` given both `y` and `gap = 1 − e^(y+1)`, for callers that can
/// form the gap without cancellation. Returns the value and Halley steps.
pub(crate) fn w_minus1_from_parts<T: Real>(y: T, gap: T) -> (T, usize) {
    if gap <= T::zero() {
        return (-T::one(), 0);
    }
    solve(y, gap, gap <= T::E() * T::lit(1e-8))
}

fn solve<T: Real>(y: T, gap: T, near_branch: bool) -> (T, usize) {
    if near_branch {
        return (branch_series(gap), 0);
    }
    let mut w = if gap < T::lit(0.32) {
        branch_series(gap)
    } else {
        y - (-y).ln()
    };
    w = w.min(-T::one() - T::epsilon());

    let tol = T::lit(8.0) * T::epsilon();
    for iter in 1..=MAX_ITERATIONS {
        // g(w) = w + ln(−w) − y, g' = (w + 1)/w, g'' = −1/w²
        let g = w + (-w).ln() - y;
        let g1 = (w + T::one()) / w;
        let g2 = -(w * w).recip();
        let denom = T::lit(2.0) * g1 * g1 - g * g2;
        let mut next = w - T::lit(2.0) * g * g1 / denom;
        if !next.is_finite() {
            break;
        }
        if next >= -T::one() {
            next = (w - T::one()) / T::lit(2.0);
        }
        let step = (next - w).abs();
        w = next;
        if step <= tol * w.abs() {
            return (w, iter);
        }
    }
    (w, MAX_ITERATIONS)
}
