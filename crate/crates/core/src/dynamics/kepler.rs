//! Kepler-equation solvers for the elliptic and hyperbolic branches.
//!
//! Both solvers run Newton's method inside a shrinking bracket and fall back
//! to bisection whenever a Newton step would leave it, so convergence is
//! guaranteed for any finite mean anomaly.

use crate::error::{Error, Result};

/// Step tolerance on the anomaly (rad).
pub const KEPLER_TOL: f64 = 1e-13;
/// Iteration cap shared by both branches.
pub const KEPLER_MAX_ITER: usize = 100;

/// Solves `E - e sin E = M` for `0 <= e < 1` and `M` in `[-pi, pi]`.
pub fn solve_elliptic(mean: f64, ecc: f64) -> Result<f64> {
    let f = |x: f64| x - ecc * x.sin() - mean;
    let df = |x: f64| 1.0 - ecc * x.cos();
    // |E - M| <= e for every solution.
    safeguarded_newton(f, df, mean - ecc, mean + ecc, mean)
}

/// Solves `e sinh H - H = M` for `e > 1`.
pub fn solve_hyperbolic(mean: f64, ecc: f64) -> Result<f64> {
    let f = |x: f64| ecc * x.sinh() - x - mean;
    let df = |x: f64| ecc * x.cosh() - 1.0;
    // e sinh H - H >= (e - 1) sinh H for H >= 0, which brackets the root.
    let hi = (mean.abs() / (ecc - 1.0)).asinh();
    let (lo, hi) = if mean >= 0.0 { (0.0, hi) } else { (-hi, 0.0) };
    let guess = (mean / ecc).asinh();
    safeguarded_newton(f, df, lo, hi, guess.clamp(lo, hi))
}

fn safeguarded_newton(
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    mut x: f64,
) -> Result<f64> {
    // f is increasing on both branches, so the sign tells which side to keep.
    for _ in 0..KEPLER_MAX_ITER {
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let newton = x - fx / df(x);
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= KEPLER_TOL * x.abs().max(1.0) {
            return Ok(next);
        }
        x = next;
    }
    let residual = f(x);
    if residual.abs() < 1e-12 * x.abs().max(1.0) {
        return Ok(x);
    }
    Err(Error::Kepler {
        iterations: KEPLER_MAX_ITER,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Plain bisection, used as an independent oracle.
    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn hyperbolic_residual_and_bisection_agree() {
        let ecc = 3.2;
        for &m in &[-40.0, -3.1, -0.2, 0.0, 0.7, 5.5, 123.0] {
            let h = solve_hyperbolic(m, ecc).unwrap();
            assert!((ecc * h.sinh() - h - m).abs() < 1e-12 * m.abs().max(1.0));
            let oracle = bisect(|x| ecc * x.sinh() - x - m, -20.0, 20.0);
            assert!((h - oracle).abs() < 1e-12, "{h} vs {oracle}");
        }
    }

    #[test]
    fn elliptic_high_eccentricity() {
        for &ecc in &[0.0, 0.3, 0.9, 0.999] {
            for k in -10..=10 {
                let m = k as f64 * 0.3;
                let e = solve_elliptic(m, ecc).unwrap();
                assert!((e - ecc * e.sin() - m).abs() < 1e-12);
            }
        }
    }
}
