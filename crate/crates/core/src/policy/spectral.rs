//! Largest singular value by power iteration.

use nalgebra::{DMatrix, DVector};

pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITER: usize = 200;

/// Top singular triple `Ω v = σ u`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralInfo {
    pub sigma: f64,
    pub u: DVector<f64>,
    pub v: DVector<f64>,
    pub iterations: usize,
    /// False when power iteration stalled and a dense SVD was used instead.
    pub by_power_iteration: bool,
}

fn dense_top(m: &DMatrix<f64>) -> SpectralInfo {
    let svd = m.clone().svd(true, true);
    let (k, &sigma) = svd
        .singular_values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("matrix is non-empty");
    let u = svd.u.as_ref().expect("requested").column(k).into_owned();
    let v = svd.v_t.as_ref().expect("requested").row(k).transpose();
    SpectralInfo {
        sigma,
        u,
        v,
        iterations: 0,
        by_power_iteration: false,
    }
}

/// Power iteration on `ΩᵀΩ` from the normalized all-ones vector.
///
/// Stops when both the singular value and the right vector change by less
/// than [`POWER_TOL`] (relative). A zero matrix returns `σ = 0`. If the
/// iteration stalls (tiny spectral gap, or a start vector in the null
/// space) the result falls back to a dense SVD so gradients stay exact.
pub fn power_iteration(m: &DMatrix<f64>) -> SpectralInfo {
    let (rows, cols) = m.shape();
    if m.iter().all(|&x| x == 0.0) {
        return SpectralInfo {
            sigma: 0.0,
            u: DVector::zeros(rows),
            v: DVector::zeros(cols),
            iterations: 0,
            by_power_iteration: true,
        };
    }
    let mut v = DVector::from_element(cols, 1.0 / (cols as f64).sqrt());
    let mut sigma = 0.0;
    for it in 1..=POWER_MAX_ITER {
        let mut u = m * &v;
        let un = u.norm();
        if un == 0.0 {
            break;
        }
        u /= un;
        let mut w = m.transpose() * &u;
        let s = w.norm();
        w /= s;
        let dv = (&w - &v).amax();
        let ds = (s - sigma).abs();
        v = w;
        sigma = s;
        if ds <= POWER_TOL * s && dv <= POWER_TOL {
            return SpectralInfo {
                sigma,
                u,
                v,
                iterations: it,
                by_power_iteration: true,
            };
        }
    }
    dense_top(m)
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    power_iteration(m).sigma
}
