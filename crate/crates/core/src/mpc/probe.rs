//! Empirical Lipschitz estimates from sampled input pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{solve, MpcProblem};
use crate::dynamics::{SpacecraftState, Vec3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    /// Largest observed `||f(a) - f(b)|| / ||a - b||`.
    pub estimate: f64,
    /// Running maximum after each pair, to judge stabilization.
    pub running_max: Vec<f64>,
    /// Pairs whose evaluation failed and were skipped.
    pub skipped: usize,
}

impl LipschitzEstimate {
    /// Relative growth of the running maximum over the second half of the
    /// samples. Small values mean the estimate has stabilized.
    pub fn late_growth(&self) -> f64 {
        let n = self.running_max.len();
        if n < 2 {
            return f64::INFINITY;
        }
        let mid = self.running_max[n / 2 - n.is_multiple_of(2) as usize];
        (self.estimate - mid) / self.estimate.max(f64::MIN_POSITIVE)
    }
}

/// Random unit direction scaled per component.
fn direction(rng: &mut ChaCha8Rng, scale: &[f64]) -> Vec<f64> {
    let g: Vec<f64> = scale.iter().map(|_| rng.sample(StandardNormal)).collect();
    let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    g.iter().zip(scale).map(|(x, s)| x / n * s).collect()
}

/// Probes `f` with `n_pairs` random pairs.
///
/// Each base point is `center` offset by a random direction scaled by
/// `spread`, and its partner is offset from it by a direction scaled by
/// `delta`. Failing evaluations are skipped and counted.
pub fn lipschitz_probe<F>(
    mut f: F,
    center: &[f64],
    spread: &[f64],
    delta: &[f64],
    n_pairs: usize,
    seed: u64,
) -> Result<LipschitzEstimate>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if center.len() != spread.len() || center.len() != delta.len() {
        return Err(Error::Dimension {
            expected: center.len(),
            got: spread.len().min(delta.len()),
        });
    }
    if n_pairs == 0 || delta.iter().all(|&d| d == 0.0) {
        return Err(Error::invalid("probe needs n_pairs > 0 and a nonzero delta"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    let mut running_max = Vec::with_capacity(n_pairs);
    let mut skipped = 0;
    for _ in 0..n_pairs {
        let off = direction(&mut rng, spread);
        let step = direction(&mut rng, delta);
        let a: Vec<f64> = center.iter().zip(&off).map(|(c, o)| c + o).collect();
        let b: Vec<f64> = a.iter().zip(&step).map(|(x, s)| x + s).collect();
        match (f(&a), f(&b)) {
            (Ok(fa), Ok(fb)) => {
                let num = fa.iter().zip(&fb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                let den = step.iter().map(|s| s * s).sum::<f64>().sqrt();
                if den > 0.0 {
                    best = best.max(num / den);
                }
            }
            _ => skipped += 1,
        }
        running_max.push(best);
    }
    Ok(LipschitzEstimate { estimate: best, running_max, skipped })
}

/// Lipschitz estimate of the first MPC input with respect to `(p, v)`.
///
/// Position offsets are in km and velocity offsets in km/s, so the estimate
/// mixes units exactly as the 6-vector norm does.
pub fn mpc_lipschitz_probe(
    problem: &MpcProblem,
    spread: [f64; 2],
    delta: [f64; 2],
    n_pairs: usize,
    seed: u64,
) -> Result<LipschitzEstimate> {
    let x = problem.x_hat.to_vector();
    let widen = |s: [f64; 2]| [s[0], s[0], s[0], s[1], s[1], s[1]];
    lipschitz_probe(
        |z| {
            let x_hat = SpacecraftState::new(Vec3::new(z[0], z[1], z[2]), Vec3::new(z[3], z[4], z[5]));
            let sol = solve(&MpcProblem { x_hat, ..*problem })?;
            Ok(sol.u_seq[0].iter().copied().collect())
        },
        x.as_slice(),
        &widen(spread),
        &widen(delta),
        n_pairs,
        seed,
    )
}
