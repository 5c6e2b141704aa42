//! Box-constrained QP with a three-dimensional coupling constraint.
//!
//! ```text
//! min  Σ_k w_k ||u_k||² (+ c0 ||z||²)
//! s.t. Σ_k S_k u_k - z = d,   |u_k,i| <= u_max
//! ```
//!
//! `z ≡ 0` in hard mode. The dual has only three variables: each `u_k` is the
//! clipped minimizer `clip(-S_kᵀλ / (2 w_k))`, and the concave dual is
//! maximized with a semismooth Newton method. This is far cheaper than a
//! primal active-set method when the horizon has thousands of steps.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

type Vec3 = Vector3<f64>;
type Mat3 = Matrix3<f64>;

pub struct BoxQp<'a> {
    /// Terminal sensitivity of each input.
    pub s: &'a [Mat3],
    /// Positive quadratic weights per input.
    pub w: &'a [f64],
    pub d: Vec3,
    pub u_max: f64,
    /// `Some(c0)` turns the equality into a quadratic penalty.
    pub penalty: Option<f64>,
    /// Tolerance on the coupling residual (units of `d`).
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub u: Vec<Vec3>,
    pub lambda: Vec3,
    /// `Σ S_k u_k - z - d` at the returned point.
    pub residual: Vec3,
    pub iterations: usize,
}

impl<'a> BoxQp<'a> {
    fn primal(&self, lambda: &Vec3) -> Vec<Vec3> {
        self.s
            .iter()
            .zip(self.w)
            .map(|(s, &w)| (-(s.transpose() * lambda) / (2.0 * w)).map(|c| c.clamp(-self.u_max, self.u_max)))
            .collect()
    }

    /// Dual value and gradient (the coupling residual).
    fn dual(&self, lambda: &Vec3) -> (f64, Vec3, Vec<Vec3>) {
        let u = self.primal(lambda);
        let mut value = -lambda.dot(&self.d);
        let mut grad = -self.d;
        for ((s, &w), uk) in self.s.iter().zip(self.w).zip(&u) {
            let su = s * uk;
            value += w * uk.norm_squared() + lambda.dot(&su);
            grad += su;
        }
        if let Some(c0) = self.penalty {
            value -= lambda.norm_squared() / (4.0 * c0);
            grad -= lambda / (2.0 * c0);
        }
        (value, grad, u)
    }

    fn neg_hessian(&self, lambda: &Vec3) -> Mat3 {
        let mut h = Mat3::zeros();
        for (s, &w) in self.s.iter().zip(self.w) {
            let raw = -(s.transpose() * lambda) / (2.0 * w);
            for i in 0..3 {
                if raw[i].abs() < self.u_max {
                    let col = s.column(i);
                    h += col * col.transpose() / (2.0 * w);
                }
            }
        }
        if let Some(c0) = self.penalty {
            h += Mat3::identity() / (2.0 * c0);
        }
        h
    }

    pub fn solve(&self, lambda0: Vec3) -> Result<QpSolution> {
        if self.s.len() != self.w.len() {
            return Err(Error::Dimension {
                expected: self.s.len(),
                got: self.w.len(),
            });
        }
        if self.w.iter().any(|&w| !(w > 0.0)) || !(self.u_max > 0.0) {
            return Err(Error::invalid("QP weights and bound must be positive"));
        }
        let mut lambda = lambda0;
        let (mut value, mut grad, mut u) = self.dual(&lambda);
        for it in 0..self.max_iter {
            if grad.amax() <= self.tol {
                return Ok(QpSolution {
                    u,
                    lambda,
                    residual: grad,
                    iterations: it,
                });
            }
            let h = self.neg_hessian(&lambda);
            let reg = 1e-14 * h.norm().max(1e-300);
            let step = match (h + Mat3::identity() * reg).cholesky() {
                Some(ch) => ch.solve(&grad),
                None => grad / reg,
            };
            let slope = grad.dot(&step);
            let mut t = 1.0;
            let mut accepted = false;
            while t > 1e-20 {
                let cand = lambda + step * t;
                let (v, g, uc) = self.dual(&cand);
                // Accept on sufficient ascent, or on a residual decrease when
                // round-off masks the change in the dual value.
                if v >= value + 1e-4 * t * slope || (g.amax() < grad.amax() && v >= value - 1e-12 * value.abs()) {
                    lambda = cand;
                    value = v;
                    grad = g;
                    u = uc;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if grad.amax() <= 10.0 * self.tol {
            return Ok(QpSolution {
                u,
                lambda,
                residual: grad,
                iterations: self.max_iter,
            });
        }
        // Residual did not vanish: the box cannot reach the target set.
        let axes = (0..3).filter(|&i| grad[i].abs() > self.tol).collect();
        Err(Error::Infeasible {
            residual: [grad.x, grad.y, grad.z],
            axes,
        })
    }
}

/// Largest `aᵀ Σ S_k u_k` over the box; a certificate of infeasibility is
/// any `a` with `aᵀd` above this value.
pub fn reachable_support(s: &[Mat3], u_max: f64, a: &Vec3) -> f64 {
    s.iter().map(|sk| u_max * (sk.transpose() * a).abs().sum()).sum()
}
