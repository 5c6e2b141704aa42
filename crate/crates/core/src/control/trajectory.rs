use serde::{Deserialize, Serialize};

use super::guidance_at;
use crate::dynamics::{
    free_accel, input_accel, integrate, iso_flow, DynamicsParams, IsoElements, IsoSnapshot, SpacecraftState, Vec3,
};
use crate::error::{Error, Result};
use crate::policy::SnDnnModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    /// Integration step and grid spacing (s).
    pub step: f64,
    /// Floor on the time to go seen by the policy (s).
    pub min_tgo: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self { step: 1.0, min_tgo: 1.0 }
    }
}

/// Closed-loop learned trajectory that ends exactly at `ρ`.
///
/// Built by integrating the learned policy forward to read the terminal
/// velocity `v_f`, then integrating the same closed loop backward from
/// `[ρ; v_f]`. Mass is integrated alongside so that the nominal input can
/// be converted to acceleration consistently.
#[derive(Debug, Clone)]
pub struct DesiredTrajectory {
    pub t_d: f64,
    pub t_f: f64,
    pub rho: Vec3,
    /// Target estimate at `t_d`; `œ_d(t)` is its exact flow.
    pub oe_td: IsoElements,
    pub times: Vec<f64>,
    pub x: Vec<SpacecraftState>,
    pub mass: Vec<f64>,
    /// `p̈_d` at the grid nodes.
    pub acc: Vec<Vec3>,
    /// `u_ℓ(x_d)` at the grid nodes (N).
    pub u: Vec<Vec3>,
    /// Terminal state `[ρ; v_f]`.
    pub x_f: SpacecraftState,
    /// End of the forward pass, whose velocity defines `v_f`.
    pub forward_end: SpacecraftState,
    pub cfg: TrajectoryConfig,
}

/// Interpolated desired state at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesiredPoint {
    pub p: Vec3,
    pub v: Vec3,
    pub a: Vec3,
    /// Learned guidance along `x_d` (N).
    pub u: Vec3,
    pub mass: f64,
}

impl DesiredPoint {
    pub fn state(&self) -> SpacecraftState {
        SpacecraftState::new(self.p, self.v)
    }
}

/// Builds `x_d` on `[t_d, t_f]` from the estimate at `t_d`.
#[allow(clippy::too_many_arguments)]
pub fn build_desired(
    model: &SnDnnModel,
    x_hat_td: &SpacecraftState,
    oe_hat_td: &IsoElements,
    mass_td: f64,
    t_d: f64,
    t_f: f64,
    rho: &Vec3,
    params: &DynamicsParams,
    cfg: &TrajectoryConfig,
) -> Result<DesiredTrajectory> {
    if !(t_f > t_d) {
        return Err(Error::invalid(format!("desired trajectory needs t_d < t_f, got {t_d} and {t_f}")));
    }
    if !(cfg.step > 0.0) || !(cfg.min_tgo > 0.0) {
        return Err(Error::invalid("trajectory step and min_tgo must be positive"));
    }
    let dm = params.model;
    let policy = |a: &crate::dynamics::PolicyArgs| {
        guidance_at(model, a.x, &a.iso.frame, &a.iso.oe, a.t, rho, t_f, cfg.min_tgo, dm)
    };
    let fwd = integrate(x_hat_td, oe_hat_td, mass_td, t_d, t_f, policy, params, cfg.step)?;
    let forward_end = fwd.last_state();
    let x_f = SpacecraftState::new(*rho, forward_end.v);
    let oe_f = iso_flow(oe_hat_td, t_f - t_d)?;
    let bwd = integrate(&x_f, &oe_f, fwd.last_mass(), t_f, t_d, policy, params, cfg.step)?;

    let n = bwd.t.len();
    let mut times = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    let mut mass = Vec::with_capacity(n);
    let mut acc = Vec::with_capacity(n);
    let mut us = Vec::with_capacity(n);
    for k in (0..n).rev() {
        let (t, xs, m) = (bwd.t[k], bwd.x[k], bwd.mass[k]);
        let snap = IsoSnapshot::new(bwd.oe[k])?;
        let u = guidance_at(model, &xs, &snap.frame, &snap.oe, t, rho, t_f, cfg.min_tgo, dm)?;
        acc.push(free_accel(&xs, &snap.frame, dm)? + input_accel(&u, m));
        us.push(u);
        times.push(t);
        x.push(xs);
        mass.push(m);
    }
    // The backward pass ends at t_d up to round-off; pin the endpoints.
    times[0] = t_d;
    *times.last_mut().expect("non-empty") = t_f;
    Ok(DesiredTrajectory {
        t_d,
        t_f,
        rho: *rho,
        oe_td: *oe_hat_td,
        times,
        x,
        mass,
        acc,
        u: us,
        x_f,
        forward_end,
        cfg: *cfg,
    })
}

/// Quintic Hermite interpolation on `[0, h]` at `s·h` from values, first and
/// second derivatives at both ends. Returns the value and its first two
/// derivatives, so the three are exactly consistent.
fn quintic(y0: [&Vec3; 3], y1: [&Vec3; 3], h: f64, s: f64) -> [Vec3; 3] {
    let (s2, s3, s4, s5) = (s * s, s.powi(3), s.powi(4), s.powi(5));
    // Rows: basis, d/ds, d²/ds². Columns: y0, y0', y0'', y1'', y1', y1.
    let b = [
        [
            1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5,
            s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5,
            0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5,
            0.5 * s3 - s4 + 0.5 * s5,
            -4.0 * s3 + 7.0 * s4 - 3.0 * s5,
            10.0 * s3 - 15.0 * s4 + 6.0 * s5,
        ],
        [
            -30.0 * s2 + 60.0 * s3 - 30.0 * s4,
            1.0 - 18.0 * s2 + 32.0 * s3 - 15.0 * s4,
            s - 4.5 * s2 + 6.0 * s3 - 2.5 * s4,
            1.5 * s2 - 4.0 * s3 + 2.5 * s4,
            -12.0 * s2 + 28.0 * s3 - 15.0 * s4,
            30.0 * s2 - 60.0 * s3 + 30.0 * s4,
        ],
        [
            -60.0 * s + 180.0 * s2 - 120.0 * s3,
            -36.0 * s + 96.0 * s2 - 60.0 * s3,
            1.0 - 9.0 * s + 18.0 * s2 - 10.0 * s3,
            3.0 * s - 12.0 * s2 + 10.0 * s3,
            -24.0 * s + 84.0 * s2 - 60.0 * s3,
            60.0 * s - 180.0 * s2 + 120.0 * s3,
        ],
    ];
    // Column j carries h^order[j]; derivative d divides by h^d. Folding the
    // two into one power keeps the nodes bit-exact.
    let order = [0, 1, 2, 2, 1, 0];
    let ys = [y0[0], y0[1], y0[2], y1[2], y1[1], y1[0]];
    let mut out = [Vec3::zeros(); 3];
    for (d, row) in b.iter().enumerate() {
        for j in 0..6 {
            out[d] += ys[j] * (row[j] * h.powi(order[j] - d as i32));
        }
    }
    out
}

impl DesiredTrajectory {
    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let slack = 1e-9 * (self.t_f - self.t_d).max(1.0);
        if !(t >= self.t_d - slack && t <= self.t_f + slack) {
            return Err(Error::invalid(format!(
                "t = {t} outside the desired trajectory [{}, {}]",
                self.t_d, self.t_f
            )));
        }
        let t = t.clamp(self.t_d, self.t_f);
        let k = self.times.partition_point(|&tk| tk <= t).clamp(1, self.times.len() - 1) - 1;
        let h = self.times[k + 1] - self.times[k];
        Ok((k, ((t - self.times[k]) / h).clamp(0.0, 1.0)))
    }

    /// `p_d` from one quintic Hermite piece per interval, with `ṗ_d` and
    /// `p̈_d` its exact derivatives; `u_ℓ(x_d)` and mass are linear.
    pub fn at(&self, t: f64) -> Result<DesiredPoint> {
        let (k, s) = self.locate(t)?;
        let h = self.times[k + 1] - self.times[k];
        let (a, b) = (&self.x[k], &self.x[k + 1]);
        let [p, v, acc] = quintic([&a.p, &a.v, &self.acc[k]], [&b.p, &b.v, &self.acc[k + 1]], h, s);
        let u = self.u[k] * (1.0 - s) + self.u[k + 1] * s;
        let mass = self.mass[k] * (1.0 - s) + self.mass[k + 1] * s;
        Ok(DesiredPoint { p, v, a: acc, u, mass })
    }

    /// `œ_d(t)`: exact flow of the estimate used to build the trajectory.
    pub fn oe_at(&self, t: f64) -> Result<IsoElements> {
        iso_flow(&self.oe_td, t - self.t_d)
    }

    pub fn start_state(&self) -> SpacecraftState {
        self.x[0]
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}
