//! Terminal-guidance optimal control solved by sequential convexification.
//!
//! The horizon `[τ, t_f]` is split into a fixed grid with zero-order-hold
//! inputs and one RK4 step per interval. Each iteration linearizes the RK4
//! map about the incumbent, condenses the terminal position into a linear
//! function of the inputs, and solves the resulting box-constrained QP
//! through its three-dimensional dual (see [`qp`]). A trust region on the
//! predicted state deviation scales the step, and a merit function decides
//! acceptance.

pub mod probe;
pub mod qp;

use nalgebra::Matrix3x6;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    rk4_step_linearized, DynamicsParams, IsoElements, IsoSnapshot, Mat3, SpacecraftState,
    StepJacobians, Vec3, Vec6,
};
use crate::error::{Error, Result};
use qp::BoxQp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminalMode {
    /// `c0 ||p(t_f) - ρ||²` added to the cost.
    Penalty,
    /// `p(t_f) = ρ` enforced as a constraint.
    Hard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    /// Terminal penalty weight (N² s per km², penalty mode only).
    pub c0: f64,
    /// Control-effort weight on `∫ ||u||² dt`.
    pub c1: f64,
    pub dt_grid: f64,
    pub terminal_mode: TerminalMode,
    pub max_iter: usize,
    /// Convergence threshold on the accepted input change (N).
    pub tol_du: f64,
    /// Terminal position tolerance in hard mode (km).
    pub feas_tol: f64,
    /// Initial trust radius on the predicted state deviation (inf-norm).
    pub trust_radius0: f64,
    pub trust_shrink: f64,
    pub trust_grow: f64,
    pub trust_min: f64,
    /// Residual tolerance of the QP subproblem.
    pub qp_tol: f64,
    /// Solve a single QP about the cold-start prediction and stop.
    pub single_convexification: bool,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            c0: 0.0,
            c1: 1.0,
            dt_grid: 60.0,
            terminal_mode: TerminalMode::Hard,
            max_iter: 60,
            tol_du: 1e-6,
            feas_tol: 1e-6,
            trust_radius0: 100.0,
            trust_shrink: 0.5,
            trust_grow: 1.5,
            trust_min: 1e-9,
            qp_tol: 1e-9,
            single_convexification: false,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_grid > 0.0) {
            return Err(Error::invalid("dt_grid must be positive"));
        }
        if !(self.c0 >= 0.0 && self.c1 >= 0.0) {
            return Err(Error::invalid("cost weights must be non-negative"));
        }
        if self.terminal_mode == TerminalMode::Penalty && self.c0 == 0.0 {
            return Err(Error::invalid("penalty mode needs c0 > 0"));
        }
        if !(self.trust_radius0 > 0.0 && self.trust_shrink > 0.0 && self.trust_shrink < 1.0 && self.trust_grow >= 1.0) {
            return Err(Error::invalid("trust-region parameters out of range"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpcProblem {
    pub x_hat: SpacecraftState,
    /// Target elements valid at `tau`.
    pub oe_hat: IsoElements,
    pub tau: f64,
    pub t_f: f64,
    pub rho: Vec3,
    /// Spacecraft mass at `tau` (kg).
    pub mass: f64,
    pub cfg: MpcConfig,
    pub dyn_params: DynamicsParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub cost: f64,
    pub defect: f64,
    pub merit: f64,
    pub radius: f64,
    pub step_scale: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct MpcSolution {
    /// Grid nodes `τ = t_0 < ... < t_N = t_f`.
    pub times: Vec<f64>,
    pub u_seq: Vec<Vec3>,
    pub x_seq: Vec<SpacecraftState>,
    pub mass_seq: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub terminal_error: f64,
    pub history: Vec<IterRecord>,
}

impl MpcSolution {
    /// Zero-order-hold input at time `t`.
    pub fn control_at(&self, t: f64) -> Vec3 {
        let n = self.u_seq.len();
        let k = self.times[..n].partition_point(|&tk| tk <= t).saturating_sub(1);
        self.u_seq[k.min(n - 1)]
    }
}

/// The problem grid and the target along it.
struct Grid {
    times: Vec<f64>,
    nodes: Vec<IsoSnapshot>,
    mids: Vec<IsoSnapshot>,
}

impl Grid {
    fn new(p: &MpcProblem) -> Result<Self> {
        let span = p.t_f - p.tau;
        if !(span > 0.0) {
            return Err(Error::invalid(format!("MPC needs tau < t_f (tau {}, t_f {})", p.tau, p.t_f)));
        }
        let n = ((span / p.cfg.dt_grid) - 1e-9).ceil().max(1.0) as usize;
        let mut times: Vec<f64> = (0..n).map(|k| p.tau + k as f64 * p.cfg.dt_grid).collect();
        times.push(p.t_f);
        let nodes = times
            .iter()
            .map(|&t| IsoSnapshot::flow(&p.oe_hat, t - p.tau))
            .collect::<Result<Vec<_>>>()?;
        let mids = times
            .windows(2)
            .map(|w| IsoSnapshot::flow(&p.oe_hat, 0.5 * (w[0] + w[1]) - p.tau))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { times, nodes, mids })
    }

    fn steps(&self) -> usize {
        self.mids.len()
    }

    fn h(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }
}

struct Rollout {
    x: Vec<SpacecraftState>,
    m: Vec<f64>,
    jac: Vec<StepJacobians>,
}

fn rollout(p: &MpcProblem, grid: &Grid, u: &[Vec3]) -> Result<Rollout> {
    let n = grid.steps();
    let mut x = Vec::with_capacity(n + 1);
    let mut m = Vec::with_capacity(n + 1);
    let mut jac = Vec::with_capacity(n);
    x.push(p.x_hat);
    m.push(p.mass);
    for k in 0..n {
        let (xn, mn, j) = rk4_step_linearized(
            grid.times[k],
            &x[k],
            m[k],
            grid.h(k),
            [&grid.nodes[k], &grid.mids[k], &grid.nodes[k + 1]],
            &u[k],
            &p.dyn_params,
        )?;
        x.push(xn);
        m.push(mn);
        jac.push(j);
    }
    Ok(Rollout { x, m, jac })
}

struct Evaluated {
    u: Vec<Vec3>,
    roll: Rollout,
    cost: f64,
    defect: Vec3,
}

fn evaluate(p: &MpcProblem, grid: &Grid, u: Vec<Vec3>) -> Result<Evaluated> {
    let roll = rollout(p, grid, &u)?;
    let defect = roll.x[grid.steps()].p - p.rho;
    let mut cost: f64 = (0..grid.steps()).map(|k| p.cfg.c1 * grid.h(k) * u[k].norm_squared()).sum();
    if p.cfg.terminal_mode == TerminalMode::Penalty {
        cost += p.cfg.c0 * defect.norm_squared();
    }
    Ok(Evaluated { u, roll, cost, defect })
}

/// Terminal-position sensitivities `S_k = ∂p_N/∂u_k` by a backward sweep.
fn sensitivities(jac: &[StepJacobians]) -> Vec<Mat3> {
    let mut p = Matrix3x6::<f64>::zeros();
    p.fixed_view_mut::<3, 3>(0, 0).copy_from(&Mat3::identity());
    let mut s = vec![Mat3::zeros(); jac.len()];
    for k in (0..jac.len()).rev() {
        s[k] = p * jac[k].1;
        p *= jac[k].0;
    }
    s
}

/// Largest inf-norm state deviation predicted by the linear model.
fn predicted_deviation(jac: &[StepJacobians], du: &[Vec3]) -> f64 {
    let mut dev = Vec6::zeros();
    let mut worst: f64 = 0.0;
    for (j, d) in jac.iter().zip(du) {
        dev = j.0 * dev + j.1 * d;
        worst = worst.max(dev.amax());
    }
    worst
}

/// Solves the problem from a cold start (zero input, ballistic arc).
pub fn solve(problem: &MpcProblem) -> Result<MpcSolution> {
    solve_warm(problem, None)
}

/// Solves the problem starting from `guess`, resampled onto the grid.
pub fn solve_warm(problem: &MpcProblem, guess: Option<&[Vec3]>) -> Result<MpcSolution> {
    let p = problem;
    p.cfg.validate()?;
    p.dyn_params.validate()?;
    if !p.x_hat.is_finite() || !p.rho.iter().all(|c| c.is_finite()) || !(p.mass > 0.0) {
        return Err(Error::invalid("MPC inputs must be finite with positive mass"));
    }
    let grid = Grid::new(p)?;
    let n = grid.steps();
    let u_max = p.dyn_params.u_max;
    let u0: Vec<Vec3> = (0..n)
        .map(|k| {
            guess
                .and_then(|g| g.get(k))
                .map(|u| p.dyn_params.clip(u))
                .unwrap_or_else(Vec3::zeros)
        })
        .collect();
    let hard = p.cfg.terminal_mode == TerminalMode::Hard;
    // A zero effort weight leaves the QP without curvature; a tiny floor keeps
    // the minimum-norm selection well defined.
    let weights: Vec<f64> = (0..n).map(|k| p.cfg.c1.max(1e-12) * grid.h(k)).collect();

    let mut inc = evaluate(p, &grid, u0)?;
    let mut radius = if p.cfg.single_convexification { f64::INFINITY } else { p.cfg.trust_radius0 };
    let mut mu: f64 = 0.0;
    let mut lambda = Vec3::zeros();
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let merit = |e: &Evaluated, mu: f64| if hard { e.cost + mu * e.defect.norm() } else { e.cost };

    while iterations < p.cfg.max_iter {
        iterations += 1;
        let s = sensitivities(&inc.roll.jac);
        let linear_part: Vec3 = s.iter().zip(&inc.u).map(|(sk, uk)| sk * uk).sum();
        let qp = BoxQp {
            s: &s,
            w: &weights,
            d: linear_part - inc.defect,
            u_max,
            penalty: if hard { None } else { Some(p.cfg.c0) },
            tol: p.cfg.qp_tol,
            max_iter: 200,
        };
        let sol = qp.solve(lambda)?;
        lambda = sol.lambda;
        let du: Vec<Vec3> = sol.u.iter().zip(&inc.u).map(|(w, u)| w - u).collect();
        let dev = predicted_deviation(&inc.roll.jac, &du);
        let eta = if dev > radius { radius / dev } else { 1.0 };
        let cand_u: Vec<Vec3> = inc
            .u
            .iter()
            .zip(&du)
            .map(|(u, d)| (u + d * eta).map(|c| c.clamp(-u_max, u_max)))
            .collect();
        let cand = evaluate(p, &grid, cand_u)?;
        if hard {
            mu = mu.max(1.5 * lambda.norm());
        }
        let step = du.iter().map(|d| d.amax()).fold(0.0, f64::max) * eta;
        let (m_old, m_new) = (merit(&inc, mu), merit(&cand, mu));
        let accepted = p.cfg.single_convexification || m_new <= m_old + 1e-14 * m_old.abs();
        history.push(IterRecord {
            cost: cand.cost,
            defect: cand.defect.norm(),
            merit: m_new,
            radius,
            step_scale: eta,
            accepted,
        });
        if accepted {
            inc = cand;
            radius *= p.cfg.trust_grow;
            let feasible = !hard || inc.defect.norm() <= p.cfg.feas_tol;
            if p.cfg.single_convexification || (step < p.cfg.tol_du && feasible) {
                converged = true;
                break;
            }
        } else {
            radius *= p.cfg.trust_shrink;
            if radius < p.cfg.trust_min {
                break;
            }
        }
    }
    if hard && inc.defect.norm() > p.cfg.feas_tol {
        converged = false;
    }
    Ok(MpcSolution {
        times: grid.times,
        terminal_error: inc.defect.norm(),
        cost: inc.cost,
        u_seq: inc.u,
        x_seq: inc.roll.x,
        mass_seq: inc.roll.m,
        iterations,
        converged,
        history,
    })
}

/// Previous solution resampled (zero-order hold) onto a grid starting at `tau`.
pub fn shifted_guess(prev: &MpcSolution, tau: f64, dt_grid: f64, t_f: f64) -> Vec<Vec3> {
    let n = (((t_f - tau) / dt_grid) - 1e-9).ceil().max(1.0) as usize;
    (0..n).map(|k| prev.control_at(tau + k as f64 * dt_grid)).collect()
}

/// Receding-horizon policy: first input of a cold-started solve at `τ = t`.
#[allow(clippy::too_many_arguments)]
pub fn mpc_policy(
    x_hat: &SpacecraftState,
    oe_hat: &IsoElements,
    t: f64,
    t_f: f64,
    rho: &Vec3,
    mass: f64,
    cfg: &MpcConfig,
    dyn_params: &DynamicsParams,
) -> Result<Vec3> {
    let sol = solve(&MpcProblem {
        x_hat: *x_hat,
        oe_hat: *oe_hat,
        tau: t,
        t_f,
        rho: *rho,
        mass,
        cfg: *cfg,
        dyn_params: *dyn_params,
    })?;
    Ok(sol.u_seq[0])
}

#[cfg(test)]
mod tests;
