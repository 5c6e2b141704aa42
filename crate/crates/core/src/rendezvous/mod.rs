//! The online terminal loop and the baselines it is compared against.
//!
//! Every controller runs on the same truth model: the relative state is
//! integrated with RK4 under a zero-order-hold input, the target follows its
//! exact two-body flow, and the controller only sees a noisy estimate drawn
//! once per control interval.

mod log;
mod sweep;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use log::{median, Mode, RunLog, RunSummary, StepRecord, RUNLOG_COLUMNS, RUNLOG_HEADER};
pub use sweep::{run_seed, DEFAULT_CONTROL_INTERVALS, sweep_control_interval, summarize, SweepOutput, SweepRow, SweepSpec};

use crate::bounds::{delivery_bound_example1_or_quadrature, BoundInputs, BoundReport};
use crate::control::{
    build_desired, feedback_linearizing_u_n, guidance_at, min_norm_control, ControllerGains, DesiredTrajectory,
    TrackingContext, TrajectoryConfig,
};
use crate::dynamics::{
    integrate, iso_flow, DynamicsModel, DynamicsParams, IsoElements, LvlhFrame, MassModel, SpacecraftState, Vec3,
};
use crate::error::{Error, Result};
use crate::mpc::{mpc_policy, MpcConfig};
use crate::policy::SnDnnModel;
use crate::scenario::{estimate, Scenario, UncertaintyProfile};

/// Spacecraft hardware and the physics it flies in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plant {
    pub mass: MassModel,
    /// Per-axis thrust limit (N).
    pub u_max: f64,
    pub model: DynamicsModel,
}

impl Default for Plant {
    fn default() -> Self {
        Self {
            mass: MassModel::default(),
            u_max: 3.0,
            model: DynamicsModel::TwoBodyLvlh,
        }
    }
}

impl Plant {
    pub fn params(&self, iso: &IsoElements) -> DynamicsParams {
        DynamicsParams {
            iso: *iso,
            mass: self.mass,
            u_max: self.u_max,
            model: self.model,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    /// Control interval (s).
    pub dt_ctrl: f64,
    /// Gate threshold on the delivery bound (km). `0` never passes and
    /// `inf` always passes.
    pub threshold: f64,
    /// Latch at the first control time `>= t_s` instead of evaluating the gate.
    pub t_s_override: Option<f64>,
    /// Initial flags: a trajectory is available / the min-norm law is latched.
    pub flag_a: bool,
    pub flag_b: bool,
    /// RK4 step of the truth integration (s).
    pub step_integrate: f64,
    /// RK4 steps of trajectory integration granted per control interval.
    pub build_steps_per_interval: usize,
    pub trajectory: TrajectoryConfig,
    /// Inflation factor of the estimation-error envelope in the gate.
    pub k_e: f64,
    /// State sensitivity of the tracking force (kN per unit error). `None`
    /// uses `m_f (λ̄ + α)`.
    pub l_k: Option<f64>,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            dt_ctrl: 60.0,
            threshold: 1.0,
            t_s_override: None,
            flag_a: false,
            flag_b: false,
            step_integrate: 10.0,
            build_steps_per_interval: 1000,
            trajectory: TrajectoryConfig { step: 10.0, min_tgo: 1.0 },
            k_e: 10.0,
            l_k: None,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_ctrl > 0.0) || !self.dt_ctrl.is_finite() {
            return Err(Error::invalid("dt_ctrl must be positive"));
        }
        if !(self.threshold >= 0.0) {
            return Err(Error::invalid("threshold must be non-negative or infinite"));
        }
        if !(self.step_integrate > 0.0) || self.build_steps_per_interval == 0 {
            return Err(Error::invalid("integration step and build budget must be positive"));
        }
        if !(self.trajectory.step > 0.0) || !(self.trajectory.min_tgo > 0.0) {
            return Err(Error::invalid("trajectory step and min_tgo must be positive"));
        }
        if !(self.k_e >= 1.0) {
            return Err(Error::invalid("k_e must be at least 1"));
        }
        if self.l_k.is_some_and(|l| !(l >= 0.0)) {
            return Err(Error::invalid("l_k must be non-negative"));
        }
        if self.flag_b && !self.flag_a {
            return Err(Error::invalid("flag_b requires flag_a"));
        }
        Ok(())
    }
}

/// Controller evaluated once per control interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Controller {
    /// Learned guidance with bound-gated min-norm tracking.
    NeuralRendezvous,
    /// Learned guidance alone.
    SnDnn,
    /// `u = −K_p(p̂ − p_d) − K_d(ṗ̂ − ṗ_d)` about a trajectory fixed at `t = 0`.
    /// Gains in N/km and N/(km/s).
    Pd { kp: f64, kd: f64 },
    /// Feedback-linearizing `u_n` about a trajectory fixed at `t = 0`.
    Robust,
    /// One convex QP per step about the ballistic prediction.
    LinearMpc(MpcConfig),
}

impl Controller {
    pub fn name(&self) -> &'static str {
        match self {
            Controller::NeuralRendezvous => "NR",
            Controller::SnDnn => "SNDNN",
            Controller::Pd { .. } => "PD",
            Controller::Robust => "ROBUST",
            Controller::LinearMpc(_) => "LINMPC",
        }
    }

    fn uses_fixed_trajectory(&self) -> bool {
        matches!(self, Controller::Pd { .. } | Controller::Robust)
    }
}

/// Everything a run needs besides the controller.
#[derive(Debug, Clone, Copy)]
pub struct RunSetup<'a> {
    pub scenario: &'a Scenario,
    pub model: &'a SnDnnModel,
    pub gains: ControllerGains,
    pub profile: &'a UncertaintyProfile,
    pub plant: Plant,
    pub cfg: LoopConfig,
    /// Seed of the navigation-noise stream.
    pub seed: u64,
}

impl RunSetup<'_> {
    fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        self.gains.validate()?;
        self.plant.params(&self.scenario.iso).validate()?;
        if !(self.scenario.t_f > 0.0) {
            return Err(Error::invalid("scenario t_f must be positive"));
        }
        Ok(())
    }

    fn build(&self, x_hat: &SpacecraftState, oe_hat: &IsoElements, mass: f64, t: f64) -> Result<DesiredTrajectory> {
        let sc = self.scenario;
        build_desired(
            self.model,
            x_hat,
            oe_hat,
            mass,
            t,
            sc.t_f,
            &sc.rho,
            &self.plant.params(&sc.iso),
            &self.cfg.trajectory,
        )
    }

    /// Control intervals needed to integrate a trajectory from `t` within the budget.
    fn build_intervals(&self, t: f64) -> usize {
        let per_pass = ((self.scenario.t_f - t) / self.cfg.trajectory.step - 1e-9).ceil().max(1.0) as usize;
        (2 * per_pass).div_ceil(self.cfg.build_steps_per_interval).max(1)
    }

    fn guidance(&self, x_hat: &SpacecraftState, frame: &LvlhFrame, oe_hat: &IsoElements, t: f64) -> Result<Vec3> {
        let sc = self.scenario;
        guidance_at(
            self.model,
            x_hat,
            frame,
            oe_hat,
            t,
            &sc.rho,
            sc.t_f,
            self.cfg.trajectory.min_tgo,
            self.plant.model,
        )
    }

    /// Right-hand side of the delivery bound with `t_s = t`.
    fn gate_bound(&self, traj: &DesiredTrajectory, x_hat: &SpacecraftState, t: f64) -> Result<BoundReport> {
        let d = traj.at(t)?;
        let (lambda_min, lambda_max) = self.gains.lambda_bounds();
        let m_f = *traj.mass.last().expect("trajectory is non-empty");
        let l_k = self.cfg.l_k.unwrap_or(m_f * (lambda_max + self.gains.alpha));
        let inp = BoundInputs {
            alpha: self.gains.alpha,
            lambda_min,
            lambda_max,
            l_k,
            m_f,
            t_s: t,
            t_f: self.scenario.t_f,
            p_err_s: (x_hat.p - d.p).norm(),
            x_err_s: (x_hat.to_vector() - d.state().to_vector()).norm(),
            ..BoundInputs::default()
        }
        .with_envelope(&self.profile.envelope(t), self.cfg.k_e);
        delivery_bound_example1_or_quadrature(&inp)
    }
}

/// Trajectory whose integration is being paid for over several intervals.
struct PendingBuild {
    result: Result<DesiredTrajectory>,
    ready_step: usize,
}

struct StepOutcome {
    u: Vec3,
    mode: Mode,
    bound: Option<BoundReport>,
    flagged: bool,
    infeasible: bool,
}

/// Runs one closed loop from `t = 0` to `t_f`.
pub fn run(setup: &RunSetup, controller: &Controller) -> Result<RunLog> {
    run_from(setup, controller, None)
}

/// As [`run`], optionally starting from a trajectory built beforehand.
///
/// With `cfg.flag_a` set the prebuilt trajectory is active from the first
/// step. For the PD and robust baselines it replaces the one built at `t = 0`.
pub fn run_from(setup: &RunSetup, controller: &Controller, prebuilt: Option<DesiredTrajectory>) -> Result<RunLog> {
    setup.validate()?;
    let sc = setup.scenario;
    let cfg = &setup.cfg;
    if cfg.flag_a && prebuilt.is_none() {
        return Err(Error::invalid("flag_a needs a prebuilt trajectory"));
    }
    let params = setup.plant.params(&sc.iso);
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);

    let mut x = sc.x0;
    let mut mass = setup.plant.mass.wet_mass;
    let mut t = 0.0;
    let mut oe = sc.iso;

    let mut active = if cfg.flag_a || controller.uses_fixed_trajectory() { prebuilt } else { None };
    let mut pending: Option<PendingBuild> = None;
    let mut flag_b = cfg.flag_b;
    let mut latch_time = flag_b.then_some(0.0);
    let mut latch_inputs = None;
    let mut builds_started = 0;
    let mut builds_completed = usize::from(active.is_some());
    let mut failures = Vec::new();
    let mut records = Vec::new();
    let mut delta_v = 0.0;
    let mut infeasible_steps = 0;

    let n_steps = ((sc.t_f / cfg.dt_ctrl) - 1e-9).ceil().max(1.0) as usize;
    for k in 0..n_steps {
        let t_next = if k + 1 == n_steps { sc.t_f } else { (k + 1) as f64 * cfg.dt_ctrl };
        let dt = t_next - t;
        let (x_hat, oe_hat) = estimate(&x, &oe, t, setup.profile, &mut rng)?;
        let frame_hat = LvlhFrame::from_elements(&oe_hat)?;

        if k == 0 && controller.uses_fixed_trajectory() && active.is_none() {
            builds_started += 1;
            match setup.build(&x_hat, &oe_hat, mass, t) {
                Ok(tr) => {
                    active = Some(tr);
                    builds_completed += 1;
                }
                Err(e) => failures.push(format!("t = {t}: fixed trajectory build failed: {e}")),
            }
        }

        if matches!(controller, Controller::NeuralRendezvous)
            && !flag_b
            && pending.as_ref().is_some_and(|p| k >= p.ready_step)
        {
            match pending.take().expect("checked").result {
                Ok(tr) => {
                    active = Some(tr);
                    builds_completed += 1;
                }
                Err(e) => failures.push(format!("t = {t}: trajectory build failed: {e}")),
            }
        }

        let clock = Instant::now();
        let out = evaluate(
            setup,
            controller,
            &params,
            active.as_ref(),
            &mut flag_b,
            &x_hat,
            &oe_hat,
            &frame_hat,
            mass,
            t,
            &mut failures,
        );
        let wall_s = clock.elapsed().as_secs_f64();

        // Start the next trajectory from this step's estimate unless tracking
        // has latched or the integration could not finish before t_f.
        if matches!(controller, Controller::NeuralRendezvous) && !flag_b && pending.is_none() {
            let intervals = setup.build_intervals(t);
            if t + intervals as f64 * cfg.dt_ctrl < sc.t_f {
                builds_started += 1;
                pending = Some(PendingBuild {
                    result: setup.build(&x_hat, &oe_hat, mass, t),
                    ready_step: k + intervals,
                });
            }
        }
        if flag_b && latch_time.is_none() {
            latch_time = Some(t);
            latch_inputs = out.bound.as_ref().map(|b| b.inputs);
        }
        if out.infeasible {
            infeasible_steps += 1;
        }
        let raw = out.u;
        let u = params.clip(&raw);
        records.push(StepRecord {
            t,
            truth: x,
            x_hat,
            u,
            mode: out.mode,
            bound: out.bound.as_ref().map(|b| b.value),
            mass,
            wall_s,
            clipped: u != raw,
            flagged: out.flagged,
        });
        delta_v += u.norm() * dt / (1000.0 * mass);

        let arc = integrate(&x, &oe, mass, t, t_next, |_| Ok(u), &params, cfg.step_integrate)?;
        x = arc.last_state();
        mass = arc.last_mass();
        // Flow from t = 0 each time so the target carries no accumulated error.
        oe = iso_flow(&sc.iso, t_next)?;
        t = t_next;
    }

    let walls: Vec<f64> = records.iter().map(|r| r.wall_s).collect();
    let m0 = setup.plant.mass.wet_mass;
    let delta_v_rocket = (mass < m0).then(|| setup.plant.mass.exhaust_speed() * (m0 / mass).ln());
    let summary = RunSummary {
        scenario_id: sc.id,
        controller: controller.name().to_string(),
        seed: setup.seed,
        dt_ctrl: cfg.dt_ctrl,
        delivery_error: (x.p - sc.rho).norm(),
        delta_v,
        delta_v_rocket,
        final_state: x,
        final_mass: mass,
        latch_time,
        latch_inputs,
        latch_bound: latch_time.and_then(|tl| records.iter().find(|r| r.t == tl).and_then(|r| r.bound)),
        builds_started,
        builds_completed,
        infeasible_steps,
        clipped_steps: records.iter().filter(|r| r.clipped).count(),
        failures,
        median_wall_s: median(&walls),
        max_wall_s: walls.iter().copied().fold(0.0, f64::max),
    };
    Ok(RunLog { records, summary })
}

/// One controller call. Failures fall back to the learned guidance, then to zero.
#[allow(clippy::too_many_arguments)]
fn evaluate(
    setup: &RunSetup,
    controller: &Controller,
    params: &DynamicsParams,
    active: Option<&DesiredTrajectory>,
    flag_b: &mut bool,
    x_hat: &SpacecraftState,
    oe_hat: &IsoElements,
    frame_hat: &LvlhFrame,
    mass: f64,
    t: f64,
    failures: &mut Vec<String>,
) -> StepOutcome {
    let plain = |u, mode| StepOutcome {
        u,
        mode,
        bound: None,
        flagged: false,
        infeasible: false,
    };
    let fallback = |failures: &mut Vec<String>, what: &str, e: Error, bound: Option<BoundReport>| {
        failures.push(format!("t = {t}: {what}: {e}"));
        let (u, mode) = match setup.guidance(x_hat, frame_hat, oe_hat, t) {
            Ok(u) => (u, Mode::Sndnn),
            Err(_) => (Vec3::zeros(), Mode::Zero),
        };
        StepOutcome {
            u,
            mode,
            bound,
            flagged: true,
            infeasible: false,
        }
    };
    let track = |traj: &DesiredTrajectory| {
        TrackingContext::new(traj, x_hat, oe_hat, mass, t, &setup.gains, setup.plant.model)
    };

    match controller {
        Controller::SnDnn => match setup.guidance(x_hat, frame_hat, oe_hat, t) {
            Ok(u) => plain(u, Mode::Sndnn),
            Err(e) => fallback(failures, "guidance", e, None),
        },
        Controller::NeuralRendezvous => {
            let Some(traj) = active else {
                return match setup.guidance(x_hat, frame_hat, oe_hat, t) {
                    Ok(u) => plain(u, Mode::Sndnn),
                    Err(e) => fallback(failures, "guidance", e, None),
                };
            };
            let mut bound = None;
            if !*flag_b {
                let cfg = &setup.cfg;
                let pass = if let Some(t_s) = cfg.t_s_override {
                    // The bound is not consulted, but its value at the switch is logged.
                    let pass = t >= t_s;
                    if pass {
                        match setup.gate_bound(traj, x_hat, t) {
                            Ok(b) => bound = Some(b),
                            Err(e) => failures.push(format!("t = {t}: bound at switch: {e}")),
                        }
                    }
                    pass
                } else if cfg.threshold == f64::INFINITY {
                    true
                } else if cfg.threshold > 0.0 {
                    match setup.gate_bound(traj, x_hat, t) {
                        Ok(b) => {
                            let pass = b.value <= cfg.threshold;
                            bound = Some(b);
                            pass
                        }
                        Err(e) => {
                            failures.push(format!("t = {t}: bound gate: {e}"));
                            false
                        }
                    }
                } else {
                    false
                };
                if !pass {
                    return match setup.guidance(x_hat, frame_hat, oe_hat, t) {
                        Ok(u) => StepOutcome { bound, ..plain(u, Mode::Sndnn) },
                        Err(e) => fallback(failures, "guidance", e, bound),
                    };
                }
                *flag_b = true;
            }
            match track(traj).and_then(|ctx| min_norm_control(&ctx, params.u_max)) {
                Ok(out) => StepOutcome { bound, ..plain(out.u, Mode::Minnorm) },
                Err(e) => fallback(failures, "min-norm control", e, bound),
            }
        }
        Controller::Pd { kp, kd } => {
            let Some(traj) = active else {
                return plain(Vec3::zeros(), Mode::Zero);
            };
            match traj.at(t) {
                Ok(d) => plain(-(x_hat.p - d.p) * *kp - (x_hat.v - d.v) * *kd, Mode::Pd),
                Err(e) => {
                    failures.push(format!("t = {t}: PD reference: {e}"));
                    StepOutcome { flagged: true, ..plain(Vec3::zeros(), Mode::Zero) }
                }
            }
        }
        Controller::Robust => {
            let Some(traj) = active else {
                return plain(Vec3::zeros(), Mode::Zero);
            };
            match track(traj).and_then(|ctx| feedback_linearizing_u_n(&ctx)) {
                Ok(u) => plain(u, Mode::Robust),
                Err(e) => {
                    failures.push(format!("t = {t}: robust control: {e}"));
                    StepOutcome { flagged: true, ..plain(Vec3::zeros(), Mode::Zero) }
                }
            }
        }
        Controller::LinearMpc(mpc) => {
            let cfg = MpcConfig {
                single_convexification: true,
                ..*mpc
            };
            let sc = setup.scenario;
            match mpc_policy(x_hat, oe_hat, t, sc.t_f, &sc.rho, mass, &cfg, params) {
                Ok(u) => plain(u, Mode::Mpc),
                Err(e) => {
                    let infeasible = matches!(e, Error::Infeasible { .. });
                    failures.push(format!("t = {t}: MPC: {e}"));
                    StepOutcome {
                        flagged: true,
                        infeasible,
                        ..plain(Vec3::zeros(), Mode::Mpc)
                    }
                }
            }
        }
    }
}
