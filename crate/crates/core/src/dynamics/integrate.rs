//! Fixed-step classical RK4 for the relative state and spacecraft mass.
//!
//! The target is not integrated: its elements at any time come from the
//! exact two-body flow, measured from the elements at the initial time so
//! that no error accumulates along the arc.

use nalgebra::Matrix6x3;

use super::{
    drift, drift_jacobian, input_accel, iso_flow, DynamicsParams, IsoElements, LvlhFrame, Mat6,
    SpacecraftState, Vec3, Vec6,
};
use crate::error::{Error, Result};

/// Target elements together with the frame they induce.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsoSnapshot {
    pub oe: IsoElements,
    pub frame: LvlhFrame,
}

impl IsoSnapshot {
    pub fn new(oe: IsoElements) -> Result<Self> {
        Ok(Self {
            frame: LvlhFrame::from_elements(&oe)?,
            oe,
        })
    }

    /// Snapshot of `oe0` flowed by `dt` seconds.
    pub fn flow(oe0: &IsoElements, dt: f64) -> Result<Self> {
        Self::new(iso_flow(oe0, dt)?)
    }
}

/// Everything a feedback law may look at during one RK4 stage.
#[derive(Debug, Clone, Copy)]
pub struct PolicyArgs<'a> {
    pub t: f64,
    pub x: &'a SpacecraftState,
    pub iso: &'a IsoSnapshot,
    pub mass: f64,
}

/// Sampled solution of the closed loop, including the step-start nodes.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<SpacecraftState>,
    pub mass: Vec<f64>,
    pub oe: Vec<IsoElements>,
}

impl Trajectory {
    pub fn last_state(&self) -> SpacecraftState {
        *self.x.last().expect("trajectory has at least the initial node")
    }

    pub fn last_mass(&self) -> f64 {
        *self.mass.last().expect("trajectory has at least the initial node")
    }
}

fn checked_policy<P>(policy: &mut P, args: &PolicyArgs) -> Result<Vec3>
where
    P: FnMut(&PolicyArgs) -> Result<Vec3>,
{
    let u = policy(args)?;
    if u.iter().all(|c| c.is_finite()) {
        Ok(u)
    } else {
        Err(Error::NonFinite {
            t: args.t,
            what: "control returned by policy".into(),
        })
    }
}

/// One RK4 step of size `h` (negative for backward integration).
///
/// `isos` holds the target at `t`, `t + h/2` and `t + h`.
pub fn rk4_step<P>(
    t: f64,
    x: &SpacecraftState,
    mass: f64,
    h: f64,
    isos: [&IsoSnapshot; 3],
    policy: &mut P,
    params: &DynamicsParams,
) -> Result<(SpacecraftState, f64)>
where
    P: FnMut(&PolicyArgs) -> Result<Vec3>,
{
    let mm = &params.mass;
    let mut rhs = |tc: f64, y: &Vec6, m: f64, iso: &IsoSnapshot| -> Result<(Vec6, f64)> {
        let xs = SpacecraftState::from_vector(y);
        let u = checked_policy(
            policy,
            &PolicyArgs {
                t: tc,
                x: &xs,
                iso,
                mass: m,
            },
        )?;
        let mut dy = drift(&xs, &iso.frame, params.model)?;
        let a = input_accel(&u, m);
        for k in 0..3 {
            dy[3 + k] += a[k];
        }
        Ok((dy, mm.mass_rate(&u, m)))
    };
    let y0 = x.to_vector();
    let (k1, m1) = rhs(t, &y0, mass, isos[0])?;
    let (k2, m2) = rhs(t + 0.5 * h, &(y0 + k1 * (0.5 * h)), mass + 0.5 * h * m1, isos[1])?;
    let (k3, m3) = rhs(t + 0.5 * h, &(y0 + k2 * (0.5 * h)), mass + 0.5 * h * m2, isos[1])?;
    let (k4, m4) = rhs(t + h, &(y0 + k3 * h), mass + h * m3, isos[2])?;
    let y1 = y0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    let m_next = (mass + (m1 + 2.0 * m2 + 2.0 * m3 + m4) * (h / 6.0)).max(mm.min_mass);
    let x1 = SpacecraftState::from_vector(&y1);
    if !x1.is_finite() {
        return Err(Error::NonFinite {
            t: t + h,
            what: "integrated state".into(),
        });
    }
    Ok((x1, m_next))
}

/// Jacobians of one RK4 step with respect to the start state and the held
/// input: `δx⁺ = A δx + B δu`. Mass sensitivity is neglected.
pub type StepJacobians = (Mat6, Matrix6x3<f64>);

/// RK4 step under a constant input that also returns its Jacobians.
///
/// The state update uses the same operation order as [`rk4_step`] with a
/// constant policy, so both produce identical bits.
pub fn rk4_step_linearized(
    t: f64,
    x: &SpacecraftState,
    mass: f64,
    h: f64,
    isos: [&IsoSnapshot; 3],
    u: &Vec3,
    params: &DynamicsParams,
) -> Result<(SpacecraftState, f64, StepJacobians)> {
    let mm = &params.mass;
    let rhs = |y: &Vec6, m: f64, iso: &IsoSnapshot| -> Result<(Vec6, f64, Mat6, Matrix6x3<f64>)> {
        let xs = SpacecraftState::from_vector(y);
        let mut dy = drift(&xs, &iso.frame, params.model)?;
        let a = input_accel(u, m);
        for k in 0..3 {
            dy[3 + k] += a[k];
        }
        let j = drift_jacobian(&xs.p, &iso.frame, params.model);
        let mut b = Matrix6x3::zeros();
        for k in 0..3 {
            b[(3 + k, k)] = 1.0 / (1000.0 * m);
        }
        Ok((dy, mm.mass_rate(u, m), j, b))
    };
    let y0 = x.to_vector();
    let (k1, m1, j1, b1) = rhs(&y0, mass, isos[0])?;
    let (k2, m2, j2, b2) = rhs(&(y0 + k1 * (0.5 * h)), mass + 0.5 * h * m1, isos[1])?;
    let (k3, m3, j3, b3) = rhs(&(y0 + k2 * (0.5 * h)), mass + 0.5 * h * m2, isos[1])?;
    let (k4, m4, j4, b4) = rhs(&(y0 + k3 * h), mass + h * m3, isos[2])?;
    let y1 = y0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    let m_next = (mass + (m1 + 2.0 * m2 + 2.0 * m3 + m4) * (h / 6.0)).max(mm.min_mass);

    // Forward-mode sensitivities of the stage slopes.
    let id = Mat6::identity();
    let dk1x = j1;
    let dk1u = b1;
    let dk2x = j2 * (id + dk1x * (0.5 * h));
    let dk2u = j2 * dk1u * (0.5 * h) + b2;
    let dk3x = j3 * (id + dk2x * (0.5 * h));
    let dk3u = j3 * dk2u * (0.5 * h) + b3;
    let dk4x = j4 * (id + dk3x * h);
    let dk4u = j4 * dk3u * h + b4;
    let a = id + (dk1x + dk2x * 2.0 + dk3x * 2.0 + dk4x) * (h / 6.0);
    let b = (dk1u + dk2u * 2.0 + dk3u * 2.0 + dk4u) * (h / 6.0);
    let x1 = SpacecraftState::from_vector(&y1);
    if !x1.is_finite() {
        return Err(Error::NonFinite {
            t: t + h,
            what: "integrated state".into(),
        });
    }
    Ok((x1, m_next, (a, b)))
}

/// Number of steps and nominal step used to cover `[t0, t1]`.
pub(crate) fn step_plan(t0: f64, t1: f64, step: f64) -> Result<(usize, f64)> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::invalid("integration step must be positive"));
    }
    let span = t1 - t0;
    if !span.is_finite() || span == 0.0 {
        return Err(Error::invalid("integration interval must be non-empty"));
    }
    let n = ((span.abs() / step) - 1e-9).ceil().max(1.0) as usize;
    Ok((n, span / n as f64))
}

/// Integrates the closed loop from `t0` to `t1` (backward if `t1 < t0`).
///
/// `oe0` are the target elements valid at `t0`. The span is split into
/// equal steps no longer than `step`.
#[allow(clippy::too_many_arguments)]
pub fn integrate<P>(
    x0: &SpacecraftState,
    oe0: &IsoElements,
    mass0: f64,
    t0: f64,
    t1: f64,
    mut policy: P,
    params: &DynamicsParams,
    step: f64,
) -> Result<Trajectory>
where
    P: FnMut(&PolicyArgs) -> Result<Vec3>,
{
    let (n, h) = step_plan(t0, t1, step)?;
    let mut traj = Trajectory {
        t: Vec::with_capacity(n + 1),
        x: Vec::with_capacity(n + 1),
        mass: Vec::with_capacity(n + 1),
        oe: Vec::with_capacity(n + 1),
    };
    let mut x = *x0;
    let mut m = mass0;
    let mut start = IsoSnapshot::new(*oe0)?;
    traj.t.push(t0);
    traj.x.push(x);
    traj.mass.push(m);
    traj.oe.push(*oe0);
    for k in 0..n {
        let t = t0 + k as f64 * h;
        let t_next = if k + 1 == n { t1 } else { t0 + (k + 1) as f64 * h };
        let hk = t_next - t;
        let mid = IsoSnapshot::flow(oe0, t + 0.5 * hk - t0)?;
        let end = IsoSnapshot::flow(oe0, t_next - t0)?;
        (x, m) = rk4_step(t, &x, m, hk, [&start, &mid, &end], &mut policy, params)?;
        traj.t.push(t_next);
        traj.x.push(x);
        traj.mass.push(m);
        traj.oe.push(end.oe);
        start = end;
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{DynamicsModel, MassModel, AU_KM, MU_SUN};

    fn params() -> DynamicsParams {
        DynamicsParams {
            iso: IsoElements {
                // Close perihelion passage: fast frame rotation makes truncation
                // error visible above round-off.
                semi_major_axis: -0.1 * AU_KM / 1.1,
                eccentricity: 2.1,
                inclination: 2.0,
                raan: 0.5,
                arg_periapsis: 1.2,
                anomaly_at_epoch: -0.3,
                epoch: 0.0,
                mu_sun: MU_SUN,
            },
            mass: MassModel::default(),
            u_max: 3.0,
            model: DynamicsModel::TwoBodyLvlh,
        }
    }

    fn x0() -> SpacecraftState {
        SpacecraftState::new(Vec3::new(-2e5, 1.5e6, 3e5), Vec3::new(2.0, -17.0, -3.0))
    }

    fn end_state(step: f64, span: f64) -> SpacecraftState {
        let p = params();
        integrate(&x0(), &p.iso, 150.0, 0.0, span, |_| Ok(Vec3::zeros()), &p, step)
            .unwrap()
            .last_state()
    }

    #[test]
    fn local_error_is_fifth_order() {
        // One step of size h against a fine reference: error ratio ~ 2^5.
        let reference = |h: f64| end_state(h / 256.0, h);
        let e1 = (end_state(4000.0, 4000.0).p - reference(4000.0).p).norm();
        let e2 = (end_state(2000.0, 2000.0).p - reference(2000.0).p).norm();
        let ratio = e1 / e2;
        assert!(ratio > 20.0 && ratio < 45.0, "ratio {ratio}");
    }

    #[test]
    fn global_error_is_fourth_order() {
        let span = 86400.0;
        let base = 2400.0;
        let reference = end_state(base / 8.0, span);
        let e1 = (end_state(base, span).p - reference.p).norm();
        let e2 = (end_state(base / 2.0, span).p - reference.p).norm();
        let ratio = e1 / e2;
        assert!(ratio > 16.0 * 0.7 && ratio < 16.0 * 1.3, "ratio {ratio}");
    }

    #[test]
    fn forward_backward_round_trip() {
        let p = params();
        let fwd = integrate(&x0(), &p.iso, 150.0, 0.0, 20000.0, |_| Ok(Vec3::zeros()), &p, 10.0).unwrap();
        let oe_end = *fwd.oe.last().unwrap();
        let back = integrate(
            &fwd.last_state(),
            &oe_end,
            150.0,
            20000.0,
            0.0,
            |_| Ok(Vec3::zeros()),
            &p,
            10.0,
        )
        .unwrap();
        assert!((back.last_state().p - x0().p).norm() < 1e-6);
        assert!((back.oe.last().unwrap().anomaly_at_epoch - p.iso.anomaly_at_epoch).abs() < 1e-12);
    }

    #[test]
    fn deterministic_and_mass_monotone() {
        let p = params();
        let run = || {
            integrate(&x0(), &p.iso, 150.0, 0.0, 5000.0, |a| Ok(Vec3::new(3.0, -1.0, a.t.sin())), &p, 7.0)
                .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.x, b.x);
        assert_eq!(a.mass, b.mass);
        assert!(a.mass.windows(2).all(|w| w[1] <= w[0]));
        assert!(a.last_mass() < 150.0 && a.last_mass() >= p.mass.min_mass);
    }

    #[test]
    fn linearized_step_matches_plain_step_and_finite_differences() {
        let p = params();
        let isos = [0.0, 30.0, 60.0].map(|dt| IsoSnapshot::flow(&p.iso, dt).unwrap());
        let u = Vec3::new(1.0, -2.0, 0.5);
        let x = x0();
        let (x1, m1) = rk4_step(0.0, &x, 150.0, 60.0, [&isos[0], &isos[1], &isos[2]], &mut |_: &PolicyArgs| Ok(u), &p).unwrap();
        let (x2, m2, _) = rk4_step_linearized(0.0, &x, 150.0, 60.0, [&isos[0], &isos[1], &isos[2]], &u, &p).unwrap();
        assert_eq!(x1, x2);
        assert_eq!(m1, m2);
        // Finite differences at constant mass.
        let pc = DynamicsParams { mass: MassModel::constant(150.0), ..p };
        let step = |x: &SpacecraftState, u: &Vec3| {
            rk4_step_linearized(0.0, x, 150.0, 60.0, [&isos[0], &isos[1], &isos[2]], u, &pc).unwrap().0.to_vector()
        };
        let (a, b) = rk4_step_linearized(0.0, &x, 150.0, 60.0, [&isos[0], &isos[1], &isos[2]], &u, &pc).unwrap().2;
        for k in 0..6 {
            let hk = if k < 3 { 1.0 } else { 1e-4 };
            let mut xp = x.to_vector();
            let mut xm = xp;
            xp[k] += hk;
            xm[k] -= hk;
            let col = (step(&SpacecraftState::from_vector(&xp), &u) - step(&SpacecraftState::from_vector(&xm), &u)) / (2.0 * hk);
            assert!((col - a.column(k)).norm() <= 1e-7 * a.column(k).norm(), "A column {k}");
        }
        for k in 0..3 {
            let mut up = u;
            let mut um = u;
            // Large offsets: the response is nearly linear and the state is
            // ~1e6 km, so small offsets drown in round-off.
            up[k] += 0.5;
            um[k] -= 0.5;
            let col = step(&x, &up) - step(&x, &um);
            assert!((col - b.column(k)).norm() <= 1e-6 * b.column(k).norm(), "B column {k}");
        }
    }

    #[test]
    fn non_finite_policy_is_reported() {
        let p = params();
        let err = integrate(&x0(), &p.iso, 150.0, 0.0, 100.0, |a| {
            Ok(if a.t > 50.0 { Vec3::new(f64::NAN, 0.0, 0.0) } else { Vec3::zeros() })
        }, &p, 10.0)
        .unwrap_err();
        match err {
            Error::NonFinite { t, .. } => assert!(t > 50.0 && t <= 60.0),
            other => panic!("unexpected {other}"),
        }
    }
}
