//! Spacecraft motion relative to the target in its rotating LVLH frame.
//!
//! Units: km, km/s, s, kg. Control forces are in newtons at the API, so the
//! acceleration they produce is `u / (1000 m)` km/s². `C` and `G` carry the
//! spacecraft mass and are therefore in kN (kg km/s²).
//!
//! The frame has x along the target's heliocentric radius, z along its
//! orbital angular momentum and y completing the triad. For a two-body
//! target its angular velocity is `(0, 0, h/r²)`, so the frame terms only
//! need `r`, `h` and `ṙ`.

pub mod elements;
pub mod integrate;
pub mod kepler;

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

pub use elements::{iso_flow, IsoElements, AU_KM, MU_SUN};
pub use integrate::{
    integrate, rk4_step, rk4_step_linearized, IsoSnapshot, PolicyArgs, StepJacobians, Trajectory,
};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Vec6 = Vector6<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Mat6 = Matrix6<f64>;

/// Standard gravity in km/s².
pub const G0_KM: f64 = 9.806_65e-3;

/// Relative position and velocity in the LVLH frame (km, km/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpacecraftState {
    pub p: Vec3,
    pub v: Vec3,
}

impl SpacecraftState {
    pub fn new(p: Vec3, v: Vec3) -> Self {
        Self { p, v }
    }

    pub fn zero() -> Self {
        Self::new(Vec3::zeros(), Vec3::zeros())
    }

    pub fn to_vector(&self) -> Vec6 {
        Vec6::new(self.p.x, self.p.y, self.p.z, self.v.x, self.v.y, self.v.z)
    }

    pub fn from_vector(x: &Vec6) -> Self {
        Self::new(x.fixed_rows::<3>(0).into(), x.fixed_rows::<3>(3).into())
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(self.v.iter()).all(|c| c.is_finite())
    }
}

/// Propellant model. `isp = f64::INFINITY` keeps the mass constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassModel {
    pub wet_mass: f64,
    pub isp: f64,
    pub g0: f64,
    pub min_mass: f64,
}

impl Default for MassModel {
    fn default() -> Self {
        Self {
            wet_mass: 150.0,
            isp: 3000.0,
            g0: G0_KM,
            min_mass: 100.0,
        }
    }
}

impl MassModel {
    pub fn constant(mass: f64) -> Self {
        Self {
            wet_mass: mass,
            isp: f64::INFINITY,
            g0: G0_KM,
            min_mass: 0.5 * mass,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wet_mass > self.min_mass && self.min_mass > 0.0) {
            return Err(Error::invalid("mass model needs wet_mass > min_mass > 0"));
        }
        if !(self.isp > 0.0) || !(self.g0 > 0.0) {
            return Err(Error::invalid("isp and g0 must be positive"));
        }
        Ok(())
    }

    /// Mass flow (kg/s) for a thrust of `u` newtons at current mass `m`.
    pub fn mass_rate(&self, u: &Vec3, m: f64) -> f64 {
        if self.isp.is_infinite() || m <= self.min_mass {
            return 0.0;
        }
        // Exhaust speed in m/s so that N / (m/s) = kg/s.
        -u.norm() / (self.isp * self.g0 * 1000.0)
    }

    /// Exhaust speed in km/s.
    pub fn exhaust_speed(&self) -> f64 {
        self.isp * self.g0
    }
}

/// Which physics the relative motion obeys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum DynamicsModel {
    /// Rotating-frame two-body relative motion about the target.
    #[default]
    TwoBodyLvlh,
    /// `C = 0`, `G = 0`: a pure double integrator, used by oracles.
    ZeroGravity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    pub iso: IsoElements,
    pub mass: MassModel,
    /// Per-axis thrust limit (N).
    pub u_max: f64,
    pub model: DynamicsModel,
}

impl DynamicsParams {
    pub fn validate(&self) -> Result<()> {
        self.iso.validate()?;
        self.mass.validate()?;
        if !(self.u_max > 0.0 && self.u_max.is_finite()) {
            return Err(Error::invalid("u_max must be positive"));
        }
        Ok(())
    }

    pub fn clip(&self, u: &Vec3) -> Vec3 {
        u.map(|c| c.clamp(-self.u_max, self.u_max))
    }
}

/// Kinematic quantities of the LVLH frame attached to the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LvlhFrame {
    /// Heliocentric position and velocity of the target.
    pub r_vec: Vec3,
    pub v_vec: Vec3,
    pub r: f64,
    pub h: f64,
    pub rdot: f64,
    pub omega_z: f64,
    pub omega_z_dot: f64,
    /// Rows are the LVLH unit vectors expressed in inertial axes.
    pub basis: Mat3,
    pub mu: f64,
}

impl LvlhFrame {
    pub fn from_elements(oe: &IsoElements) -> Result<Self> {
        let (r_vec, v_vec) = oe.to_state();
        let r = r_vec.norm();
        if !(r > 0.0) {
            return Err(Error::Singularity("target at the attracting center".into()));
        }
        let hv = r_vec.cross(&v_vec);
        let h = hv.norm();
        let rdot = r_vec.dot(&v_vec) / r;
        let x = r_vec / r;
        let z = hv / h;
        let y = z.cross(&x);
        Ok(Self {
            r_vec,
            v_vec,
            r,
            h,
            rdot,
            omega_z: h / (r * r),
            omega_z_dot: -2.0 * h * rdot / (r * r * r),
            basis: Mat3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]),
            mu: oe.mu_sun,
        })
    }

    pub fn omega(&self) -> Vec3 {
        Vec3::new(0.0, 0.0, self.omega_z)
    }

    /// Target velocity direction and orbit normal in LVLH axes.
    pub fn along_cross_axes(&self) -> (Vec3, Vec3) {
        let along = Vec3::new(self.rdot, self.h / self.r, 0.0).normalize();
        (along, Vec3::z())
    }

    /// Heliocentric spacecraft state to LVLH relative state.
    pub fn relative_state(&self, r_sc: &Vec3, v_sc: &Vec3) -> SpacecraftState {
        let p = self.basis * (r_sc - self.r_vec);
        let v = self.basis * (v_sc - self.v_vec) - self.omega().cross(&p);
        SpacecraftState::new(p, v)
    }

    /// Inverse of [`LvlhFrame::relative_state`].
    pub fn heliocentric_state(&self, x: &SpacecraftState) -> (Vec3, Vec3) {
        let bt = self.basis.transpose();
        let r = self.r_vec + bt * x.p;
        let v = self.v_vec + bt * (x.v + self.omega().cross(&x.p));
        (r, v)
    }
}

pub fn skew(w: &Vec3) -> Mat3 {
    Mat3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// `C = 2 m [ω]×`, skew-symmetric by construction (kN per km/s).
pub fn coriolis_matrix(frame: &LvlhFrame, mass: f64, model: DynamicsModel) -> Mat3 {
    match model {
        DynamicsModel::TwoBodyLvlh => skew(&frame.omega()) * (2.0 * mass),
        DynamicsModel::ZeroGravity => Mat3::zeros(),
    }
}

/// Frame and differential-gravity acceleration `G/m` (km/s²).
pub fn gravity_accel(p: &Vec3, frame: &LvlhFrame, model: DynamicsModel) -> Result<Vec3> {
    if model == DynamicsModel::ZeroGravity {
        return Ok(Vec3::zeros());
    }
    let (wz, wzd, r) = (frame.omega_z, frame.omega_z_dot, frame.r);
    let q = Vec3::new(r + p.x, p.y, p.z);
    let qn = q.norm();
    if !(qn > 1e-9 * r) {
        return Err(Error::Singularity(
            "spacecraft at the attracting center".into(),
        ));
    }
    // mu (q/|q|³ - r̂/r²) evaluated without cancellation for |p| << r:
    // q/|q|³ - r_vec/r³ = (p + r_vec (1 - |q|³/r³)) / |q|³.
    let s = (2.0 * r * p.x + p.norm_squared()) / (r * r);
    let one_minus = -(1.5 * s.ln_1p()).exp_m1();
    let grav = frame.mu / qn.powi(3) * Vec3::new(p.x + r * one_minus, p.y, p.z);
    let centrifugal = Vec3::new(-wz * wz * p.x, -wz * wz * p.y, 0.0);
    let euler = Vec3::new(-wzd * p.y, wzd * p.x, 0.0);
    Ok(centrifugal + euler + grav)
}

/// `G(p, œ)` in kN.
pub fn gravity_term(p: &Vec3, frame: &LvlhFrame, mass: f64, model: DynamicsModel) -> Result<Vec3> {
    Ok(gravity_accel(p, frame, model)? * mass)
}

/// Drift acceleration `ℱ = -(C v + G)/m`; mass-independent (km/s²).
pub fn free_accel(x: &SpacecraftState, frame: &LvlhFrame, model: DynamicsModel) -> Result<Vec3> {
    let coriolis = match model {
        DynamicsModel::TwoBodyLvlh => 2.0 * frame.omega().cross(&x.v),
        DynamicsModel::ZeroGravity => Vec3::zeros(),
    };
    Ok(-(coriolis + gravity_accel(&x.p, frame, model)?))
}

/// Acceleration produced by a thrust of `u` newtons at mass `m` kg.
pub fn input_accel(u: &Vec3, mass: f64) -> Vec3 {
    u / (1000.0 * mass)
}

/// `f(x) = [v; -(C v + G)/m]`.
pub fn drift(x: &SpacecraftState, frame: &LvlhFrame, model: DynamicsModel) -> Result<Vec6> {
    let a = free_accel(x, frame, model)?;
    Ok(Vec6::new(x.v.x, x.v.y, x.v.z, a.x, a.y, a.z))
}

/// Jacobian of `ℱ` with respect to `(p, v)`, returned as the two 3×3 blocks.
pub fn free_accel_jacobian(p: &Vec3, frame: &LvlhFrame, model: DynamicsModel) -> (Mat3, Mat3) {
    if model == DynamicsModel::ZeroGravity {
        return (Mat3::zeros(), Mat3::zeros());
    }
    let w = skew(&frame.omega());
    let wd = skew(&Vec3::new(0.0, 0.0, frame.omega_z_dot));
    let q = Vec3::new(frame.r + p.x, p.y, p.z);
    let qn = q.norm();
    let tidal = (Mat3::identity() / qn.powi(3) - q * q.transpose() * (3.0 / qn.powi(5))) * frame.mu;
    let d_grav = w * w + wd + tidal;
    (-d_grav, -2.0 * w)
}

/// Full 6×6 state Jacobian of `f`.
pub fn drift_jacobian(p: &Vec3, frame: &LvlhFrame, model: DynamicsModel) -> Mat6 {
    let (ap, av) = free_accel_jacobian(p, frame, model);
    let mut j = Mat6::zeros();
    j.fixed_view_mut::<3, 3>(0, 3).copy_from(&Mat3::identity());
    j.fixed_view_mut::<3, 3>(3, 0).copy_from(&ap);
    j.fixed_view_mut::<3, 3>(3, 3).copy_from(&av);
    j
}
