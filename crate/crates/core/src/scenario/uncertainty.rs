use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::{IsoElements, LvlhFrame, SpacecraftState, Vec3};
use crate::error::{Error, Result};

/// Gaussian navigation-error profile with exponential decay to a floor.
///
/// Axes are ordered (along-track position km, cross-track position km,
/// along-track velocity km/s, cross-track velocity km/s). The third,
/// in-plane direction normal to the velocity uses the cross-track value.
/// Each axis follows `σ(t) = (σ0 - c) e^{-β t} + c`, which hits `σ0` at
/// `t = 0` and `σf` at `t = t_f` exactly, with `c = floor_ratio · σf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyProfile {
    pub sigma0: [f64; 4],
    pub sigmaf: [f64; 4],
    pub t_f: f64,
    pub floor_ratio: f64,
    pub beta: [f64; 4],
    pub c: [f64; 4],
}

/// Aggregate bound `ς(t) = e^{-β (t - t_s)} err0 + c` on the expected
/// relative-state error norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub err0: f64,
    pub beta: f64,
    pub c: f64,
}

impl Envelope {
    pub fn at(&self, lag: f64) -> f64 {
        (-self.beta * lag).exp() * self.err0 + self.c
    }
}

/// Multiplicity of each profile axis among the six state components.
const AXIS_MULT: [f64; 4] = [1.0, 2.0, 1.0, 2.0];

impl UncertaintyProfile {
    pub fn new(sigma0: [f64; 4], sigmaf: [f64; 4], t_f: f64, floor_ratio: f64) -> Result<Self> {
        if !(t_f > 0.0) || !(0.0..1.0).contains(&floor_ratio) {
            return Err(Error::invalid("profile needs t_f > 0 and floor_ratio in [0, 1)"));
        }
        let mut beta = [0.0; 4];
        let mut c = [0.0; 4];
        for i in 0..4 {
            let (s0, sf) = (sigma0[i], sigmaf[i]);
            if !(s0 >= 0.0 && sf >= 0.0) || sf > s0 {
                return Err(Error::invalid(format!(
                    "axis {i}: need 0 <= sigma_f <= sigma_0, got {s0} and {sf}"
                )));
            }
            if s0 == sf {
                c[i] = sf;
                continue;
            }
            c[i] = floor_ratio * sf;
            beta[i] = ((s0 - c[i]) / (sf - c[i])).ln() / t_f;
        }
        Ok(Self {
            sigma0,
            sigmaf,
            t_f,
            floor_ratio,
            beta,
            c,
        })
    }

    /// The navigation profile used for the flyby simulations.
    pub fn paper(t_f: f64) -> Self {
        Self::new([1e4, 1e2, 1e-2, 1e-2], [1e1, 1e0, 1e-4, 1e-4], t_f, 0.1)
            .expect("default profile is valid")
    }

    pub fn zero(t_f: f64) -> Self {
        Self::new([0.0; 4], [0.0; 4], t_f, 0.0).expect("zero profile is valid")
    }

    /// Copy with every standard deviation multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Result<Self> {
        Self::new(
            self.sigma0.map(|s| s * k),
            self.sigmaf.map(|s| s * k),
            self.t_f,
            self.floor_ratio,
        )
    }

    pub fn is_zero(&self) -> bool {
        self.sigma0.iter().all(|&s| s == 0.0)
    }

    pub fn sigma(&self, t: f64) -> [f64; 4] {
        let t = t.clamp(0.0, self.t_f);
        std::array::from_fn(|i| (self.sigma0[i] - self.c[i]) * (-self.beta[i] * t).exp() + self.c[i])
    }

    /// Root-mean-square norm of the six-component relative-state error.
    pub fn rms_error(&self, t: f64) -> f64 {
        let s = self.sigma(t);
        (0..4).map(|i| AXIS_MULT[i] * s[i] * s[i]).sum::<f64>().sqrt()
    }

    /// Envelope that dominates [`Self::rms_error`] (hence the expected error
    /// norm) for every `t >= t_s` when started from `rms_error(t_s)`.
    ///
    /// The slowest axis rate is used and floors are combined in quadrature;
    /// the triangle inequality then gives `rms(t) <= e^{-β(t-t_s)} err0 + c`.
    pub fn envelope(&self, t_s: f64) -> Envelope {
        let beta = self
            .beta
            .iter()
            .zip(self.sigma0.iter().zip(self.sigmaf.iter()))
            .filter(|(_, (s0, sf))| s0 > sf)
            .map(|(b, _)| *b)
            .fold(f64::INFINITY, f64::min);
        let beta = if beta.is_finite() { beta } else { 0.0 };
        let c = (0..4).map(|i| AXIS_MULT[i] * self.c[i] * self.c[i]).sum::<f64>().sqrt();
        let s = self.sigma(t_s);
        let err0 = (0..4)
            .map(|i| AXIS_MULT[i] * (s[i] - self.c[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        Envelope { err0, beta, c }
    }
}

/// `ς^t = e^{-β (t - t_s)} err0 + c` with the profile's aggregate rate and floor.
pub fn varsigma(profile: &UncertaintyProfile, err0: f64, t: f64, t_s: f64) -> f64 {
    let env = profile.envelope(t_s);
    Envelope { err0, ..env }.at(t - t_s)
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Noise along (along, cross, along x cross) with the given sigmas.
fn triad_noise<R: Rng + ?Sized>(
    rng: &mut R,
    along: &Vec3,
    cross: &Vec3,
    s_along: f64,
    s_cross: f64,
) -> Vec3 {
    let third = along.cross(cross);
    along * (s_along * gaussian(rng))
        + cross * (s_cross * gaussian(rng))
        + third * (s_cross * gaussian(rng))
}

/// Draws a navigation estimate of the relative state and target elements.
///
/// Noise on the relative state is applied in LVLH along/cross-track axes.
/// The target's heliocentric state receives independent noise with the same
/// sigmas along its own velocity and orbit normal, and is converted back to
/// elements.
pub fn estimate<R: Rng + ?Sized>(
    x_true: &SpacecraftState,
    oe_true: &IsoElements,
    t: f64,
    profile: &UncertaintyProfile,
    rng: &mut R,
) -> Result<(SpacecraftState, IsoElements)> {
    if profile.is_zero() {
        return Ok((*x_true, *oe_true));
    }
    let s = profile.sigma(t);
    let frame = LvlhFrame::from_elements(oe_true)?;
    let (along, cross) = frame.along_cross_axes();
    let x_hat = SpacecraftState::new(
        x_true.p + triad_noise(rng, &along, &cross, s[0], s[1]),
        x_true.v + triad_noise(rng, &along, &cross, s[2], s[3]),
    );
    let along_i: Vector3<f64> = frame.v_vec.normalize();
    let cross_i: Vector3<f64> = frame.basis.row(2).transpose();
    let r_hat = frame.r_vec + triad_noise(rng, &along_i, &cross_i, s[0], s[1]);
    let v_hat = frame.v_vec + triad_noise(rng, &along_i, &cross_i, s[2], s[3]);
    let oe_hat = IsoElements::from_state(&r_hat, &v_hat, oe_true.epoch, oe_true.mu_sun)?;
    Ok((x_hat, oe_hat))
}
