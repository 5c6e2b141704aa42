//! Heliocentric orbital elements of the target body and the two-body flow.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::kepler::{solve_elliptic, solve_hyperbolic};
use crate::error::{Error, Result};

/// Gravitational parameter of the Sun (km^3/s^2).
pub const MU_SUN: f64 = 1.327_124_400_18e11;
/// Astronomical unit (km).
pub const AU_KM: f64 = 1.495_978_707e8;

/// Osculating elements of the target.
///
/// `anomaly_at_epoch` is the true anomaly at `epoch`. It is kept unwrapped
/// on elliptic orbits so that repeated flows compose without 2π jumps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsoElements {
    pub semi_major_axis: f64,
    pub eccentricity: f64,
    pub inclination: f64,
    pub raan: f64,
    pub arg_periapsis: f64,
    pub anomaly_at_epoch: f64,
    pub epoch: f64,
    pub mu_sun: f64,
}

impl IsoElements {
    pub fn validate(&self) -> Result<()> {
        let e = self.eccentricity;
        let a = self.semi_major_axis;
        let finite = [a, e, self.inclination, self.raan, self.arg_periapsis]
            .iter()
            .chain([self.anomaly_at_epoch, self.epoch, self.mu_sun].iter())
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::invalid("orbital elements must be finite"));
        }
        if self.mu_sun <= 0.0 {
            return Err(Error::invalid("mu_sun must be positive"));
        }
        if !(e >= 0.0) || (e - 1.0).abs() < 1e-9 {
            return Err(Error::invalid(format!("unsupported eccentricity {e}")));
        }
        if (e > 1.0) != (a < 0.0) {
            return Err(Error::invalid(
                "hyperbolic orbits need a < 0 and elliptic orbits a > 0",
            ));
        }
        if e > 1.0 {
            let nu_inf = (-1.0 / e).acos();
            if self.anomaly_at_epoch.abs() >= nu_inf {
                return Err(Error::invalid("true anomaly beyond the hyperbolic asymptote"));
            }
        }
        Ok(())
    }

    pub fn is_hyperbolic(&self) -> bool {
        self.eccentricity > 1.0
    }

    /// Semi-latus rectum (km).
    pub fn semi_latus_rectum(&self) -> f64 {
        self.semi_major_axis * (1.0 - self.eccentricity * self.eccentricity)
    }

    pub fn mean_motion(&self) -> f64 {
        (self.mu_sun / self.semi_major_axis.abs().powi(3)).sqrt()
    }

    /// Mean anomaly at epoch, continuous across revolutions.
    pub fn mean_anomaly(&self) -> f64 {
        let e = self.eccentricity;
        let nu = self.anomaly_at_epoch;
        if e > 1.0 {
            let h = ((e * e - 1.0).sqrt() * nu.sin() / (1.0 + e * nu.cos())).asinh();
            e * h.sinh() - h
        } else {
            let wrapped = wrap_pi(nu);
            let ecc_anom = ((1.0 - e * e).sqrt() * wrapped.sin()).atan2(e + wrapped.cos());
            ecc_anom - e * ecc_anom.sin() + (nu - wrapped)
        }
    }

    /// Heliocentric position and velocity at epoch (km, km/s).
    pub fn to_state(&self) -> (Vector3<f64>, Vector3<f64>) {
        let e = self.eccentricity;
        let p = self.semi_latus_rectum();
        let (s, c) = self.anomaly_at_epoch.sin_cos();
        let r = p / (1.0 + e * c);
        let k = (self.mu_sun / p).sqrt();
        let rot = perifocal_to_inertial(self.raan, self.inclination, self.arg_periapsis);
        let r_pf = Vector3::new(r * c, r * s, 0.0);
        let v_pf = Vector3::new(-k * s, k * (e + c), 0.0);
        (rot * r_pf, rot * v_pf)
    }

    /// Builds elements from a heliocentric state. Degenerate angles (zero
    /// inclination) fall back to measuring from the inertial x axis.
    pub fn from_state(r: &Vector3<f64>, v: &Vector3<f64>, epoch: f64, mu: f64) -> Result<Self> {
        let rn = r.norm();
        if !(rn > 0.0) || !v.iter().all(|x| x.is_finite()) {
            return Err(Error::Singularity("state at the attracting center".into()));
        }
        let h = r.cross(v);
        let hn = h.norm();
        if !(hn > 0.0) {
            return Err(Error::Singularity("rectilinear orbit".into()));
        }
        let e_vec = v.cross(&h) / mu - r / rn;
        let e = e_vec.norm();
        let energy = 0.5 * v.norm_squared() - mu / rn;
        let a = -mu / (2.0 * energy);
        let inc = (h.z / hn).clamp(-1.0, 1.0).acos();
        let node = Vector3::new(-h.y, h.x, 0.0);
        let nn = node.norm();
        let raan = if nn > 1e-12 * hn {
            wrap_two_pi(node.y.atan2(node.x))
        } else {
            0.0
        };
        let node_dir = if nn > 1e-12 * hn {
            node / nn
        } else {
            Vector3::x()
        };
        let h_hat = h / hn;
        // Angles inside the orbital plane, measured from the ascending node.
        let angle_in_plane = |w: &Vector3<f64>| {
            let cosv = node_dir.dot(w);
            let sinv = h_hat.dot(&node_dir.cross(w));
            sinv.atan2(cosv)
        };
        let (argp, nu) = if e > 1e-10 {
            let argp = wrap_two_pi(angle_in_plane(&e_vec));
            let e_hat = e_vec / e;
            let nu = h_hat.dot(&e_hat.cross(r)).atan2(e_hat.dot(r));
            (argp, nu)
        } else {
            (0.0, angle_in_plane(r))
        };
        let oe = IsoElements {
            semi_major_axis: a,
            eccentricity: e,
            inclination: inc,
            raan,
            arg_periapsis: argp,
            anomaly_at_epoch: nu,
            epoch,
            mu_sun: mu,
        };
        oe.validate()?;
        Ok(oe)
    }
}

/// Two-body flow of the target: advances the anomaly by `dt` seconds.
pub fn iso_flow(oe: &IsoElements, dt: f64) -> Result<IsoElements> {
    if !dt.is_finite() {
        return Err(Error::invalid("flow interval must be finite"));
    }
    if dt == 0.0 {
        return Ok(*oe);
    }
    let e = oe.eccentricity;
    let mean = oe.mean_anomaly() + oe.mean_motion() * dt;
    let nu = if e > 1.0 {
        let h = solve_hyperbolic(mean, e)?;
        2.0 * (((e + 1.0) / (e - 1.0)).sqrt() * (0.5 * h).tanh()).atan()
    } else {
        let revs = ((mean + PI) / TAU).floor();
        let m = mean - revs * TAU;
        let ecc_anom = solve_elliptic(m, e)?;
        let nu = ((1.0 - e * e).sqrt() * ecc_anom.sin()).atan2(ecc_anom.cos() - e);
        nu + revs * TAU
    };
    Ok(IsoElements {
        anomaly_at_epoch: nu,
        epoch: oe.epoch + dt,
        ..*oe
    })
}

/// Rotation R3(raan) R1(inc) R3(argp) from perifocal to inertial axes.
pub fn perifocal_to_inertial(raan: f64, inc: f64, argp: f64) -> Matrix3<f64> {
    let (so, co) = raan.sin_cos();
    let (si, ci) = inc.sin_cos();
    let (sw, cw) = argp.sin_cos();
    Matrix3::new(
        co * cw - so * sw * ci,
        -co * sw - so * cw * ci,
        so * si,
        so * cw + co * sw * ci,
        -so * sw + co * cw * ci,
        -co * si,
        sw * si,
        cw * si,
        ci,
    )
}

pub(crate) fn wrap_pi(x: f64) -> f64 {
    x - TAU * ((x + PI) / TAU).floor()
}

pub(crate) fn wrap_two_pi(x: f64) -> f64 {
    x - TAU * (x / TAU).floor()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn hyperbolic() -> IsoElements {
        IsoElements {
            semi_major_axis: -0.5 * AU_KM,
            eccentricity: 3.2,
            inclination: 1.9,
            raan: 0.4,
            arg_periapsis: 2.2,
            anomaly_at_epoch: -0.9,
            epoch: 0.0,
            mu_sun: MU_SUN,
        }
    }

    #[test]
    fn zero_flow_is_identity() {
        let oe = hyperbolic();
        assert_eq!(iso_flow(&oe, 0.0).unwrap(), oe);
    }

    #[test]
    fn flow_composes() {
        for oe in [
            hyperbolic(),
            IsoElements {
                semi_major_axis: AU_KM,
                eccentricity: 0.4,
                anomaly_at_epoch: 2.9,
                ..hyperbolic()
            },
        ] {
            let (a, b) = (3.7e5, -1.1e5);
            let two = iso_flow(&iso_flow(&oe, a).unwrap(), b).unwrap();
            let one = iso_flow(&oe, a + b).unwrap();
            let rel = (two.anomaly_at_epoch - one.anomaly_at_epoch).abs()
                / one.anomaly_at_epoch.abs().max(1.0);
            assert!(rel < 1e-9, "{rel}");
        }
    }

    #[test]
    fn state_round_trip() {
        let oe = hyperbolic();
        let (r, v) = oe.to_state();
        let back = IsoElements::from_state(&r, &v, 0.0, MU_SUN).unwrap();
        let (r2, v2) = back.to_state();
        assert!((r - r2).norm() < 1e-6 * r.norm());
        assert!((v - v2).norm() < 1e-9 * v.norm());
        assert!((back.eccentricity - oe.eccentricity).abs() < 1e-10);
    }

    #[test]
    fn flow_matches_energy_and_momentum() {
        let oe = hyperbolic();
        let later = iso_flow(&oe, 86400.0 * 30.0).unwrap();
        let (r0, v0) = oe.to_state();
        let (r1, v1) = later.to_state();
        let en = |r: &Vector3<f64>, v: &Vector3<f64>| 0.5 * v.norm_squared() - MU_SUN / r.norm();
        assert!((en(&r0, &v0) - en(&r1, &v1)).abs() < 1e-9 * en(&r0, &v0).abs());
        assert!((r0.cross(&v0) - r1.cross(&v1)).norm() < 1e-9 * r0.cross(&v0).norm());
    }
}
