//! Desired trajectory with zero nominal miss and the pointwise min-norm
//! tracking controller built around the learned guidance policy.

mod law;
mod trajectory;

use serde::{Deserialize, Serialize};

use crate::dynamics::{Mat3, SpacecraftState};
use crate::error::{Error, Result};
use crate::policy::{GuidanceInput, SnDnnModel};
use crate::dynamics::{DynamicsModel, LvlhFrame, Vec3};

pub use law::{
    affine_constraint, feedback_linearizing_u_n, lyapunov_v, min_norm_control, stability_lhs, upsilon, varrho_d,
    varrho_d_dot, ControlOutput, TrackingContext,
};
pub use trajectory::{build_desired, DesiredPoint, DesiredTrajectory, TrajectoryConfig};

/// Guard on `||ṗ − ϱ_d||²` in the min-norm law, (km/s)².
pub const DENOM_GUARD: f64 = 1e-18;

/// Tracking gains: `Λ ≻ 0` (1/s) and `α > 0` (1/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    pub lambda: Mat3,
    pub alpha: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self::isotropic(1.3e-3, 8.9e-7)
    }
}

impl ControllerGains {
    pub fn isotropic(lambda: f64, alpha: f64) -> Self {
        Self {
            lambda: Mat3::identity() * lambda,
            alpha,
        }
    }

    /// Smallest and largest eigenvalues of `Λ`.
    pub fn lambda_bounds(&self) -> (f64, f64) {
        let eig = self.lambda.symmetric_eigenvalues();
        (eig.min(), eig.max())
    }

    pub fn validate(&self) -> Result<()> {
        if (self.lambda - self.lambda.transpose()).amax() > 1e-12 * self.lambda.amax() {
            return Err(Error::invalid("Λ must be symmetric"));
        }
        if !(self.lambda_bounds().0 > 0.0) {
            return Err(Error::invalid("Λ must be positive definite"));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::invalid("α must be positive"));
        }
        Ok(())
    }
}

/// Learned guidance evaluated with the time-to-go floored at `min_tgo`.
///
/// The policy's closing-velocity feature divides by `t_f − t`; the floor
/// keeps integrations that reach `t_f` well defined.
#[allow(clippy::too_many_arguments)]
pub fn guidance_at(
    model: &SnDnnModel,
    x: &SpacecraftState,
    frame: &LvlhFrame,
    oe: &crate::dynamics::IsoElements,
    t: f64,
    rho: &Vec3,
    t_f: f64,
    min_tgo: f64,
    dm: DynamicsModel,
) -> Result<Vec3> {
    let input = GuidanceInput {
        x_hat: *x,
        oe_hat: *oe,
        t: t.min(t_f - min_tgo),
        rho: *rho,
        t_f,
    };
    model.control_in(&input, frame, dm)
}
