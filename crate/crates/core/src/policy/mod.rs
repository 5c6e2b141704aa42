//! Learned guidance policy: input transform, network and model files.

mod io;
mod network;
pub mod spectral;

use nalgebra::{DVector, SMatrix};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    free_accel_jacobian, gravity_accel, DynamicsModel, IsoElements, LvlhFrame, Mat3, SpacecraftState, Vec3,
    Vec6,
};
use crate::error::{Error, Result};

pub use io::{load_model, model_from_bytes, model_to_bytes, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use network::{Architecture, LipschitzReport, ModelGrad, SnDnnModel, Trace};
pub use spectral::{power_iteration, spectral_norm, SpectralInfo};

/// Length of the transformed input vector.
pub const N_FEATURES: usize = 14;

/// Shortest remaining horizon the transform accepts (s).
pub const MIN_TIME_TO_GO: f64 = 1e-6;

pub type FeatureJacobian = SMatrix<f64, N_FEATURES, 6>;

/// Everything the guidance policy sees at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceInput {
    pub x_hat: SpacecraftState,
    /// Target elements valid at `t`.
    pub oe_hat: IsoElements,
    pub t: f64,
    pub rho: Vec3,
    pub t_f: f64,
}

impl GuidanceInput {
    fn time_to_go(&self) -> Result<f64> {
        let tgo = self.t_f - self.t;
        if !(tgo >= MIN_TIME_TO_GO) {
            return Err(Error::Singularity(format!(
                "time to go {tgo:e} s is below {MIN_TIME_TO_GO:e} s"
            )));
        }
        Ok(tgo)
    }
}

/// Unnormalized features
/// `(p − ρ, (p − ρ)/(t_f − t) + v, ρ, t_f − t, ω_z, G/m)`.
///
/// The gravity block is the mass-free acceleration `G/m` so that features
/// do not drift as propellant is spent.
pub fn raw_features(input: &GuidanceInput, frame: &LvlhFrame, model: DynamicsModel) -> Result<[f64; N_FEATURES]> {
    let tgo = input.time_to_go()?;
    let e = input.x_hat.p - input.rho;
    let closing = e / tgo + input.x_hat.v;
    let g = gravity_accel(&input.x_hat.p, frame, model)?;
    let mut f = [0.0; N_FEATURES];
    f[0..3].copy_from_slice(e.as_slice());
    f[3..6].copy_from_slice(closing.as_slice());
    f[6..9].copy_from_slice(input.rho.as_slice());
    f[9] = tgo;
    f[10] = frame.omega_z;
    f[11..14].copy_from_slice(g.as_slice());
    Ok(f)
}

/// Jacobian of [`raw_features`] with respect to `(p, v)`.
pub fn feature_jacobian(input: &GuidanceInput, frame: &LvlhFrame, model: DynamicsModel) -> Result<FeatureJacobian> {
    let tgo = input.time_to_go()?;
    let mut j = FeatureJacobian::zeros();
    let eye = Mat3::identity();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&eye);
    j.fixed_view_mut::<3, 3>(3, 0).copy_from(&(eye / tgo));
    j.fixed_view_mut::<3, 3>(3, 3).copy_from(&eye);
    let (ap, _) = free_accel_jacobian(&input.x_hat.p, frame, model);
    j.fixed_view_mut::<3, 3>(11, 0).copy_from(&(-ap));
    Ok(j)
}

impl SnDnnModel {
    /// Normalized network input for `input`.
    pub fn featurize(&self, input: &GuidanceInput, model: DynamicsModel) -> Result<Vec<f64>> {
        let frame = LvlhFrame::from_elements(&input.oe_hat)?;
        self.featurize_in(input, &frame, model)
    }

    fn featurize_in(&self, input: &GuidanceInput, frame: &LvlhFrame, model: DynamicsModel) -> Result<Vec<f64>> {
        let f = raw_features(input, frame, model)?;
        Ok(f.iter().zip(self.input_norm()).map(|(x, s)| x / s).collect())
    }

    /// Thrust command `u_ℓ(x̂, œ̂, t, ρ)` in N.
    pub fn control(&self, input: &GuidanceInput, model: DynamicsModel) -> Result<Vec3> {
        self.forward_normalized(&self.featurize(input, model)?)
    }

    /// Same as [`Self::control`] with a precomputed target frame.
    pub fn control_in(&self, input: &GuidanceInput, frame: &LvlhFrame, model: DynamicsModel) -> Result<Vec3> {
        self.forward_normalized(&self.featurize_in(input, frame, model)?)
    }

    /// Control, plus `(∂u/∂x)ᵀ g_out` and optional parameter-gradient
    /// accumulation for a cotangent `g_out` on the output.
    pub fn control_vjp(
        &self,
        input: &GuidanceInput,
        frame: &LvlhFrame,
        model: DynamicsModel,
        g_out: &Vec3,
        acc: Option<&mut ModelGrad>,
    ) -> Result<(Vec3, Vec6)> {
        let z = self.featurize_in(input, frame, model)?;
        let trace = self.trace(&z);
        let u = self.output_of(&trace);
        let gz = self.backward(&trace, g_out, acc);
        let gf = DVector::from_iterator(N_FEATURES, gz.iter().zip(self.input_norm()).map(|(g, s)| g / s));
        let jac = feature_jacobian(input, frame, model)?;
        let gx = jac.transpose() * nalgebra::SVector::<f64, N_FEATURES>::from_iterator(gf.iter().copied());
        Ok((u, gx))
    }

    /// `∂u/∂x` as a 3×6 matrix.
    pub fn state_jacobian(
        &self,
        input: &GuidanceInput,
        frame: &LvlhFrame,
        model: DynamicsModel,
    ) -> Result<SMatrix<f64, 3, 6>> {
        let mut out = SMatrix::<f64, 3, 6>::zeros();
        for i in 0..3 {
            let (_, row) = self.control_vjp(input, frame, model, &Vec3::ith(i, 1.0), None)?;
            out.set_row(i, &row.transpose());
        }
        Ok(out)
    }
}
