use super::{ControllerGains, DesiredPoint, DesiredTrajectory, DENOM_GUARD};
use crate::dynamics::{
    coriolis_matrix, free_accel, gravity_term, DynamicsModel, IsoElements, LvlhFrame, SpacecraftState, Vec3,
};
use crate::error::Result;

/// Everything the tracking law needs at one instant.
///
/// `M = m I` uses the current spacecraft mass; the desired point carries
/// its own mass `m_d` through `p̈_d`.
#[derive(Debug, Clone, Copy)]
pub struct TrackingContext {
    pub x_hat: SpacecraftState,
    pub frame_hat: LvlhFrame,
    pub mass: f64,
    pub desired: DesiredPoint,
    pub gains: ControllerGains,
    pub model: DynamicsModel,
}

impl TrackingContext {
    pub fn new(
        traj: &DesiredTrajectory,
        x_hat: &SpacecraftState,
        oe_hat: &IsoElements,
        mass: f64,
        t: f64,
        gains: &ControllerGains,
        model: DynamicsModel,
    ) -> Result<Self> {
        Ok(Self {
            x_hat: *x_hat,
            frame_hat: LvlhFrame::from_elements(oe_hat)?,
            mass,
            desired: traj.at(t)?,
            gains: *gains,
            model,
        })
    }

    /// Composite error `s = ṗ̂ − ϱ_d`.
    pub fn s(&self) -> Vec3 {
        self.x_hat.v - varrho_d(self)
    }
}

/// `ϱ_d = ṗ_d − Λ(p̂ − p_d)`.
pub fn varrho_d(ctx: &TrackingContext) -> Vec3 {
    ctx.desired.v - ctx.gains.lambda * (ctx.x_hat.p - ctx.desired.p)
}

/// `ϱ̇_d = p̈_d − Λ(ṗ̂ − ṗ_d)`.
pub fn varrho_d_dot(ctx: &TrackingContext) -> Vec3 {
    ctx.desired.a - ctx.gains.lambda * (ctx.x_hat.v - ctx.desired.v)
}

/// `V = sᵀ M s`.
pub fn lyapunov_v(ctx: &TrackingContext) -> f64 {
    ctx.mass * ctx.s().norm_squared()
}

/// Constraint value at `u = u_ℓ(x_d)`; the law acts only when it is positive.
pub fn upsilon(ctx: &TrackingContext) -> Result<f64> {
    let s = ctx.s();
    let f_hat = free_accel(&ctx.x_hat, &ctx.frame_hat, ctx.model)?;
    let inner = f_hat - varrho_d_dot(ctx) + s * ctx.gains.alpha;
    Ok(ctx.mass * s.dot(&inner) + s.dot(&ctx.desired.u) / 1000.0)
}

/// Half of `V̇ + 2αV ≤ 0` as `aᵀu ≤ b`, with `u` in newtons.
pub fn affine_constraint(ctx: &TrackingContext) -> Result<(Vec3, f64)> {
    let s = ctx.s();
    Ok((s, s.dot(&ctx.desired.u) - 1000.0 * upsilon(ctx)?))
}

/// `V̇` at the estimate under input `u`, with `M` held fixed.
pub fn stability_lhs(ctx: &TrackingContext, u: &Vec3) -> Result<f64> {
    let s = ctx.s();
    let f_hat = free_accel(&ctx.x_hat, &ctx.frame_hat, ctx.model)?;
    Ok(2.0 * (ctx.mass * s.dot(&(f_hat - varrho_d_dot(ctx))) + s.dot(u) / 1000.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    /// Applied input after the per-axis box (N).
    pub u: Vec3,
    /// `u_ℓ(x_d)`.
    pub u_nominal: Vec3,
    /// Correction `u* − u_ℓ(x_d)` before clipping.
    pub k: Vec3,
    pub upsilon: f64,
    pub v: f64,
    pub clipped: bool,
}

/// Closest input to `u_ℓ(x_d)` that satisfies the stability constraint,
/// then clipped to `|u_i| ≤ u_max`.
pub fn min_norm_control(ctx: &TrackingContext, u_max: f64) -> Result<ControlOutput> {
    let s = ctx.s();
    let ups = upsilon(ctx)?;
    let k = if ups > 0.0 {
        -s * (1000.0 * ups / s.norm_squared().max(DENOM_GUARD))
    } else {
        Vec3::zeros()
    };
    let raw = ctx.desired.u + k;
    let u = raw.map(|c| c.clamp(-u_max, u_max));
    Ok(ControlOutput {
        u,
        u_nominal: ctx.desired.u,
        k,
        upsilon: ups,
        v: lyapunov_v(ctx),
        clipped: u != raw,
    })
}

/// `u_n = Mϱ̇_d + Cϱ_d + G − αMs`, in newtons; gives `V̇ = −2αV` exactly.
pub fn feedback_linearizing_u_n(ctx: &TrackingContext) -> Result<Vec3> {
    let m = ctx.mass;
    let c = coriolis_matrix(&ctx.frame_hat, m, ctx.model);
    let g = gravity_term(&ctx.x_hat.p, &ctx.frame_hat, m, ctx.model)?;
    let kn = varrho_d_dot(ctx) * m + c * varrho_d(ctx) + g - ctx.s() * (ctx.gains.alpha * m);
    Ok(kn * 1000.0)
}
