//! Imitation loss over control labels and short closed-loop rollouts, with
//! its exact gradient (discrete adjoint of the RK4 rollout).

use serde::{Deserialize, Serialize};

use super::dataset::{DatasetConfig, TrainingSample};
use crate::dynamics::{
    drift, drift_jacobian, input_accel, IsoSnapshot, SpacecraftState, Vec3, Vec6,
};
use crate::error::{Error, Result};
use crate::policy::{GuidanceInput, ModelGrad, SnDnnModel};

/// Velocity weight relative to position inside `C_x`.
pub const VELOCITY_WEIGHT: f64 = 1e7;

/// `C_u = c_u I` and `C_x = c_x diag(I, 1e7 I)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub c_u: f64,
    pub c_x: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { c_u: 1.0, c_x: 100.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_u >= 0.0 && self.c_x >= 0.0) || !(self.c_u + self.c_x > 0.0) {
            return Err(Error::invalid("loss weights need c_u, c_x >= 0 and c_u + c_x > 0"));
        }
        Ok(())
    }

    fn cx_diag(&self) -> Vec6 {
        let (p, v) = (self.c_x, self.c_x * VELOCITY_WEIGHT);
        Vec6::new(p, p, p, v, v, v)
    }
}

/// Per-row contributions to the loss.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub control: f64,
    pub state: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.control + self.state
    }
}

fn input_at(row: &TrainingSample, x: &SpacecraftState, t: f64, iso: &IsoSnapshot) -> GuidanceInput {
    GuidanceInput {
        x_hat: *x,
        oe_hat: iso.oe,
        t,
        rho: row.rho_bar,
        t_f: row.t_f,
    }
}

/// One RK4 step with its four stage states kept for the adjoint.
struct Step {
    t: f64,
    h: f64,
    isos: [IsoSnapshot; 3],
    stages: [Vec6; 4],
}

/// Stage times and target snapshots for the rollout of `row`, matching
/// [`crate::dynamics::integrate`] over `[t_bar, t_bar + dt_bar]`.
fn plan(row: &TrainingSample, cfg: &DatasetConfig) -> Result<Vec<(f64, f64, [IsoSnapshot; 3])>> {
    let n = cfg.rollout_steps;
    let (t0, t1) = (row.t_bar, row.t_bar + row.dt_bar);
    let h = row.dt_bar / n as f64;
    let mut start = IsoSnapshot::new(row.oe_bar)?;
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let t = t0 + k as f64 * h;
        let t_next = if k + 1 == n { t1 } else { t0 + (k + 1) as f64 * h };
        let hk = t_next - t;
        let mid = IsoSnapshot::flow(&row.oe_bar, t + 0.5 * hk - t0)?;
        let end = IsoSnapshot::flow(&row.oe_bar, t_next - t0)?;
        out.push((t, hk, [start, mid, end]));
        start = end;
    }
    Ok(out)
}

fn stage_rhs(
    model: &SnDnnModel,
    row: &TrainingSample,
    cfg: &DatasetConfig,
    t: f64,
    y: &Vec6,
    iso: &IsoSnapshot,
) -> Result<Vec6> {
    let x = SpacecraftState::from_vector(y);
    let u = model.control_in(&input_at(row, &x, t, iso), &iso.frame, cfg.model)?;
    let mut dy = drift(&x, &iso.frame, cfg.model)?;
    let a = input_accel(&u, row.mass);
    for k in 0..3 {
        dy[3 + k] += a[k];
    }
    Ok(dy)
}

/// Returns the displacement `φ − x̄` (accumulated separately so that it
/// does not inherit the round-off of ~1e6 km positions) and the stages.
fn rollout(model: &SnDnnModel, row: &TrainingSample, cfg: &DatasetConfig) -> Result<(Vec6, Vec<Step>)> {
    let x0 = row.x_bar.to_vector();
    let mut disp = Vec6::zeros();
    let mut y = x0;
    let mut steps = Vec::with_capacity(cfg.rollout_steps);
    for (t, h, isos) in plan(row, cfg)? {
        let y1 = y;
        let k1 = stage_rhs(model, row, cfg, t, &y1, &isos[0])?;
        let y2 = y + k1 * (0.5 * h);
        let k2 = stage_rhs(model, row, cfg, t + 0.5 * h, &y2, &isos[1])?;
        let y3 = y + k2 * (0.5 * h);
        let k3 = stage_rhs(model, row, cfg, t + 0.5 * h, &y3, &isos[1])?;
        let y4 = y + k3 * h;
        let k4 = stage_rhs(model, row, cfg, t + h, &y4, &isos[2])?;
        disp += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        y = x0 + disp;
        steps.push(Step {
            t,
            h,
            isos,
            stages: [y1, y2, y3, y4],
        });
    }
    Ok((disp, steps))
}

/// Closed-loop rollout of the model over the row's window.
pub fn model_rollout(model: &SnDnnModel, row: &TrainingSample, cfg: &DatasetConfig) -> Result<SpacecraftState> {
    Ok(SpacecraftState::from_vector(&(row.x_bar.to_vector() + rollout(model, row, cfg)?.0)))
}

/// `J(y)ᵀ k̄` for the closed-loop slope at one stage; parameter cotangents
/// are accumulated into `acc`.
#[allow(clippy::too_many_arguments)]
fn stage_vjp(
    model: &SnDnnModel,
    row: &TrainingSample,
    cfg: &DatasetConfig,
    t: f64,
    y: &Vec6,
    iso: &IsoSnapshot,
    kbar: &Vec6,
    acc: &mut ModelGrad,
) -> Result<Vec6> {
    let x = SpacecraftState::from_vector(y);
    let g_u = Vec3::new(kbar[3], kbar[4], kbar[5]) / (1000.0 * row.mass);
    let (_, gx) = model.control_vjp(&input_at(row, &x, t, iso), &iso.frame, cfg.model, &g_u, Some(acc))?;
    Ok(drift_jacobian(&x.p, &iso.frame, cfg.model).transpose() * kbar + gx)
}

fn non_finite(i: usize, what: &str) -> Error {
    Error::NonFinite {
        t: f64::NAN,
        what: format!("{what} for sample {i}"),
    }
}

/// Loss of one row and, when `acc` is given, its gradient with respect to
/// the effective weights and biases.
fn row_loss(
    model: &SnDnnModel,
    row: &TrainingSample,
    idx: usize,
    w: &LossWeights,
    cfg: &DatasetConfig,
    acc: Option<&mut ModelGrad>,
) -> Result<LossParts> {
    let mut parts = LossParts::default();
    let frame0 = IsoSnapshot::new(row.oe_bar)?;
    let input0 = input_at(row, &row.x_bar, row.t_bar, &frame0);
    let mut acc = acc;
    if w.c_u > 0.0 {
        let u = model.control_in(&input0, &frame0.frame, cfg.model)?;
        let e = u - row.u_label;
        parts.control = w.c_u * e.norm_squared();
        if let Some(acc) = acc.as_deref_mut() {
            model.control_vjp(&input0, &frame0.frame, cfg.model, &(e * (2.0 * w.c_u)), Some(acc))?;
        }
    }
    if w.c_x > 0.0 {
        let (disp, steps) = rollout(model, row, cfg)?;
        let e = disp - (row.x_rollout_label.to_vector() - row.x_bar.to_vector());
        let cx = w.cx_diag();
        parts.state = e.component_mul(&e).dot(&cx);
        if let Some(acc) = acc {
            let mut ybar = e.component_mul(&cx) * 2.0;
            for s in steps.iter().rev() {
                let h = s.h;
                let mut y0bar = ybar;
                let mut kbar = [ybar * (h / 6.0), ybar * (h / 3.0), ybar * (h / 3.0), ybar * (h / 6.0)];
                let times = [s.t, s.t + 0.5 * h, s.t + 0.5 * h, s.t + h];
                let iso_of = [0, 1, 1, 2];
                for j in (0..4).rev() {
                    let g = stage_vjp(model, row, cfg, times[j], &s.stages[j], &s.isos[iso_of[j]], &kbar[j], acc)?;
                    y0bar += g;
                    match j {
                        3 => kbar[2] += g * h,
                        2 => kbar[1] += g * (0.5 * h),
                        1 => kbar[0] += g * (0.5 * h),
                        _ => {}
                    }
                }
                ybar = y0bar;
            }
        }
    }
    if !parts.total().is_finite() {
        return Err(non_finite(idx, "loss"));
    }
    Ok(parts)
}

/// `Σ_i ||u_ℓ − u_label||²_{C_u} + ||φ_ℓ − x_label||²_{C_x}` over `batch`.
pub fn loss(model: &SnDnnModel, batch: &[TrainingSample], w: &LossWeights, cfg: &DatasetConfig) -> Result<f64> {
    Ok(loss_parts(model, batch, w, cfg)?.total())
}

pub fn loss_parts(
    model: &SnDnnModel,
    batch: &[TrainingSample],
    w: &LossWeights,
    cfg: &DatasetConfig,
) -> Result<LossParts> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    w.validate()?;
    let mut total = LossParts::default();
    for (i, row) in batch.iter().enumerate() {
        let p = row_loss(model, row, i, w, cfg, None)?;
        total.control += p.control;
        total.state += p.state;
    }
    Ok(total)
}

/// Loss and its exact gradient with respect to the raw weights and biases.
pub fn loss_and_grad(
    model: &SnDnnModel,
    batch: &[TrainingSample],
    w: &LossWeights,
    cfg: &DatasetConfig,
) -> Result<(f64, ModelGrad)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    w.validate()?;
    let mut acc = ModelGrad::zeros_like(model);
    let mut total = 0.0;
    for (i, row) in batch.iter().enumerate() {
        total += row_loss(model, row, i, w, cfg, Some(&mut acc))?.total();
    }
    let g = model.to_raw_grad(&acc);
    if !g.norm().is_finite() {
        return Err(non_finite(0, "gradient"));
    }
    Ok((total, g))
}

pub fn grad(model: &SnDnnModel, batch: &[TrainingSample], w: &LossWeights, cfg: &DatasetConfig) -> Result<ModelGrad> {
    Ok(loss_and_grad(model, batch, w, cfg)?.1)
}
