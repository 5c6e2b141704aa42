//! Certificate inputs: sup imitation error and distance to the training set.

use serde::{Deserialize, Serialize};

use super::dataset::TrainingSample;
use crate::dynamics::{DynamicsModel, IsoElements, IsoSnapshot, SpacecraftState, Vec3};
use crate::error::{Error, Result};
use crate::policy::{GuidanceInput, SnDnnModel};

/// `sup_i ||u_ℓ(row_i) − u_label_i||` over `rows`.
pub fn training_sup_error(model: &SnDnnModel, rows: &[TrainingSample], dm: DynamicsModel) -> Result<f64> {
    Ok(control_errors(model, rows, dm)?.into_iter().fold(0.0, f64::max))
}

/// Per-row control imitation errors in N.
pub fn control_errors(model: &SnDnnModel, rows: &[TrainingSample], dm: DynamicsModel) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Err(Error::invalid("empty dataset"));
    }
    rows.iter()
        .map(|r| {
            let snap = IsoSnapshot::new(r.oe_bar)?;
            let u = model.control_in(&row_input(r), &snap.frame, dm)?;
            Ok((u - r.u_label).norm())
        })
        .collect()
}

fn row_input(r: &TrainingSample) -> GuidanceInput {
    GuidanceInput {
        x_hat: r.x_bar,
        oe_hat: r.oe_bar,
        t: r.t_bar,
        rho: r.rho_bar,
        t_f: r.t_f,
    }
}

/// A point in the input space of the guidance policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryPoint {
    pub x: SpacecraftState,
    pub oe: IsoElements,
    pub t: f64,
    pub rho: Vec3,
}

impl From<&TrainingSample> for QueryPoint {
    fn from(r: &TrainingSample) -> Self {
        Self {
            x: r.x_bar,
            oe: r.oe_bar,
            t: r.t_bar,
            rho: r.rho_bar,
        }
    }
}

pub const EMBED_DIM: usize = 20;

/// `(x, a, e, sin/cos of the four angles, t, ρ)`: angles embedded on the
/// circle so wrap-around does not inflate distances.
pub fn embed(q: &QueryPoint) -> [f64; EMBED_DIM] {
    let o = &q.oe;
    let mut e = [0.0; EMBED_DIM];
    e[..3].copy_from_slice(q.x.p.as_slice());
    e[3..6].copy_from_slice(q.x.v.as_slice());
    e[6] = o.semi_major_axis;
    e[7] = o.eccentricity;
    for (k, ang) in [o.inclination, o.raan, o.arg_periapsis, o.anomaly_at_epoch].into_iter().enumerate() {
        e[8 + 2 * k] = ang.sin();
        e[9 + 2 * k] = ang.cos();
    }
    e[16] = q.t;
    e[17..20].copy_from_slice(q.rho.as_slice());
    e
}

/// Exact `min_i` Euclidean distance between embeddings (linear scan).
pub fn nearest_training_distance(query: &QueryPoint, rows: &[TrainingSample]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::invalid("empty dataset"));
    }
    let q = embed(query);
    let best = rows
        .iter()
        .map(|r| {
            embed(&QueryPoint::from(r))
                .iter()
                .zip(&q)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min);
    Ok(best.sqrt())
}
