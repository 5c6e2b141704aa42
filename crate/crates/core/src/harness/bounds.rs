use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::bounds::{
    control_gap, ctrl_probability, delivery_bound_example1_or_quadrature, delivery_bound_example2, example1_limit,
    example1_quadrature, exit_probability, guidance_gap, BoundInputs, BoundReport, ExitReport,
};
use crate::error::{Error, Result};

/// Inputs of the `bounds` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSection {
    /// Overwrite `c_e`, `β` and `c` of `inputs` with the simulation noise
    /// envelope started at `inputs.t_s`.
    pub envelope_from_profile: bool,
    /// Use `m_f(λ̄ + α)` for `L_k` instead of `inputs.l_k`.
    pub default_l_k: bool,
    pub quadrature_intervals: usize,
    pub eps_train: f64,
    /// Distance from the query to the training set.
    pub r: f64,
    pub l_ell: f64,
    pub l_mpc: f64,
    pub l_f: f64,
    pub m0: f64,
    pub d_oe: f64,
    pub d_x: f64,
    pub inputs: BoundInputs,
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self {
            envelope_from_profile: true,
            default_l_k: true,
            quadrature_intervals: 10_000,
            eps_train: 0.0,
            r: 0.0,
            l_ell: 0.0,
            l_mpc: 0.0,
            l_f: 0.0,
            m0: 200.0,
            d_oe: 0.0,
            d_x: 0.0,
            inputs: BoundInputs {
                t_s: 26_400.0,
                ..BoundInputs::default()
            },
        }
    }
}

impl BoundsSection {
    pub fn validate(&self) -> Result<()> {
        if self.quadrature_intervals < 2 {
            return Err(Error::invalid("bounds.quadrature_intervals must be at least 2"));
        }
        let gap = [self.eps_train, self.r, self.l_ell, self.l_mpc, self.l_f, self.m0, self.d_oe, self.d_x];
        if gap.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("gap inputs must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Every guarantee evaluated for one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsOutput {
    pub inputs: BoundInputs,
    pub guidance_gap: f64,
    pub control_gap: f64,
    /// Closed form, or quadrature when rates collide.
    pub example1: BoundReport,
    pub example1_quadrature: BoundReport,
    pub example1_limit: f64,
    pub example2: BoundReport,
    pub exit: ExitReport,
    /// Probability `1 − ε_ctrl` with which the bound holds.
    pub confidence: f64,
}

pub fn bound_report(cfg: &RunConfig) -> Result<BoundsOutput> {
    cfg.validate()?;
    let b = &cfg.bounds;
    let mut inp = b.inputs;
    if b.envelope_from_profile {
        let env = cfg.sim_profile()?.envelope(inp.t_s);
        inp = inp.with_envelope(&env, inp.k_e);
    }
    if b.default_l_k {
        inp.l_k = inp.m_f * (inp.lambda_max + inp.alpha);
    }
    inp.validate()?;
    let eps_lu = guidance_gap(b.eps_train, b.r, b.l_ell, b.l_mpc);
    let exit = exit_probability(&inp, Some(b.quadrature_intervals))?;
    Ok(BoundsOutput {
        inputs: inp,
        guidance_gap: eps_lu,
        control_gap: control_gap(eps_lu, b.l_ell, b.l_f, b.m0, inp.lambda_max, inp.alpha, b.d_oe, b.d_x),
        example1: delivery_bound_example1_or_quadrature(&inp)?,
        example1_quadrature: example1_quadrature(&inp, Some(b.quadrature_intervals))?,
        example1_limit: example1_limit(&inp),
        example2: delivery_bound_example2(&inp)?,
        confidence: ctrl_probability(exit.eps_exit, inp.eps_est, inp.eps_err, inp.k_e),
        exit,
    })
}
