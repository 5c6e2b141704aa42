//! Closed-form and quadrature calculators for the performance guarantees:
//! guidance and control optimality gaps, the expected delivery-error bound
//! and the probability with which it holds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::Envelope;

/// Relative tolerance under which two rates count as equal for the
/// closed-form bound.
pub const RATE_COLLISION: f64 = 1e-12;

/// Default number of quadrature intervals over `[t_s, t_f]`.
pub const DEFAULT_INTERVALS: usize = 10_000;

/// Richardson disagreement above which a quadrature warning is attached.
pub const RICHARDSON_WARN: f64 = 1e-8;

/// Parameters of the delivery-error bound and its probability.
///
/// `l_k` is the Lipschitz constant of the closed-loop input with respect to
/// the combined estimation error, in kN per error unit, so that `L_k/m`
/// is an acceleration. `p_err_s` and `x_err_s` are the estimated errors
/// `||p̂_s − p_d(t_s)||` and `||x̂_s − x_d(t_s)||`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundInputs {
    pub alpha: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub l_k: f64,
    pub m_f: f64,
    pub t_s: f64,
    pub t_f: f64,
    pub p_err_s: f64,
    pub x_err_s: f64,
    /// Inflation of the initial errors: `c_e = k_e E[ς^{t_s}]`.
    pub c_e: f64,
    pub beta: f64,
    pub c: f64,
    pub sigma_bar: f64,
    pub k_e: f64,
    pub eps_est: f64,
    pub eps_err: f64,
    pub v_bar: f64,
    /// `None` selects `0.5 α √m_f`.
    pub delta_p: Option<f64>,
}

impl Default for BoundInputs {
    fn default() -> Self {
        Self {
            alpha: 8.9e-7,
            lambda_min: 1.3e-3,
            lambda_max: 1.3e-3,
            l_k: 1.0,
            m_f: 150.0,
            t_s: 0.0,
            t_f: 86_400.0,
            p_err_s: 0.0,
            x_err_s: 0.0,
            c_e: 0.0,
            beta: 1e-4,
            c: 0.0,
            sigma_bar: 0.0,
            k_e: 10.0,
            eps_est: 0.0,
            eps_err: 0.0,
            v_bar: 100.0,
            delta_p: None,
        }
    }
}

impl BoundInputs {
    /// Fills `c_e`, `β` and `c` from an estimation envelope started at `t_s`.
    pub fn with_envelope(mut self, env: &Envelope, k_e: f64) -> Self {
        self.k_e = k_e;
        self.c_e = k_e * env.at(0.0);
        self.beta = env.beta;
        self.c = env.c;
        self
    }

    pub fn horizon(&self) -> f64 {
        self.t_f - self.t_s
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.lambda_min > 0.0 && self.lambda_max >= self.lambda_min) {
            return Err(Error::invalid("bound needs α > 0 and 0 < λ_min <= λ_max"));
        }
        if !(self.t_f > self.t_s) {
            return Err(Error::invalid(format!("bound needs t_s < t_f, got {} and {}", self.t_s, self.t_f)));
        }
        if !(self.m_f > 0.0) {
            return Err(Error::invalid("final mass must be positive"));
        }
        let nonneg = [
            ("l_k", self.l_k),
            ("p_err_s", self.p_err_s),
            ("x_err_s", self.x_err_s),
            ("c_e", self.c_e),
            ("beta", self.beta),
            ("c", self.c),
            ("sigma_bar", self.sigma_bar),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }

    fn delta_p(&self) -> f64 {
        self.delta_p.unwrap_or(0.5 * self.alpha * self.m_f.sqrt())
    }

    /// `ς` of the exponential example as a function of `t − t_s`, with the
    /// initial error replaced by its bound `c_e`.
    pub fn exponential_varsigma(&self) -> impl Fn(f64) -> f64 + '_ {
        move |lag| self.c_e * (-self.beta * lag).exp() + self.c
    }
}

/// `(e^{−aT} − e^{−bT})/(b − a)`, continuous through `a = b` where it
/// equals `T e^{−aT}`.
pub fn exp_difference(a: f64, b: f64, t: f64) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let d = hi - lo;
    if d == 0.0 {
        return t * (-lo * t).exp();
    }
    (-lo * t).exp() * (-(-d * t).exp_m1()) / d
}

/// `ε_ℓu = ε_train + r (L_ℓ + L_mpc)`.
pub fn guidance_gap(eps_train: f64, r: f64, l_ell: f64, l_mpc: f64) -> f64 {
    eps_train + r * (l_ell + l_mpc)
}

/// Gap between the min-norm input and the optimal input:
/// `ε_ℓu + (L_ℓ + m₀L_f) d_œ + (L_ℓ + m₀(L_f + λ̄(α+1) + α)) d_x`.
#[allow(clippy::too_many_arguments)]
pub fn control_gap(
    eps_lu: f64,
    l_ell: f64,
    l_f: f64,
    m0: f64,
    lambda_max: f64,
    alpha: f64,
    d_oe: f64,
    d_x: f64,
) -> f64 {
    eps_lu + (l_ell + m0 * l_f) * d_oe + (l_ell + m0 * (l_f + lambda_max * (alpha + 1.0) + alpha)) * d_x
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateBranch {
    /// `α ≠ λ_min`.
    Distinct,
    /// `α = λ_min`, the `(t_f − t_s) e^{−λ_min (t_f − t_s)}` form.
    Equal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundMethod {
    Example1,
    Example2,
    Quadrature,
}

/// Value of a delivery bound together with its three terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub value: f64,
    /// Initial position, initial velocity-error and disturbance terms.
    pub terms: [f64; 3],
    pub method: BoundMethod,
    pub branch: RateBranch,
    /// Quadrature step (s); zero for closed forms.
    pub step: f64,
    /// Relative change under step halving; zero for closed forms.
    pub richardson_rel: f64,
    pub warning: Option<String>,
    pub inputs: BoundInputs,
}

fn branch(inp: &BoundInputs) -> RateBranch {
    if inp.alpha == inp.lambda_min {
        RateBranch::Equal
    } else {
        RateBranch::Distinct
    }
}

/// First two terms, shared by every form: the inflated initial position
/// error decays at `λ_min` and the initial `v` enters through the
/// `α`/`λ_min` convolution.
fn initial_terms(inp: &BoundInputs, inflation: f64) -> [f64; 2] {
    let t = inp.horizon();
    let pos = (-inp.lambda_min * t).exp() * (inp.p_err_s + inflation);
    let v_s = (inp.lambda_max + 1.0) * (inp.x_err_s + inflation);
    let vel = exp_difference(inp.lambda_min, inp.alpha, t) * v_s / inp.m_f.sqrt();
    [pos, vel]
}

fn report(inp: &BoundInputs, terms: [f64; 3], method: BoundMethod) -> BoundReport {
    BoundReport {
        value: terms.iter().sum(),
        terms,
        method,
        branch: branch(inp),
        step: 0.0,
        richardson_rel: 0.0,
        warning: None,
        inputs: *inp,
    }
}

/// Trapezoid value of `∫₀ᵀ e^{−λ(T−s)} ∫₀ˢ e^{−α(s−r)} ς(r) dr ds` on `n`
/// intervals, and of `∫₀ᵀ ς`; the exponentials are kept in decaying form
/// so that long horizons do not overflow.
fn nested_trapezoid(lambda: f64, alpha: f64, horizon: f64, n: usize, varsigma: &dyn Fn(f64) -> f64) -> (f64, f64) {
    let h = horizon / n as f64;
    let (da, dl) = ((-alpha * h).exp(), (-lambda * h).exp());
    let mut prev = varsigma(0.0);
    let mut inner = 0.0;
    // Outer integral accumulated in the e^{−λ(T−s)} frame by rescaling.
    let mut outer = 0.0;
    let mut plain = 0.0;
    for k in 1..=n {
        let cur = varsigma(k as f64 * h);
        let inner_next = da * inner + 0.5 * h * (da * prev + cur);
        outer = dl * (outer + 0.5 * h * inner) + 0.5 * h * inner_next;
        plain += 0.5 * h * (prev + cur);
        inner = inner_next;
        prev = cur;
    }
    (outer, plain)
}

/// Richardson-extrapolated nested quadrature on `n` and `2n` intervals, the
/// relative change against the same extrapolation one level coarser, and
/// `∫ ς`.
fn nested_integral(
    inp: &BoundInputs,
    varsigma: &dyn Fn(f64) -> f64,
    intervals: usize,
) -> Result<(f64, f64, f64)> {
    if intervals < 2 {
        return Err(Error::invalid("quadrature needs at least two intervals"));
    }
    let t = inp.horizon();
    let levels: Vec<(f64, f64)> = [intervals / 2, intervals, 2 * intervals]
        .iter()
        .map(|&n| nested_trapezoid(inp.lambda_min, inp.alpha, t, n, varsigma))
        .collect();
    let extrapolate = |c: f64, f: f64| f + (f - c) / 3.0;
    let coarse = extrapolate(levels[0].0, levels[1].0);
    let value = extrapolate(levels[1].0, levels[2].0);
    let plain = extrapolate(levels[1].1, levels[2].1);
    let rel = if value != 0.0 { ((value - coarse) / value).abs() } else { (value - coarse).abs() };
    if !value.is_finite() {
        return Err(Error::NonFinite {
            t: inp.t_f,
            what: "delivery bound quadrature".into(),
        });
    }
    Ok((value, rel, plain))
}

/// Delivery bound by quadrature of the estimation envelope `varsigma(t − t_s)`,
/// with the initial errors inflated by `inflation` (the supremum over the
/// set of states consistent with the estimate).
///
/// `intervals` defaults to [`DEFAULT_INTERVALS`]. The result is the
/// Richardson extrapolation of the step and half-step trapezoid values;
/// `richardson_rel` compares it with the extrapolation at double the step.
pub fn delivery_bound_quadrature(
    inp: &BoundInputs,
    inflation: f64,
    varsigma: &dyn Fn(f64) -> f64,
    intervals: Option<usize>,
) -> Result<BoundReport> {
    inp.validate()?;
    let n = intervals.unwrap_or(DEFAULT_INTERVALS);
    let (integral, rel, _) = nested_integral(inp, varsigma, n)?;
    let [pos, vel] = initial_terms(inp, inflation);
    let mut rep = report(inp, [pos, vel, inp.l_k / inp.m_f * integral], BoundMethod::Quadrature);
    rep.step = inp.horizon() / n as f64;
    rep.richardson_rel = rel;
    if rel > RICHARDSON_WARN {
        rep.warning = Some(format!(
            "step halving changed the disturbance integral by {rel:.2e} relative; reduce the step"
        ));
    }
    Ok(rep)
}

/// Quadrature form of the exponential-envelope example.
pub fn example1_quadrature(inp: &BoundInputs, intervals: Option<usize>) -> Result<BoundReport> {
    delivery_bound_quadrature(inp, inp.c_e, &inp.exponential_varsigma(), intervals)
}

/// Quadrature form of the constant-envelope example.
pub fn example2_quadrature(inp: &BoundInputs, intervals: Option<usize>) -> Result<BoundReport> {
    let s = inp.sigma_bar;
    delivery_bound_quadrature(inp, s, &move |_| s, intervals)
}

fn collide(a: f64, b: f64) -> bool {
    (a - b).abs() <= RATE_COLLISION * a.abs().max(b.abs())
}

/// Closed form for `ς = c_e e^{−β(t−t_s)} + c` with `c_e` inflation.
///
/// Requires `α`, `β`, `λ_min` pairwise distinct; use
/// [`example1_quadrature`] (or [`delivery_bound_example1_or_quadrature`])
/// otherwise.
pub fn delivery_bound_example1(inp: &BoundInputs) -> Result<BoundReport> {
    inp.validate()?;
    let (a, b, l) = (inp.alpha, inp.beta, inp.lambda_min);
    if collide(a, b) || collide(b, l) || collide(l, a) {
        return Err(Error::invalid(format!(
            "rates α = {a}, β = {b}, λ_min = {l} collide; use the quadrature bound"
        )));
    }
    let t = inp.horizon();
    let [pos, vel] = initial_terms(inp, inp.c_e);
    let g_la = exp_difference(l, a, t);
    let decaying = inp.c_e / (a - b) * (exp_difference(l, b, t) - g_la);
    let floor = inp.c / a * (exp_difference(0.0, l, t) - g_la);
    let dist = inp.l_k / inp.m_f * (decaying + floor);
    Ok(report(inp, [pos, vel, dist], BoundMethod::Example1))
}

/// Exponential-envelope bound, falling back to quadrature on rate collisions.
pub fn delivery_bound_example1_or_quadrature(inp: &BoundInputs) -> Result<BoundReport> {
    match delivery_bound_example1(inp) {
        Err(Error::InvalidInput(msg)) if msg.contains("collide") => example1_quadrature(inp, None),
        other => other,
    }
}

/// `L_k c/(m_f α λ_min)`, the large-horizon value of the exponential example.
pub fn example1_limit(inp: &BoundInputs) -> f64 {
    inp.l_k * inp.c / (inp.m_f * inp.alpha * inp.lambda_min)
}

/// Closed form for a constant envelope `σ̄`, which also inflates the
/// initial errors and plays the role of the floor `c`.
pub fn delivery_bound_example2(inp: &BoundInputs) -> Result<BoundReport> {
    inp.validate()?;
    let t = inp.horizon();
    let (a, l) = (inp.alpha, inp.lambda_min);
    let [pos, vel] = initial_terms(inp, inp.sigma_bar);
    let dist = inp.l_k * inp.sigma_bar / (inp.m_f * a) * (exp_difference(0.0, l, t) - exp_difference(l, a, t));
    Ok(report(inp, [pos, vel, dist], BoundMethod::Example2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExitBranch {
    /// `v̄ ≥ sup h / ᾱ`.
    LargeLevel,
    SmallLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitReport {
    pub eps_exit: f64,
    pub branch: ExitBranch,
    /// Unclamped values of both branch expressions for `1 − ε_exit`.
    pub large_level: f64,
    pub small_level: f64,
    pub e_s: f64,
    pub h_total: f64,
    pub h_sup: f64,
    pub h_bar: f64,
    pub alpha_bar: f64,
    pub delta_p: f64,
}

/// Probability that the state leaves the tube, from the supermartingale
/// bound with `h(t) = L_k ς(t)/√m_f` for the exponential envelope.
///
/// `E_s` uses the same inflated initial errors as the delivery bound.
pub fn exit_probability(inp: &BoundInputs, intervals: Option<usize>) -> Result<ExitReport> {
    inp.validate()?;
    if !(inp.v_bar > 0.0) {
        return Err(Error::invalid("v̄ must be positive"));
    }
    let delta_p = inp.delta_p();
    let sm = inp.m_f.sqrt();
    let alpha_bar = (inp.alpha - delta_p / sm).min(inp.lambda_min);
    if !(alpha_bar > 0.0) {
        return Err(Error::invalid(format!(
            "ᾱ = min(α − δ_p/√m_f, λ_min) = {alpha_bar} is not positive; reduce δ_p"
        )));
    }
    let n = intervals.unwrap_or(DEFAULT_INTERVALS);
    let vs = inp.exponential_varsigma();
    let (_, _, vs_total) = nested_integral(inp, &vs, n)?;
    let h_total = inp.l_k * vs_total / sm;
    let h_step = inp.horizon() / n as f64;
    let h_sup = (0..=n).map(|k| vs(k as f64 * h_step)).fold(0.0, f64::max) * inp.l_k / sm;

    let v_s = (inp.lambda_max + 1.0) * (inp.x_err_s + inp.c_e);
    let e_s = v_s + delta_p * (inp.p_err_s + inp.c_e);
    let v_bar = inp.v_bar;
    let large_level = (1.0 - e_s / v_bar) * (-h_total / v_bar).exp();
    let (h_bar, small_level) = if h_sup > 0.0 {
        let h_bar = 2.0 * h_total * alpha_bar / h_sup;
        let num = alpha_bar * e_s + h_bar.exp_m1() * h_sup;
        (h_bar, 1.0 - num / (alpha_bar * v_bar * h_bar.exp()))
    } else {
        (0.0, 1.0 - e_s / v_bar)
    };
    let branch = if v_bar >= h_sup / alpha_bar {
        ExitBranch::LargeLevel
    } else {
        ExitBranch::SmallLevel
    };
    let p = match branch {
        ExitBranch::LargeLevel => large_level,
        ExitBranch::SmallLevel => small_level,
    };
    Ok(ExitReport {
        eps_exit: 1.0 - p.clamp(0.0, 1.0),
        branch,
        large_level,
        small_level,
        e_s,
        h_total,
        h_sup,
        h_bar,
        alpha_bar,
        delta_p,
    })
}

/// `1 − ε_ctrl = (1−ε_exit)(1−ε_est)(1−ε_err)(1−1/k_e)`, clamped to `[0, 1]`.
pub fn ctrl_probability(eps_exit: f64, eps_est: f64, eps_err: f64, k_e: f64) -> f64 {
    let f = |e: f64| (1.0 - e).clamp(0.0, 1.0);
    let markov = if k_e > 0.0 { f(1.0 / k_e) } else { 0.0 };
    (f(eps_exit) * f(eps_est) * f(eps_err) * markov).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests;
