use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bounds::BoundInputs;
use crate::dynamics::{SpacecraftState, Vec3};
use crate::error::{Error, Result};

/// First line of every run-log CSV.
pub const RUNLOG_HEADER: &str = "# rendezvous-runlog v1";

/// Column schema of the run-log CSV, in order.
pub const RUNLOG_COLUMNS: [&str; 22] = [
    "t", "px", "py", "pz", "vx", "vy", "vz", "px_hat", "py_hat", "pz_hat", "vx_hat", "vy_hat", "vz_hat", "ux", "uy",
    "uz", "mode", "bound", "mass", "wall_s", "clipped", "flagged",
];

/// Which law produced the input held over one control interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Mode {
    /// Learned guidance applied directly.
    Sndnn,
    /// Min-norm tracking of the desired trajectory.
    Minnorm,
    Pd,
    Robust,
    Mpc,
    /// Nothing usable was available; zero input.
    Zero,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Sndnn => "SNDNN",
            Mode::Minnorm => "MINNORM",
            Mode::Pd => "PD",
            Mode::Robust => "ROBUST",
            Mode::Mpc => "MPC",
            Mode::Zero => "ZERO",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Start of the control interval.
    pub t: f64,
    pub truth: SpacecraftState,
    pub x_hat: SpacecraftState,
    /// Input held over `[t, t + Δt]` (N).
    pub u: Vec3,
    pub mode: Mode,
    /// Bound right-hand side, when the gate evaluated it this step.
    pub bound: Option<f64>,
    pub mass: f64,
    /// Wall-clock of the controller call alone.
    pub wall_s: f64,
    pub clipped: bool,
    /// The controller failed this step and a fallback input was used.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario_id: usize,
    pub controller: String,
    pub seed: u64,
    pub dt_ctrl: f64,
    /// `||p(t_f) − ρ||` (km).
    pub delivery_error: f64,
    /// `Σ ||u_k|| Δt_k / m_k` (km/s), with `u` converted to kN.
    pub delta_v: f64,
    /// `c ln(m_0 / m_f)` from the integrated mass; `None` without propellant use.
    pub delta_v_rocket: Option<f64>,
    pub final_state: SpacecraftState,
    pub final_mass: f64,
    /// Time at which the min-norm law took over, if it did.
    pub latch_time: Option<f64>,
    /// Delivery bound evaluated at the latch time, when it was computed.
    pub latch_bound: Option<f64>,
    /// Inputs of that bound, for recomputing it or its probability.
    pub latch_inputs: Option<BoundInputs>,
    pub builds_started: usize,
    pub builds_completed: usize,
    pub infeasible_steps: usize,
    pub clipped_steps: usize,
    pub failures: Vec<String>,
    pub median_wall_s: f64,
    pub max_wall_s: f64,
}

/// Write-once record of one closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub records: Vec<StepRecord>,
    pub summary: RunSummary,
}

impl RunLog {
    /// Number of SNDNN → MINNORM transitions; the latch makes it 0 or 1.
    pub fn mode_switches(&self) -> usize {
        self.records
            .windows(2)
            .filter(|w| w[0].mode != w[1].mode)
            .count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(200 * (self.records.len() + 2));
        out.push_str(RUNLOG_HEADER);
        out.push('\n');
        out.push_str(&RUNLOG_COLUMNS.join(","));
        out.push('\n');
        for r in &self.records {
            let _ = write!(out, "{}", r.t);
            for c in r.truth.p.iter().chain(r.truth.v.iter()) {
                let _ = write!(out, ",{c:e}");
            }
            for c in r.x_hat.p.iter().chain(r.x_hat.v.iter()).chain(r.u.iter()) {
                let _ = write!(out, ",{c:e}");
            }
            let bound = r.bound.map(|b| format!("{b:e}")).unwrap_or_default();
            let _ = writeln!(
                out,
                ",{},{},{},{:e},{},{}",
                r.mode.as_str(),
                bound,
                r.mass,
                r.wall_s,
                u8::from(r.clipped),
                u8::from(r.flagged)
            );
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary is plain data")
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Median of a sample, `NaN` when empty.
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
