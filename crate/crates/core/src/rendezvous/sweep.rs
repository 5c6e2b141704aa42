use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{median, run, Controller, RunSetup, RunSummary};
use crate::error::{Error, Result};
use crate::scenario::Scenario;

/// Control intervals swept by default (s).
pub const DEFAULT_CONTROL_INTERVALS: [f64; 3] = [60.0, 300.0, 600.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub dts: Vec<f64>,
    pub repetitions: usize,
    pub base_seed: u64,
    pub controllers: Vec<Controller>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            dts: DEFAULT_CONTROL_INTERVALS.to_vec(),
            repetitions: 1,
            base_seed: 0,
            controllers: vec![Controller::NeuralRendezvous, Controller::SnDnn],
        }
    }
}

/// Statistics of one (interval, controller) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub dt: f64,
    pub controller: String,
    pub runs: usize,
    pub failed: usize,
    pub delivery_mean: f64,
    pub delivery_std: f64,
    pub delivery_median: f64,
    pub delta_v_mean: f64,
    pub delta_v_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    /// Per-run summaries ordered by (dt, controller, scenario, repetition).
    pub runs: Vec<RunSummary>,
}

/// Noise seed of one run; the controller and interval do not enter, so every
/// controller sees the same noise stream on a given (scenario, repetition).
pub fn run_seed(base_seed: u64, scenario_id: usize, repetition: usize) -> u64 {
    // splitmix64 finalizer over the packed key
    let mut z = base_seed
        .wrapping_add((scenario_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((repetition as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Aggregates summaries of one cell; `failed` counts runs that returned an error.
pub fn summarize(dt: f64, controller: &str, runs: &[&RunSummary], failed: usize) -> SweepRow {
    let de: Vec<f64> = runs.iter().map(|r| r.delivery_error).collect();
    let dv: Vec<f64> = runs.iter().map(|r| r.delta_v).collect();
    let (delivery_mean, delivery_std) = mean_std(&de);
    let (delta_v_mean, delta_v_std) = mean_std(&dv);
    SweepRow {
        dt,
        controller: controller.to_string(),
        runs: runs.len(),
        failed,
        delivery_mean,
        delivery_std,
        delivery_median: median(&de),
        delta_v_mean,
        delta_v_std,
    }
}

/// Runs every controller on every scenario at every interval.
///
/// `base` supplies everything except the scenario, the interval and the
/// seed. Runs execute in parallel; results are ordered deterministically.
pub fn sweep_control_interval(scenarios: &[Scenario], base: &RunSetup, spec: &SweepSpec) -> Result<SweepOutput> {
    if spec.dts.is_empty() || scenarios.is_empty() || spec.controllers.is_empty() || spec.repetitions == 0 {
        return Err(Error::invalid("sweep needs intervals, scenarios, controllers and repetitions"));
    }
    if spec.dts.iter().any(|dt| !(*dt > 0.0)) {
        return Err(Error::invalid("control intervals must be positive"));
    }
    let mut jobs = Vec::new();
    for &dt in &spec.dts {
        for ctrl in &spec.controllers {
            for sc in scenarios {
                for rep in 0..spec.repetitions {
                    jobs.push((dt, *ctrl, sc, rep));
                }
            }
        }
    }
    let results: Vec<Result<RunSummary>> = jobs
        .par_iter()
        .map(|&(dt, ctrl, sc, rep)| {
            let setup = RunSetup {
                scenario: sc,
                cfg: super::LoopConfig { dt_ctrl: dt, ..base.cfg },
                seed: run_seed(spec.base_seed, sc.id, rep),
                ..*base
            };
            run(&setup, &ctrl).map(|log| log.summary)
        })
        .collect();

    let per_cell = scenarios.len() * spec.repetitions;
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for (cell, chunk) in results.chunks(per_cell).enumerate() {
        let (dt, ctrl, _, _) = jobs[cell * per_cell];
        let ok: Vec<&RunSummary> = chunk.iter().filter_map(|r| r.as_ref().ok()).collect();
        rows.push(summarize(dt, ctrl.name(), &ok, chunk.len() - ok.len()));
        runs.extend(ok.into_iter().cloned());
    }
    Ok(SweepOutput { rows, runs })
}
