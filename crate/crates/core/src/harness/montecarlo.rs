use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::stats::{StreamingStats, Summary};
use crate::error::{Error, Result};
use crate::policy::SnDnnModel;
use crate::rendezvous::{run, run_seed, sweep_control_interval, Controller, RunSetup, SweepOutput, SweepSpec};
use crate::scenario::{Catalog, Scenario, UncertaintyProfile};
use crate::training::{init_model, train, Dataset, LossWeights, TrainConfig};

/// Runs `f` on a pool with `parallelism` workers (0 = all cores).
pub fn with_pool<T: Send>(parallelism: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::invalid(format!("cannot build a pool of {parallelism} threads: {e}")))?;
    Ok(pool.install(f))
}

/// Scenarios selected by `sim.split`.
pub fn sim_scenarios<'a>(cfg: &RunConfig, catalog: &'a Catalog) -> &'a [Scenario] {
    match cfg.sim.split.as_str() {
        "train" => catalog.train(),
        "test" => catalog.test(),
        _ => &catalog.scenarios,
    }
}

/// One Monte-Carlo run. Timing lives in [`McTiming`] so this record is a
/// deterministic function of the configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub scenario_id: usize,
    pub repetition: usize,
    pub controller: String,
    pub seed: u64,
    pub dt_ctrl: f64,
    pub delivery_error: f64,
    pub delta_v: f64,
    pub over_budget: bool,
    pub latch_time: Option<f64>,
    pub latch_bound: Option<f64>,
    pub clipped_steps: usize,
    pub infeasible_steps: usize,
    pub step_failures: usize,
    /// Set when the run itself aborted; the metrics are then `NaN`.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McTiming {
    pub median_wall_s: f64,
    pub max_wall_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerStats {
    pub controller: String,
    pub delivery: Summary,
    pub delta_v: Summary,
    pub wall: Summary,
    pub failed: usize,
    pub over_budget: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McOutput {
    /// Ordered by (scenario, repetition, controller).
    pub rows: Vec<McRow>,
    pub timing: Vec<McTiming>,
    /// One entry per controller, in configuration order.
    pub stats: Vec<ControllerStats>,
}

fn run_one(
    cfg: &RunConfig,
    sc: &Scenario,
    model: &SnDnnModel,
    profile: &UncertaintyProfile,
    ctrl: &Controller,
    rep: usize,
) -> (McRow, McTiming) {
    let seed = run_seed(cfg.seed, sc.id, rep);
    let setup = RunSetup {
        scenario: sc,
        model,
        gains: cfg.gains(),
        profile,
        plant: cfg.plant(),
        cfg: cfg.loop_config(),
        seed,
    };
    let mut row = McRow {
        scenario_id: sc.id,
        repetition: rep,
        controller: ctrl.name().to_string(),
        seed,
        dt_ctrl: cfg.sim.dt_ctrl,
        delivery_error: f64::NAN,
        delta_v: f64::NAN,
        over_budget: false,
        latch_time: None,
        latch_bound: None,
        clipped_steps: 0,
        infeasible_steps: 0,
        step_failures: 0,
        error: None,
    };
    let mut timing = McTiming {
        median_wall_s: f64::NAN,
        max_wall_s: f64::NAN,
    };
    match run(&setup, ctrl) {
        Ok(log) => {
            let s = log.summary;
            row.delivery_error = s.delivery_error;
            row.delta_v = s.delta_v;
            row.over_budget = s.delta_v > cfg.sim.delta_v_budget;
            row.latch_time = s.latch_time;
            row.latch_bound = s.latch_bound;
            row.clipped_steps = s.clipped_steps;
            row.infeasible_steps = s.infeasible_steps;
            row.step_failures = s.failures.len();
            timing = McTiming {
                median_wall_s: s.median_wall_s,
                max_wall_s: s.max_wall_s,
            };
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    (row, timing)
}

/// Every configured controller on every scenario, `sim.repetitions` times.
///
/// A failing run is recorded with its error and does not stop the batch.
pub fn monte_carlo(cfg: &RunConfig, scenarios: &[Scenario], model: &SnDnnModel) -> Result<McOutput> {
    cfg.validate()?;
    if scenarios.is_empty() {
        return Err(Error::invalid("Monte-Carlo needs at least one scenario"));
    }
    let controllers = cfg.controllers()?;
    let profile = cfg.sim_profile()?;
    let mut jobs = Vec::new();
    for sc in scenarios {
        for rep in 0..cfg.sim.repetitions {
            for ctrl in &controllers {
                jobs.push((sc, rep, *ctrl));
            }
        }
    }
    let done: Vec<(McRow, McTiming)> = with_pool(cfg.parallelism, || {
        jobs.par_iter()
            .map(|(sc, rep, ctrl)| run_one(cfg, sc, model, &profile, ctrl, *rep))
            .collect()
    })?;
    let (rows, timing): (Vec<McRow>, Vec<McTiming>) = done.into_iter().unzip();
    let stats = controller_stats(&rows, &timing, &controllers);
    Ok(McOutput { rows, timing, stats })
}

/// Aggregates rows per controller by streaming through them in order.
pub fn controller_stats(rows: &[McRow], timing: &[McTiming], controllers: &[Controller]) -> Vec<ControllerStats> {
    controllers
        .iter()
        .map(|c| {
            let name = c.name();
            let (mut de, mut dv, mut wall) = (StreamingStats::new(), StreamingStats::new(), StreamingStats::new());
            let (mut failed, mut over) = (0, 0);
            for (r, t) in rows.iter().zip(timing).filter(|(r, _)| r.controller == name) {
                if r.error.is_some() {
                    failed += 1;
                    continue;
                }
                de.push(r.delivery_error);
                dv.push(r.delta_v);
                wall.push(t.median_wall_s);
                over += usize::from(r.over_budget);
            }
            ControllerStats {
                controller: name.to_string(),
                delivery: de.summary(),
                delta_v: dv.summary(),
                wall: wall.summary(),
                failed,
                over_budget: over,
            }
        })
        .collect()
}

/// Control-interval sweep of NR against SN-DNN-only guidance.
pub fn interval_sweep(cfg: &RunConfig, scenarios: &[Scenario], model: &SnDnnModel) -> Result<SweepOutput> {
    cfg.validate()?;
    let profile = cfg.sim_profile()?;
    let base = RunSetup {
        scenario: scenarios.first().ok_or_else(|| Error::invalid("sweep needs scenarios"))?,
        model,
        gains: cfg.gains(),
        profile: &profile,
        plant: cfg.plant(),
        cfg: cfg.loop_config(),
        seed: 0,
    };
    let spec = SweepSpec {
        dts: cfg.sweep.intervals.clone(),
        repetitions: cfg.sweep.repetitions,
        base_seed: cfg.seed,
        controllers: vec![Controller::NeuralRendezvous, Controller::SnDnn],
    };
    with_pool(cfg.parallelism, || sweep_control_interval(scenarios, &base, &spec))?
}

/// Delivery error and effort of SN-DNN guidance trained at one weight ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    /// `c_x / c_u`.
    pub ratio: f64,
    pub train_seed: u64,
    pub runs: usize,
    pub delivery_median: f64,
    pub delivery_mean: f64,
    pub delta_v_mean: f64,
    pub final_train_loss: f64,
}

/// Trains one policy per (ratio, seed) and flies it without tracking.
///
/// `c_u` is held at its configured value and `c_x = ratio · c_u`.
pub fn ratio_sweep(
    cfg: &RunConfig,
    train_ds: &Dataset,
    test_ds: Option<&Dataset>,
    scenarios: &[Scenario],
) -> Result<Vec<RatioRow>> {
    cfg.validate()?;
    if scenarios.is_empty() {
        return Err(Error::invalid("ratio sweep needs scenarios"));
    }
    let profile = cfg.sim_profile()?;
    let mut cells = Vec::new();
    for &ratio in &cfg.sweep.ratios {
        for &seed in &cfg.sweep.ratio_seeds {
            cells.push((ratio, seed));
        }
    }
    let rows = with_pool(cfg.parallelism, || {
        cells
            .par_iter()
            .map(|&(ratio, seed)| -> Result<RatioRow> {
                let tc = TrainConfig {
                    epochs: cfg.sweep.ratio_epochs,
                    weights: LossWeights {
                        c_u: cfg.train.c_u,
                        c_x: ratio * cfg.train.c_u,
                    },
                    early_stop: None,
                    ..cfg.train_config(seed)
                };
                let model = init_model(cfg.architecture(), train_ds, seed)?;
                let trained = train(model, train_ds, test_ds, &tc)?;
                let mut de = StreamingStats::new();
                let mut dv = StreamingStats::new();
                for sc in scenarios {
                    for rep in 0..cfg.sweep.repetitions {
                        let setup = RunSetup {
                            scenario: sc,
                            model: &trained.model,
                            gains: cfg.gains(),
                            profile: &profile,
                            plant: cfg.plant(),
                            cfg: cfg.loop_config(),
                            seed: run_seed(cfg.seed, sc.id, rep),
                        };
                        if let Ok(log) = run(&setup, &Controller::SnDnn) {
                            de.push(log.summary.delivery_error);
                            dv.push(log.summary.delta_v);
                        }
                    }
                }
                Ok(RatioRow {
                    ratio,
                    train_seed: seed,
                    runs: de.len(),
                    delivery_median: de.percentile(50.0),
                    delivery_mean: de.mean(),
                    delta_v_mean: dv.mean(),
                    final_train_loss: trained.history.last().map_or(f64::NAN, |h| h.train_loss),
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(rows)
}
