//! Configuration, pipeline steps and result files for batch studies.
//!
//! The command-line front end is a thin layer over this module. Each step
//! returns plain data; the text artifacts are produced by the functions in
//! [`artifacts`] so that their bytes depend only on the configuration.

pub mod artifacts;
mod bounds;
mod config;
mod montecarlo;
mod stats;

pub use bounds::{bound_report, BoundsOutput, BoundsSection};
pub use config::{parse_controller, CatalogSection, DataSection, RunConfig, SimSection, SweepSection, TrainSection};
pub use montecarlo::{
    controller_stats, interval_sweep, monte_carlo, ratio_sweep, sim_scenarios, with_pool, ControllerStats, McOutput,
    McRow, McTiming, RatioRow,
};
pub use stats::{percentile_of_sorted, StreamingStats, Summary, PERCENTILES};

use crate::error::Result;
use crate::scenario::{generate_catalog, Catalog};
use crate::training::{generate_dataset, init_model, train, Dataset, Split, TrainResult};

pub fn gen_catalog(cfg: &RunConfig) -> Result<Catalog> {
    cfg.validate()?;
    generate_catalog(cfg.catalog.n, cfg.seed, &cfg.catalog.ranges())
}

/// Training rows from the training split and, when requested, held-out
/// rows from the test split.
pub fn gen_data(cfg: &RunConfig, catalog: &Catalog) -> Result<(Dataset, Option<Dataset>)> {
    cfg.validate()?;
    with_pool(cfg.parallelism, || {
        let train_ds = generate_dataset(catalog, &cfg.dataset_config(Split::Train), cfg.seed)?;
        let test_cfg = cfg.dataset_config(Split::Test);
        let test_ds = if test_cfg.n_control + test_cfg.n_state > 0 && !catalog.test().is_empty() {
            Some(generate_dataset(catalog, &test_cfg, cfg.seed.wrapping_add(1))?)
        } else {
            None
        };
        Ok((train_ds, test_ds))
    })?
}

pub fn train_policy(cfg: &RunConfig, train_ds: &Dataset, test_ds: Option<&Dataset>) -> Result<TrainResult> {
    cfg.validate()?;
    let model = init_model(cfg.architecture(), train_ds, cfg.seed)?;
    with_pool(cfg.parallelism, || train(model, train_ds, test_ds, &cfg.train_config(cfg.seed)))?
}

#[cfg(test)]
mod tests;
