use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use super::montecarlo::{McOutput, RatioRow};
use super::stats::{StreamingStats, PERCENTILES};
use crate::error::{Error, Result};
use crate::rendezvous::SweepOutput;
use crate::training::EpochRecord;

/// Schema version shared by every text artifact.
pub const ARTIFACT_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Versioned first line plus a one-line JSON echo of the configuration.
pub fn header(kind: &str, cfg: &RunConfig) -> String {
    let echo = serde_json::to_string(cfg).expect("config is plain data");
    format!("# rendezvous-{kind} v{ARTIFACT_VERSION}\n# config {echo}\n")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub fn mc_rows_csv(cfg: &RunConfig, out: &McOutput) -> String {
    let mut s = header("montecarlo", cfg);
    s.push_str(
        "scenario_id,repetition,controller,seed,dt_ctrl,delivery_error_km,delta_v_kms,over_budget,\
latch_time_s,latch_bound_km,clipped_steps,infeasible_steps,step_failures,error\n",
    );
    for r in &out.rows {
        let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.scenario_id,
            r.repetition,
            r.controller,
            r.seed,
            r.dt_ctrl,
            r.delivery_error,
            r.delta_v,
            u8::from(r.over_budget),
            opt(r.latch_time),
            opt(r.latch_bound),
            r.clipped_steps,
            r.infeasible_steps,
            r.step_failures,
            err
        );
    }
    s
}

/// Wall-clock per run, kept apart so the other artifacts are reproducible.
pub fn mc_timing_csv(cfg: &RunConfig, out: &McOutput) -> String {
    let mut s = header("timing", cfg);
    s.push_str("scenario_id,repetition,controller,median_wall_s,max_wall_s\n");
    for (r, t) in out.rows.iter().zip(&out.timing) {
        let _ = writeln!(
            s,
            "{},{},{},{:e},{:e}",
            r.scenario_id, r.repetition, r.controller, t.median_wall_s, t.max_wall_s
        );
    }
    s
}

pub fn mc_summary_csv(cfg: &RunConfig, out: &McOutput) -> String {
    let mut s = header("montecarlo-summary", cfg);
    s.push_str("controller,metric,n,failed,over_budget,mean,std,min,max");
    for q in PERCENTILES {
        let _ = write!(s, ",p{q}");
    }
    s.push('\n');
    for c in &out.stats {
        for (metric, sum) in [("delivery_error_km", &c.delivery), ("delta_v_kms", &c.delta_v)] {
            let _ = write!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                c.controller, metric, sum.n, c.failed, c.over_budget, sum.mean, sum.std, sum.min, sum.max
            );
            for p in sum.percentiles {
                let _ = write!(s, ",{p}");
            }
            s.push('\n');
        }
    }
    s
}

pub fn sweep_interval_csv(cfg: &RunConfig, out: &SweepOutput) -> String {
    let mut s = header("sweep-interval", cfg);
    s.push_str("dt,controller,runs,failed,delivery_mean,delivery_std,delivery_median,delta_v_mean,delta_v_std\n");
    for r in &out.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.dt,
            r.controller,
            r.runs,
            r.failed,
            r.delivery_mean,
            r.delivery_std,
            r.delivery_median,
            r.delta_v_mean,
            r.delta_v_std
        );
    }
    s
}

pub fn sweep_ratio_csv(cfg: &RunConfig, rows: &[RatioRow]) -> String {
    let mut s = header("sweep-ratio", cfg);
    s.push_str("ratio,train_seed,runs,delivery_median,delivery_mean,delta_v_mean,final_train_loss\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.ratio, r.train_seed, r.runs, r.delivery_median, r.delivery_mean, r.delta_v_mean, r.final_train_loss
        );
    }
    s
}

pub fn history_csv(cfg: &RunConfig, history: &[EpochRecord]) -> String {
    let mut s = header("history", cfg);
    s.push_str("epoch,train_loss,train_control,train_state,test_loss,test_sup_error,lr,grad_norm\n");
    for h in history {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            h.epoch,
            h.train_loss,
            h.train_control,
            h.train_state,
            opt(h.test_loss),
            opt(h.test_sup_error),
            h.lr,
            h.grad_norm
        );
    }
    s
}

/// Record that lets a run be reproduced and its outputs checked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub version: u32,
    pub command: String,
    pub crate_version: String,
    pub config: RunConfig,
    pub seed: u64,
    /// File name to SHA-256 of its contents.
    pub artifacts: BTreeMap<String, String>,
    /// Inputs read by the command, with their hashes.
    pub inputs: BTreeMap<String, String>,
}

impl Metadata {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Self {
            version: ARTIFACT_VERSION,
            command: command.to_string(),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
            seed: cfg.seed,
            artifacts: BTreeMap::new(),
            inputs: BTreeMap::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metadata is plain data")
    }
}

// ---------------------------------------------------------------------------
// Reading our own CSVs back for the figure bundles.

/// Comment-stripped CSV with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn parse(text: &str, name: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        let head = lines
            .next()
            .ok_or_else(|| Error::invalid(format!("{name}: no header row")))?;
        let columns: Vec<String> = head.split(',').map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, l) in lines.enumerate() {
            let cells: Vec<String> = l.split(',').map(str::to_string).collect();
            if cells.len() != columns.len() {
                return Err(Error::invalid(format!(
                    "{name}: row {} has {} cells, header has {}",
                    i + 1,
                    cells.len(),
                    columns.len()
                )));
            }
            rows.push(cells);
        }
        Ok(Self { columns, rows })
    }

    pub fn col(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::invalid(format!("missing column {name:?}")))
    }

    pub fn f64_at(&self, row: usize, col: usize) -> Result<f64> {
        let cell = &self.rows[row][col];
        if cell.is_empty() {
            return Ok(f64::NAN);
        }
        cell.parse()
            .map_err(|_| Error::invalid(format!("not a number: {cell:?} in column {}", self.columns[col])))
    }
}

/// Mean delivery error per (scenario, controller), from Monte-Carlo rows.
pub fn plot_error_vs_iso(cfg: &RunConfig, mc: &Table) -> Result<String> {
    let (sid, ctrl, de, err) = (
        mc.col("scenario_id")?,
        mc.col("controller")?,
        mc.col("delivery_error_km")?,
        mc.col("error")?,
    );
    let mut cells: BTreeMap<(usize, String), StreamingStats> = BTreeMap::new();
    for i in 0..mc.rows.len() {
        if !mc.rows[i][err].is_empty() {
            continue;
        }
        let id: usize = mc.rows[i][sid]
            .parse()
            .map_err(|_| Error::invalid("scenario_id is not an integer"))?;
        cells
            .entry((id, mc.rows[i][ctrl].clone()))
            .or_default()
            .push(mc.f64_at(i, de)?);
    }
    let mut s = header("fig-error-vs-iso", cfg);
    s.push_str("scenario_id,controller,n,delivery_mean,delivery_std,delivery_median\n");
    for ((id, c), st) in &cells {
        let _ = writeln!(s, "{id},{c},{},{},{},{}", st.len(), st.mean(), st.std(), st.percentile(50.0));
    }
    Ok(s)
}

/// One row per (interval, controller), copied from the sweep table.
pub fn plot_error_vs_interval(cfg: &RunConfig, sweep: &Table) -> Result<String> {
    let cols = ["dt", "controller", "delivery_mean", "delivery_std", "delivery_median", "delta_v_mean"];
    let idx: Vec<usize> = cols.iter().map(|c| sweep.col(c)).collect::<Result<_>>()?;
    let mut s = header("fig-error-vs-interval", cfg);
    s.push_str(&cols.join(","));
    s.push('\n');
    for row in &sweep.rows {
        let cells: Vec<&str> = idx.iter().map(|&i| row[i].as_str()).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    Ok(s)
}

/// Seed-averaged delivery error and effort per weight ratio.
pub fn plot_error_vs_ratio(cfg: &RunConfig, ratio: &Table) -> Result<String> {
    let (rc, dm, dv) = (ratio.col("ratio")?, ratio.col("delivery_median")?, ratio.col("delta_v_mean")?);
    let mut cells: Vec<(f64, StreamingStats, StreamingStats)> = Vec::new();
    for i in 0..ratio.rows.len() {
        let r = ratio.f64_at(i, rc)?;
        let at = match cells.iter().position(|c| c.0 == r) {
            Some(k) => k,
            None => {
                cells.push((r, StreamingStats::new(), StreamingStats::new()));
                cells.len() - 1
            }
        };
        cells[at].1.push(ratio.f64_at(i, dm)?);
        cells[at].2.push(ratio.f64_at(i, dv)?);
    }
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut s = header("fig-error-vs-ratio", cfg);
    s.push_str("ratio,seeds,delivery_median_mean,delta_v_mean\n");
    for (r, d, v) in &cells {
        let _ = writeln!(s, "{r},{},{},{}", d.len(), d.mean(), v.mean());
    }
    Ok(s)
}
