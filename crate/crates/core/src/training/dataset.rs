//! Imitation dataset: sampled estimates with MPC control and rollout labels.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    integrate, DynamicsModel, DynamicsParams, IsoElements, MassModel, SpacecraftState, Vec3,
};
use crate::error::{Error, Result};
use crate::mpc::{solve, MpcConfig, MpcProblem, TerminalMode};
use crate::scenario::{estimate, Catalog, UncertaintyProfile};

pub const DATASET_MAGIC: [u8; 8] = *b"NRDATA\0\0";
pub const DATASET_VERSION: u32 = 1;

/// Which loss term a row was sampled for. Every row carries both labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowKind {
    /// Time drawn from the whole horizon `[0, t_f)`.
    Control,
    /// Time drawn from the early window `[0, t_state]`.
    State,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub scenario_id: u32,
    pub kind: RowKind,
    pub x_bar: SpacecraftState,
    /// Estimated target elements valid at `t_bar`.
    pub oe_bar: IsoElements,
    pub t_bar: f64,
    pub t_f: f64,
    pub rho_bar: Vec3,
    pub dt_bar: f64,
    pub mass: f64,
    pub u_label: Vec3,
    pub x_rollout_label: SpacecraftState,
    pub mpc_iterations: u32,
    pub mpc_converged: bool,
    pub mpc_cost: f64,
    pub mpc_terminal_error: f64,
}

/// Which half of the catalog rows are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_control: usize,
    pub n_state: usize,
    pub t_state: f64,
    pub dt_bar: f64,
    /// RK4 steps used for each rollout over `dt_bar`.
    pub rollout_steps: usize,
    pub rho_radius: f64,
    pub mass: MassModel,
    pub u_max: f64,
    pub model: DynamicsModel,
    pub mpc: MpcConfig,
    pub profile: UncertaintyProfile,
    pub split: Split,
}

impl DatasetConfig {
    pub fn new(t_f: f64) -> Self {
        Self {
            n_control: 10_000,
            n_state: 10_000,
            t_state: 3600.0,
            dt_bar: 10.0,
            rollout_steps: 1,
            rho_radius: 100.0,
            mass: MassModel::default(),
            u_max: 3.0,
            model: DynamicsModel::TwoBodyLvlh,
            mpc: MpcConfig {
                c0: 0.0,
                c1: 1.0,
                terminal_mode: TerminalMode::Hard,
                ..MpcConfig::default()
            },
            profile: UncertaintyProfile::paper(t_f),
            split: Split::Train,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_control + self.n_state == 0 {
            return Err(Error::invalid("dataset needs at least one row"));
        }
        if !(self.dt_bar > 0.0) || self.rollout_steps == 0 || !(self.t_state >= 0.0) {
            return Err(Error::invalid("need dt_bar > 0, rollout_steps >= 1, t_state >= 0"));
        }
        if !(self.rho_radius >= 0.0) || !(self.u_max > 0.0) {
            return Err(Error::invalid("need rho_radius >= 0 and u_max > 0"));
        }
        self.mass.validate()?;
        self.mpc.validate()
    }

    /// Dynamics used by rollouts: constant mass at the row's mass.
    pub fn rollout_params(&self, row: &TrainingSample) -> DynamicsParams {
        DynamicsParams {
            iso: row.oe_bar,
            mass: MassModel::constant(row.mass),
            u_max: self.u_max,
            model: self.model,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub rows: Vec<TrainingSample>,
    /// Rows whose label solve failed, by reason.
    pub dropped_infeasible: usize,
    pub dropped_other: usize,
    pub seed: u64,
    pub cfg: DatasetConfig,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dropped(&self) -> usize {
        self.dropped_infeasible + self.dropped_other
    }
}

/// Constant-input RK4 rollout over `[t_bar, t_bar + dt_bar]`.
pub fn label_rollout(row: &TrainingSample, u: &Vec3, cfg: &DatasetConfig) -> Result<SpacecraftState> {
    let step = row.dt_bar / cfg.rollout_steps as f64;
    let u = *u;
    let traj = integrate(
        &row.x_bar,
        &row.oe_bar,
        row.mass,
        row.t_bar,
        row.t_bar + row.dt_bar,
        move |_| Ok(u),
        &cfg.rollout_params(row),
        step * (1.0 + 1e-12),
    )?;
    Ok(traj.last_state())
}

enum RowOutcome {
    Kept(Box<TrainingSample>),
    Infeasible,
    Failed,
}

fn make_row(catalog: &Catalog, cfg: &DatasetConfig, seed: u64, i: usize) -> Result<RowOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    let pool = match cfg.split {
        Split::Train => catalog.train(),
        Split::Test => catalog.test(),
    };
    let kind = if i < cfg.n_control { RowKind::Control } else { RowKind::State };
    let s = &pool[rng.random_range(0..pool.len())];
    let t_bar = match kind {
        RowKind::Control => rng.random_range(0.0..s.t_f),
        RowKind::State => rng.random_range(0.0..=cfg.t_state.min(s.t_f - cfg.dt_bar)),
    };
    let d: [f64; 3] = UnitSphere.sample(&mut rng);
    let rho_bar = Vec3::new(d[0], d[1], d[2]) * cfg.rho_radius;
    let (x_true, oe_true) = s.ideal_state(t_bar)?;
    let (x_bar, oe_bar) = estimate(&x_true, &oe_true, t_bar, &cfg.profile, &mut rng)?;
    let mass = cfg.mass.wet_mass;
    let problem = MpcProblem {
        x_hat: x_bar,
        oe_hat: oe_bar,
        tau: t_bar,
        t_f: s.t_f,
        rho: rho_bar,
        mass,
        cfg: cfg.mpc,
        dyn_params: DynamicsParams {
            iso: oe_bar,
            mass: cfg.mass,
            u_max: cfg.u_max,
            model: cfg.model,
        },
    };
    let sol = match solve(&problem) {
        Ok(sol) => sol,
        Err(Error::Infeasible { .. }) => return Ok(RowOutcome::Infeasible),
        Err(e) if e.is_validation() => return Err(e),
        Err(_) => return Ok(RowOutcome::Failed),
    };
    let mut row = TrainingSample {
        scenario_id: s.id as u32,
        kind,
        x_bar,
        oe_bar,
        t_bar,
        t_f: s.t_f,
        rho_bar,
        dt_bar: cfg.dt_bar.min(s.t_f - t_bar),
        mass,
        u_label: sol.u_seq[0],
        x_rollout_label: x_bar,
        mpc_iterations: sol.iterations as u32,
        mpc_converged: sol.converged,
        mpc_cost: sol.cost,
        mpc_terminal_error: sol.terminal_error,
    };
    if !(row.dt_bar > 0.0) {
        return Ok(RowOutcome::Failed);
    }
    row.x_rollout_label = label_rollout(&row, &row.u_label, cfg)?;
    Ok(RowOutcome::Kept(Box::new(row)))
}

/// Samples `n_control + n_state` rows and labels each with the MPC first
/// input and the RK4 rollout under that input.
///
/// Rows whose label solve fails are dropped and counted. The result only
/// depends on `(catalog, cfg, seed)`: each row has its own RNG stream, so
/// rows can be labeled in parallel.
pub fn generate_dataset(catalog: &Catalog, cfg: &DatasetConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let pool = match cfg.split {
        Split::Train => catalog.train(),
        Split::Test => catalog.test(),
    };
    if pool.is_empty() {
        return Err(Error::invalid("catalog split is empty"));
    }
    let n = cfg.n_control + cfg.n_state;
    let outcomes: Vec<Result<RowOutcome>> =
        (0..n).into_par_iter().map(|i| make_row(catalog, cfg, seed, i)).collect();
    let mut ds = Dataset {
        rows: Vec::with_capacity(n),
        dropped_infeasible: 0,
        dropped_other: 0,
        seed,
        cfg: *cfg,
    };
    for o in outcomes {
        match o? {
            RowOutcome::Kept(r) => ds.rows.push(*r),
            RowOutcome::Infeasible => ds.dropped_infeasible += 1,
            RowOutcome::Failed => ds.dropped_other += 1,
        }
    }
    Ok(ds)
}

// ---------------------------------------------------------------------------
// Binary format: magic, version, a JSON header (length-prefixed) carrying the
// configuration and counts, then fixed-width little-endian records.

#[derive(Serialize, Deserialize)]
struct Header {
    n_rows: usize,
    dropped_infeasible: usize,
    dropped_other: usize,
    seed: u64,
    cfg: DatasetConfig,
}

const RECORD_F64S: usize = 33;
pub const RECORD_BYTES: usize = 16 + 8 * RECORD_F64S;

fn encode_row(r: &TrainingSample, out: &mut Vec<u8>) {
    let kind = match r.kind {
        RowKind::Control => 0u32,
        RowKind::State => 1,
    };
    for v in [r.scenario_id, kind, r.mpc_iterations, r.mpc_converged as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let oe = &r.oe_bar;
    let vals: [f64; RECORD_F64S] = [
        r.x_bar.p.x,
        r.x_bar.p.y,
        r.x_bar.p.z,
        r.x_bar.v.x,
        r.x_bar.v.y,
        r.x_bar.v.z,
        oe.semi_major_axis,
        oe.eccentricity,
        oe.inclination,
        oe.raan,
        oe.arg_periapsis,
        oe.anomaly_at_epoch,
        oe.epoch,
        oe.mu_sun,
        r.t_bar,
        r.t_f,
        r.rho_bar.x,
        r.rho_bar.y,
        r.rho_bar.z,
        r.dt_bar,
        r.mass,
        r.u_label.x,
        r.u_label.y,
        r.u_label.z,
        r.x_rollout_label.p.x,
        r.x_rollout_label.p.y,
        r.x_rollout_label.p.z,
        r.x_rollout_label.v.x,
        r.x_rollout_label.v.y,
        r.x_rollout_label.v.z,
        r.mpc_cost,
        r.mpc_terminal_error,
        0.0,
    ];
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn decode_row(b: &[u8]) -> Option<TrainingSample> {
    let u = |k: usize| u32::from_le_bytes(b[4 * k..4 * k + 4].try_into().expect("4 bytes"));
    let f = |k: usize| f64::from_le_bytes(b[16 + 8 * k..24 + 8 * k].try_into().expect("8 bytes"));
    let v3 = |k: usize| Vec3::new(f(k), f(k + 1), f(k + 2));
    let kind = match u(1) {
        0 => RowKind::Control,
        1 => RowKind::State,
        _ => return None,
    };
    Some(TrainingSample {
        scenario_id: u(0),
        kind,
        mpc_iterations: u(2),
        mpc_converged: u(3) != 0,
        x_bar: SpacecraftState::new(v3(0), v3(3)),
        oe_bar: IsoElements {
            semi_major_axis: f(6),
            eccentricity: f(7),
            inclination: f(8),
            raan: f(9),
            arg_periapsis: f(10),
            anomaly_at_epoch: f(11),
            epoch: f(12),
            mu_sun: f(13),
        },
        t_bar: f(14),
        t_f: f(15),
        rho_bar: v3(16),
        dt_bar: f(19),
        mass: f(20),
        u_label: v3(21),
        x_rollout_label: SpacecraftState::new(v3(24), v3(27)),
        mpc_cost: f(30),
        mpc_terminal_error: f(31),
    })
}

impl Dataset {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&Header {
            n_rows: self.rows.len(),
            dropped_infeasible: self.dropped_infeasible,
            dropped_other: self.dropped_other,
            seed: self.seed,
            cfg: self.cfg,
        })
        .expect("header serializes");
        let mut out = Vec::with_capacity(16 + header.len() + RECORD_BYTES * self.rows.len());
        out.extend_from_slice(&DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for r in &self.rows {
            encode_row(r, &mut out);
        }
        out
    }

    pub fn from_bytes(buf: &[u8], path: &Path) -> Result<Self> {
        let fail = |reason: String| Error::Format {
            path: path.to_path_buf(),
            reason,
        };
        if buf.len() < 16 || buf[..8] != DATASET_MAGIC {
            return Err(fail("not a dataset file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(buf[8..12].try_into().expect("4 bytes"));
        if version != DATASET_VERSION {
            return Err(fail(format!("unsupported dataset version {version}")));
        }
        let hlen = u32::from_le_bytes(buf[12..16].try_into().expect("4 bytes")) as usize;
        let body = buf.get(16..16 + hlen).ok_or_else(|| fail("truncated header".into()))?;
        let h: Header = serde_json::from_slice(body).map_err(|e| fail(format!("header: {e}")))?;
        let records = &buf[16 + hlen..];
        if records.len() != h.n_rows * RECORD_BYTES {
            return Err(fail(format!(
                "expected {} rows ({} bytes), found {} bytes",
                h.n_rows,
                h.n_rows * RECORD_BYTES,
                records.len()
            )));
        }
        let rows = records
            .chunks_exact(RECORD_BYTES)
            .map(decode_row)
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| fail("bad row kind".into()))?;
        Ok(Self {
            rows,
            dropped_infeasible: h.dropped_infeasible,
            dropped_other: h.dropped_other,
            seed: h.seed,
            cfg: h.cfg,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf, path)
    }
}
