use serde::{Deserialize, Serialize};

use super::bounds::BoundsSection;
use crate::control::{ControllerGains, TrajectoryConfig};
use crate::dynamics::{DynamicsModel, MassModel};
use crate::error::{Error, Result};
use crate::mpc::{MpcConfig, TerminalMode};
use crate::policy::Architecture;
use crate::rendezvous::{Controller, LoopConfig, Plant};
use crate::scenario::{CatalogRanges, UncertaintyProfile};
use crate::training::{DatasetConfig, EarlyStop, LossWeights, Split, TrainConfig};

/// Every parameter of the pipeline, grouped by command.
///
/// Defaults describe the desk-scale study: 20 scenarios, 500 labels on a
/// 60 s grid and 2000 training epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub parallelism: usize,
    pub catalog: CatalogSection,
    pub data: DataSection,
    pub train: TrainSection,
    pub sim: SimSection,
    pub sweep: SweepSection,
    pub bounds: BoundsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            parallelism: 1,
            catalog: CatalogSection::default(),
            data: DataSection::default(),
            train: TrainSection::default(),
            sim: SimSection::default(),
            sweep: SweepSection::default(),
            bounds: BoundsSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CatalogSection {
    pub n: usize,
    pub t_f: f64,
    pub train_fraction: f64,
    pub rho_radius: f64,
    pub eccentricity: (f64, f64),
    pub perihelion_au: (f64, f64),
    pub rel_speed: (f64, f64),
}

impl Default for CatalogSection {
    fn default() -> Self {
        let r = CatalogRanges::default();
        Self {
            n: 20,
            t_f: r.t_f,
            train_fraction: r.train_fraction,
            rho_radius: r.rho_radius,
            eccentricity: r.eccentricity,
            perihelion_au: r.perihelion_au,
            rel_speed: r.rel_speed,
        }
    }
}

impl CatalogSection {
    pub fn ranges(&self) -> CatalogRanges {
        CatalogRanges {
            eccentricity: self.eccentricity,
            perihelion_au: self.perihelion_au,
            rel_speed: self.rel_speed,
            rho_radius: self.rho_radius,
            t_f: self.t_f,
            train_fraction: self.train_fraction,
            ..CatalogRanges::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub n_control: usize,
    pub n_state: usize,
    /// Rows drawn from the test split, as a fraction of the training rows.
    pub test_fraction: f64,
    pub t_state: f64,
    pub dt_bar: f64,
    pub rollout_steps: usize,
    /// Grid spacing of the labeling MPC (s).
    pub mpc_dt_grid: f64,
    pub mpc_max_iter: usize,
    /// Multiplier on the navigation-noise profile used to perturb samples.
    pub noise_scale: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            n_control: 250,
            n_state: 250,
            test_fraction: 0.1,
            t_state: 3600.0,
            dt_bar: 10.0,
            rollout_steps: 1,
            mpc_dt_grid: 60.0,
            mpc_max_iter: 60,
            noise_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub cosine_decay: bool,
    pub c_u: f64,
    pub c_x: f64,
    pub n_layers: usize,
    pub width: usize,
    pub c_nn: f64,
    pub early_stop_loss: Option<f64>,
    pub early_stop_sup_error: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let w = LossWeights::default();
        Self {
            epochs: 2000,
            batch_size: 32,
            lr: 1e-3,
            cosine_decay: true,
            c_u: w.c_u,
            c_x: w.c_x,
            n_layers: 4,
            width: 32,
            c_nn: 25.0,
            early_stop_loss: None,
            early_stop_sup_error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub u_max: f64,
    pub wet_mass: f64,
    pub isp: f64,
    pub min_mass: f64,
    pub zero_gravity: bool,
    pub dt_ctrl: f64,
    /// Bound gate threshold (km); `inf` always passes.
    pub threshold: f64,
    pub t_s_override: Option<f64>,
    pub step_integrate: f64,
    pub build_steps_per_interval: usize,
    pub trajectory_step: f64,
    pub min_tgo: f64,
    pub k_e: f64,
    pub l_k: Option<f64>,
    /// Isotropic `Λ` (1/s) and `α` (1/s).
    pub lambda: f64,
    pub alpha: f64,
    /// Multiplier on the navigation-noise profile; 0 gives perfect navigation.
    pub noise_scale: f64,
    pub pd_kp: f64,
    pub pd_kd: f64,
    pub mpc_dt_grid: f64,
    /// Subset of NR, SNDNN, PD, ROBUST, LINMPC.
    pub controllers: Vec<String>,
    pub repetitions: usize,
    /// Runs above this delta-V (km/s) are flagged.
    pub delta_v_budget: f64,
    /// Which catalog split Monte-Carlo runs draw from: "test", "train" or "all".
    pub split: String,
}

impl Default for SimSection {
    fn default() -> Self {
        let m = MassModel::default();
        let g = ControllerGains::default();
        let lc = LoopConfig::default();
        Self {
            u_max: 3.0,
            wet_mass: m.wet_mass,
            isp: m.isp,
            min_mass: m.min_mass,
            zero_gravity: false,
            dt_ctrl: lc.dt_ctrl,
            threshold: lc.threshold,
            t_s_override: Some(26_400.0),
            step_integrate: lc.step_integrate,
            build_steps_per_interval: lc.build_steps_per_interval,
            trajectory_step: 60.0,
            min_tgo: lc.trajectory.min_tgo,
            k_e: lc.k_e,
            l_k: None,
            lambda: g.lambda[(0, 0)],
            alpha: g.alpha,
            noise_scale: 1.0,
            pd_kp: 1.0,
            pd_kd: 500.0,
            mpc_dt_grid: 600.0,
            controllers: ["NR", "SNDNN", "PD", "ROBUST", "LINMPC"].map(String::from).to_vec(),
            repetitions: 10,
            delta_v_budget: 0.6,
            split: "all".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub intervals: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Training seeds per ratio.
    pub ratio_seeds: Vec<u64>,
    /// Epochs per ratio training run.
    pub ratio_epochs: usize,
    pub repetitions: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            intervals: crate::rendezvous::DEFAULT_CONTROL_INTERVALS.to_vec(),
            ratios: vec![1e-2, 1.0, 1e2, 1e4],
            ratio_seeds: vec![1, 2, 3],
            ratio_epochs: 300,
            repetitions: 2,
        }
    }
}

/// Parses a controller name as used in configs and result files.
pub fn parse_controller(name: &str, sim: &SimSection) -> Result<Controller> {
    Ok(match name.to_ascii_uppercase().as_str() {
        "NR" => Controller::NeuralRendezvous,
        "SNDNN" => Controller::SnDnn,
        "PD" => Controller::Pd {
            kp: sim.pd_kp,
            kd: sim.pd_kd,
        },
        "ROBUST" => Controller::Robust,
        "LINMPC" => Controller::LinearMpc(MpcConfig {
            dt_grid: sim.mpc_dt_grid,
            single_convexification: true,
            ..MpcConfig::default()
        }),
        other => return Err(Error::invalid(format!("unknown controller {other:?}"))),
    })
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.catalog.n == 0 {
            return Err(Error::invalid("catalog.n must be at least 1"));
        }
        self.catalog.ranges().validate()?;
        self.dataset_config(Split::Train).validate()?;
        if !(0.0..=1.0).contains(&self.data.test_fraction) {
            return Err(Error::invalid("data.test_fraction must lie in [0, 1]"));
        }
        if !(self.data.noise_scale >= 0.0) || !(self.sim.noise_scale >= 0.0) {
            return Err(Error::invalid("noise scales must be non-negative"));
        }
        self.train_config(self.seed).validate()?;
        validate_architecture(&self.architecture())?;
        self.loop_config().validate()?;
        self.gains().validate()?;
        self.plant().mass.validate()?;
        positive("sim.u_max", self.sim.u_max)?;
        positive("sim.mpc_dt_grid", self.sim.mpc_dt_grid)?;
        positive("sim.delta_v_budget", self.sim.delta_v_budget)?;
        if self.sim.controllers.is_empty() || self.sim.repetitions == 0 {
            return Err(Error::invalid("sim needs controllers and repetitions >= 1"));
        }
        for c in &self.sim.controllers {
            parse_controller(c, &self.sim)?;
        }
        if !["test", "train", "all"].contains(&self.sim.split.as_str()) {
            return Err(Error::invalid("sim.split must be test, train or all"));
        }
        if self.sweep.intervals.iter().any(|d| !(*d > 0.0)) || self.sweep.intervals.is_empty() {
            return Err(Error::invalid("sweep.intervals must be positive and non-empty"));
        }
        if self.sweep.ratios.iter().any(|r| !(*r > 0.0)) || self.sweep.ratios.is_empty() {
            return Err(Error::invalid("sweep.ratios must be positive and non-empty"));
        }
        if self.sweep.ratio_seeds.is_empty() || self.sweep.repetitions == 0 {
            return Err(Error::invalid("sweep needs ratio seeds and repetitions >= 1"));
        }
        self.bounds.validate()?;
        Ok(())
    }

    pub fn data_profile(&self) -> Result<UncertaintyProfile> {
        UncertaintyProfile::paper(self.catalog.t_f).scaled(self.data.noise_scale)
    }

    pub fn sim_profile(&self) -> Result<UncertaintyProfile> {
        UncertaintyProfile::paper(self.catalog.t_f).scaled(self.sim.noise_scale)
    }

    pub fn dynamics_model(&self) -> DynamicsModel {
        if self.sim.zero_gravity {
            DynamicsModel::ZeroGravity
        } else {
            DynamicsModel::TwoBodyLvlh
        }
    }

    pub fn plant(&self) -> Plant {
        Plant {
            mass: MassModel {
                wet_mass: self.sim.wet_mass,
                isp: self.sim.isp,
                min_mass: self.sim.min_mass,
                ..MassModel::default()
            },
            u_max: self.sim.u_max,
            model: self.dynamics_model(),
        }
    }

    pub fn dataset_config(&self, split: Split) -> DatasetConfig {
        let base = DatasetConfig::new(self.catalog.t_f);
        let (n_control, n_state) = match split {
            Split::Train => (self.data.n_control, self.data.n_state),
            Split::Test => (
                (self.data.n_control as f64 * self.data.test_fraction).round() as usize,
                (self.data.n_state as f64 * self.data.test_fraction).round() as usize,
            ),
        };
        DatasetConfig {
            n_control,
            n_state,
            t_state: self.data.t_state,
            dt_bar: self.data.dt_bar,
            rollout_steps: self.data.rollout_steps,
            rho_radius: self.catalog.rho_radius,
            mass: self.plant().mass,
            u_max: self.sim.u_max,
            model: self.dynamics_model(),
            mpc: MpcConfig {
                dt_grid: self.data.mpc_dt_grid,
                max_iter: self.data.mpc_max_iter,
                terminal_mode: TerminalMode::Hard,
                ..base.mpc
            },
            profile: self.data_profile().unwrap_or(base.profile),
            split,
        }
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            n_layers: self.train.n_layers,
            width: self.train.width,
            c_nn: self.train.c_nn,
            u_max: self.sim.u_max,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let early_stop = match (self.train.early_stop_loss, self.train.early_stop_sup_error) {
            (None, None) => None,
            (l, s) => Some(EarlyStop {
                test_loss: l.unwrap_or(f64::INFINITY),
                test_sup_error: s.unwrap_or(f64::INFINITY),
            }),
        };
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            lr: self.train.lr,
            cosine_decay: self.train.cosine_decay,
            seed,
            weights: LossWeights {
                c_u: self.train.c_u,
                c_x: self.train.c_x,
            },
            early_stop,
        }
    }

    pub fn gains(&self) -> ControllerGains {
        ControllerGains::isotropic(self.sim.lambda, self.sim.alpha)
    }

    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            dt_ctrl: self.sim.dt_ctrl,
            threshold: self.sim.threshold,
            t_s_override: self.sim.t_s_override,
            flag_a: false,
            flag_b: false,
            step_integrate: self.sim.step_integrate,
            build_steps_per_interval: self.sim.build_steps_per_interval,
            trajectory: TrajectoryConfig {
                step: self.sim.trajectory_step,
                min_tgo: self.sim.min_tgo,
            },
            k_e: self.sim.k_e,
            l_k: self.sim.l_k,
        }
    }

    pub fn controllers(&self) -> Result<Vec<Controller>> {
        self.sim.controllers.iter().map(|c| parse_controller(c, &self.sim)).collect()
    }
}

fn validate_architecture(a: &Architecture) -> Result<()> {
    if a.n_layers == 0 || a.width == 0 || !(a.c_nn > 0.0) {
        return Err(Error::invalid("network needs n_layers, width >= 1 and c_nn > 0"));
    }
    Ok(())
}
