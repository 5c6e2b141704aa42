//! `rendezvous`: batch front end for catalog generation, imitation data,
//! training, closed-loop simulation and the guarantee calculators.
//!
//! Exit codes: 0 on success, 1 for invalid arguments or configuration,
//! 2 when a run fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use rendezvous_core::harness::{self, artifacts, RunConfig};
use rendezvous_core::policy::{load_model, model_to_bytes, SnDnnModel};
use rendezvous_core::rendezvous::{run, run_seed, RunSetup};
use rendezvous_core::scenario::Catalog;
use rendezvous_core::training::{training_sup_error, Dataset};
use serde::Serialize;

/// Environment variable naming the output root.
const OUT_ENV: &str = "RENDEZVOUS_OUT";

const CATALOG_FILE: &str = "catalog.txt";
const TRAIN_DATA_FILE: &str = "train.ds";
const TEST_DATA_FILE: &str = "test.ds";
const MODEL_FILE: &str = "model.bin";
const MC_FILE: &str = "montecarlo.csv";
const SWEEP_INTERVAL_FILE: &str = "sweep_interval.csv";
const SWEEP_RATIO_FILE: &str = "sweep_ratio.csv";

#[derive(Parser)]
#[command(name = "rendezvous", version, about = "Learned-guidance rendezvous study harness")]
struct Cli {
    /// TOML configuration; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output root; overrides the RENDEZVOUS_OUT variable.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the synthetic scenario catalog.
    GenCatalog,
    /// Solve MPC labels on the catalog's training and test splits.
    GenData {
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Fit the guidance network to the generated labels.
    Train,
    /// Fly one scenario and write its step log.
    Simulate {
        #[arg(long, default_value_t = 0)]
        scenario: usize,
        #[arg(long, default_value = "NR")]
        controller: String,
        #[arg(long, default_value_t = 0)]
        repetition: usize,
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Every controller on every selected scenario, repeated.
    Montecarlo {
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Delivery error against the control interval, NR and learned guidance.
    SweepInterval {
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Retrain at each state/control weight ratio and fly the result.
    SweepRatio {
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Evaluate the guarantee calculators for the `[bounds]` inputs.
    Bounds,
    /// Per-figure CSV bundles from existing result files.
    Plotdata,
    /// Print the effective configuration as TOML.
    PrintConfig,
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<rendezvous_core::Error> for Failure {
    fn from(e: rendezvous_core::Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Validation(format!("cannot read config {}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| Failure::Validation(format!("config {}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(p) = cli.parallelism {
        cfg.parallelism = p;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_root(cli: &Cli) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Output directory plus the metadata record of the running command.
struct Session {
    root: PathBuf,
    meta: artifacts::Metadata,
}

impl Session {
    fn new(command: &str, cfg: &RunConfig, root: PathBuf) -> CliResult<Self> {
        std::fs::create_dir_all(&root)
            .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self {
            root,
            meta: artifacts::Metadata::new(command, cfg),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.path(name);
        std::fs::write(&path, bytes).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))?;
        self.meta.artifacts.insert(name.to_string(), artifacts::sha256_hex(bytes));
        Ok(())
    }

    /// Wall-clock files are written but kept out of the hashed artifacts.
    fn write_timing(&self, name: &str, text: &str) -> CliResult<()> {
        let path = self.path(name);
        std::fs::write(&path, text).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
    }

    fn input(&mut self, path: &Path) -> CliResult<()> {
        let hash = artifacts::sha256_file(path)?;
        let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        self.meta.inputs.insert(name, hash);
        Ok(())
    }

    fn finish(self) -> CliResult<()> {
        let name = format!("{}.metadata.json", self.meta.command);
        let path = self.path(&name);
        std::fs::write(&path, self.meta.to_json())
            .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))?;
        eprintln!("wrote {}", path.display());
        Ok(())
    }

    fn catalog(&mut self, over: &Option<PathBuf>) -> CliResult<Catalog> {
        let path = over.clone().unwrap_or_else(|| self.path(CATALOG_FILE));
        let cat = Catalog::load(&path)?;
        self.input(&path)?;
        Ok(cat)
    }

    fn model(&mut self, over: &Option<PathBuf>) -> CliResult<SnDnnModel> {
        let path = over.clone().unwrap_or_else(|| self.path(MODEL_FILE));
        let model = load_model(&path)?;
        self.input(&path)?;
        Ok(model)
    }

    fn datasets(&mut self) -> CliResult<(Dataset, Option<Dataset>)> {
        let train_path = self.path(TRAIN_DATA_FILE);
        let train = Dataset::load(&train_path)?;
        self.input(&train_path)?;
        let test_path = self.path(TEST_DATA_FILE);
        let test = if test_path.exists() {
            self.input(&test_path)?;
            Some(Dataset::load(&test_path)?)
        } else {
            None
        };
        Ok((train, test))
    }
}

/// JSON artifact with the same version and config echo as the CSV headers.
#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    version: u32,
    kind: &'a str,
    config: &'a RunConfig,
    #[serde(flatten)]
    body: T,
}

fn report_json<T: Serialize>(kind: &str, cfg: &RunConfig, body: T) -> Vec<u8> {
    let r = Report {
        version: artifacts::ARTIFACT_VERSION,
        kind,
        config: cfg,
        body,
    };
    let mut s = serde_json::to_string_pretty(&r).expect("report is plain data");
    s.push('\n');
    s.into_bytes()
}

#[derive(Serialize)]
struct SplitReport {
    requested: usize,
    rows: usize,
    dropped_infeasible: usize,
    dropped_other: usize,
}

impl SplitReport {
    fn of(ds: &Dataset) -> Self {
        Self {
            requested: ds.cfg.n_control + ds.cfg.n_state,
            rows: ds.len(),
            dropped_infeasible: ds.dropped_infeasible,
            dropped_other: ds.dropped_other,
        }
    }
}

#[derive(Serialize)]
struct DataReport {
    train: SplitReport,
    test: Option<SplitReport>,
}

#[derive(Serialize)]
struct TrainReport {
    stop: String,
    epochs: usize,
    final_train_loss: f64,
    final_test_loss: Option<f64>,
    /// Max control error over the training rows (N).
    eps_train: f64,
    /// Network Lipschitz bound in raw feature units.
    lipschitz_bound: f64,
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let cfg = load_config(&cli)?;
    if let Command::PrintConfig = cli.command {
        let text = toml::to_string_pretty(&cfg).map_err(|e| Failure::Runtime(format!("cannot print config: {e}")))?;
        print!("{text}");
        return Ok(());
    }
    let root = out_root(&cli);
    match &cli.command {
        Command::GenCatalog => {
            let mut s = Session::new("gen-catalog", &cfg, root)?;
            let cat = harness::gen_catalog(&cfg)?;
            s.write(CATALOG_FILE, cat.to_text().as_bytes())?;
            eprintln!("catalog: {} scenarios, {} for training", cat.scenarios.len(), cat.n_train);
            s.finish()
        }
        Command::GenData { catalog } => {
            let mut s = Session::new("gen-data", &cfg, root)?;
            let cat = s.catalog(catalog)?;
            let clock = Instant::now();
            let (train, test) = harness::gen_data(&cfg, &cat)?;
            let secs = clock.elapsed().as_secs_f64();
            s.write(TRAIN_DATA_FILE, &train.to_bytes())?;
            if let Some(t) = &test {
                s.write(TEST_DATA_FILE, &t.to_bytes())?;
            }
            let rep = DataReport {
                train: SplitReport::of(&train),
                test: test.as_ref().map(SplitReport::of),
            };
            s.write("data_report.json", &report_json("data-report", &cfg, rep))?;
            s.write_timing("data_timing.csv", &format!("{}wall_s\n{secs:e}\n", artifacts::header("timing", &cfg)))?;
            eprintln!(
                "labels: {} train rows ({} dropped), {} test rows, {secs:.1} s",
                train.len(),
                train.dropped(),
                test.as_ref().map_or(0, Dataset::len)
            );
            s.finish()
        }
        Command::Train => {
            let mut s = Session::new("train", &cfg, root)?;
            let (train, test) = s.datasets()?;
            let res = harness::train_policy(&cfg, &train, test.as_ref())?;
            s.write(MODEL_FILE, &model_to_bytes(&res.model))?;
            s.write("history.csv", artifacts::history_csv(&cfg, &res.history).as_bytes())?;
            let last = res.history.last();
            let rep = TrainReport {
                stop: format!("{:?}", res.stop),
                epochs: res.history.len().saturating_sub(1),
                final_train_loss: last.map_or(f64::NAN, |h| h.train_loss),
                final_test_loss: last.and_then(|h| h.test_loss),
                eps_train: training_sup_error(&res.model, &train.rows, cfg.dynamics_model())?,
                lipschitz_bound: res.model.lipschitz_bound().total,
            };
            eprintln!("trained: {} epochs, loss {:.4e}", rep.epochs, rep.final_train_loss);
            s.write("train_report.json", &report_json("train-report", &cfg, rep))?;
            s.finish()
        }
        Command::Simulate {
            scenario,
            controller,
            repetition,
            catalog,
            model,
        } => {
            let mut s = Session::new("simulate", &cfg, root)?;
            let cat = s.catalog(catalog)?;
            let model = s.model(model)?;
            let sc = cat
                .scenarios
                .iter()
                .find(|x| x.id == *scenario)
                .ok_or_else(|| Failure::Validation(format!("no scenario with id {scenario}")))?;
            let ctrl = harness::parse_controller(controller, &cfg.sim)?;
            let profile = cfg.sim_profile()?;
            let setup = RunSetup {
                scenario: sc,
                model: &model,
                gains: cfg.gains(),
                profile: &profile,
                plant: cfg.plant(),
                cfg: cfg.loop_config(),
                seed: run_seed(cfg.seed, sc.id, *repetition),
            };
            let log = run(&setup, &ctrl)?;
            let stem = format!("run_s{}_{}_r{}", sc.id, ctrl.name(), repetition);
            // The step log carries wall-clock, so it is not hashed.
            let csv = log.to_csv();
            let echo = artifacts::header("runlog", &cfg);
            let config_line = echo.lines().nth(1).unwrap_or_default();
            let csv = csv.replacen('\n', &format!("\n{config_line}\n"), 1);
            s.write_timing(&format!("{stem}.csv"), &csv)?;
            let mut summary = log.summary.clone();
            summary.median_wall_s = f64::NAN;
            summary.max_wall_s = f64::NAN;
            s.write(&format!("{stem}.json"), &report_json("run-summary", &cfg, summary))?;
            eprintln!(
                "{}: delivery error {:.4e} km, delta-V {:.4e} km/s",
                stem, log.summary.delivery_error, log.summary.delta_v
            );
            s.finish()
        }
        Command::Montecarlo { catalog, model } => {
            let mut s = Session::new("montecarlo", &cfg, root)?;
            let cat = s.catalog(catalog)?;
            let model = s.model(model)?;
            let scenarios = harness::sim_scenarios(&cfg, &cat);
            let mc = harness::monte_carlo(&cfg, scenarios, &model)?;
            s.write(MC_FILE, artifacts::mc_rows_csv(&cfg, &mc).as_bytes())?;
            s.write("montecarlo_summary.csv", artifacts::mc_summary_csv(&cfg, &mc).as_bytes())?;
            s.write_timing("montecarlo_timing.csv", &artifacts::mc_timing_csv(&cfg, &mc))?;
            for c in &mc.stats {
                eprintln!(
                    "{:>7}: median delivery {:.4e} km, mean delta-V {:.4e} km/s, {} failed, {} over budget",
                    c.controller,
                    c.delivery.median(),
                    c.delta_v.mean,
                    c.failed,
                    c.over_budget
                );
            }
            s.finish()
        }
        Command::SweepInterval { catalog, model } => {
            let mut s = Session::new("sweep-interval", &cfg, root)?;
            let cat = s.catalog(catalog)?;
            let model = s.model(model)?;
            let out = harness::interval_sweep(&cfg, harness::sim_scenarios(&cfg, &cat), &model)?;
            s.write(SWEEP_INTERVAL_FILE, artifacts::sweep_interval_csv(&cfg, &out).as_bytes())?;
            s.finish()
        }
        Command::SweepRatio { catalog } => {
            let mut s = Session::new("sweep-ratio", &cfg, root)?;
            let cat = s.catalog(catalog)?;
            let (train, test) = s.datasets()?;
            let rows = harness::ratio_sweep(&cfg, &train, test.as_ref(), harness::sim_scenarios(&cfg, &cat))?;
            s.write(SWEEP_RATIO_FILE, artifacts::sweep_ratio_csv(&cfg, &rows).as_bytes())?;
            s.finish()
        }
        Command::Bounds => {
            let mut s = Session::new("bounds", &cfg, root)?;
            let rep = harness::bound_report(&cfg)?;
            eprintln!(
                "delivery bound {:.4e} km with probability {:.4}",
                rep.example1.value, rep.confidence
            );
            s.write("bounds.json", &report_json("bounds", &cfg, rep))?;
            s.finish()
        }
        Command::Plotdata => {
            let mut s = Session::new("plotdata", &cfg, root)?;
            type Bundle = fn(&RunConfig, &artifacts::Table) -> rendezvous_core::Result<String>;
            let figures: [(&str, &str, Bundle); 3] = [
                (MC_FILE, "fig_error_vs_iso.csv", artifacts::plot_error_vs_iso),
                (SWEEP_INTERVAL_FILE, "fig_error_vs_interval.csv", artifacts::plot_error_vs_interval),
                (SWEEP_RATIO_FILE, "fig_error_vs_ratio.csv", artifacts::plot_error_vs_ratio),
            ];
            let mut made = 0;
            for (src, dst, bundle) in figures {
                let path = s.path(src);
                if !path.exists() {
                    eprintln!("skipping {dst}: {} not found", path.display());
                    continue;
                }
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Failure::Runtime(format!("cannot read {}: {e}", path.display())))?;
                s.input(&path)?;
                let table = artifacts::Table::parse(&text, src)?;
                s.write(dst, bundle(&cfg, &table)?.as_bytes())?;
                made += 1;
            }
            if made == 0 {
                return Err(Failure::Runtime(format!(
                    "no result files in {}; run montecarlo or a sweep first",
                    s.root.display()
                )));
            }
            s.finish()
        }
        Command::PrintConfig => unreachable!("handled above"),
    }
}
