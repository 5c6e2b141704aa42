use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_rendezvous");

const TINY: &str = r#"
seed = 7
[catalog]
n = 3
t_f = 14400.0
train_fraction = 0.67
[data]
n_control = 6
n_state = 6
test_fraction = 0.5
t_state = 600.0
mpc_dt_grid = 600.0
[train]
epochs = 3
n_layers = 2
width = 8
[sim]
dt_ctrl = 600.0
t_s_override = 3600.0
step_integrate = 60.0
mpc_dt_grid = 1800.0
repetitions = 2
controllers = ["NR", "SNDNN", "PD"]
[sweep]
intervals = [1200.0, 2400.0]
ratios = [0.01, 1.0]
ratio_seeds = [1]
ratio_epochs = 2
repetitions = 1
"#;

fn rendezvous(out: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("RENDEZVOUS_OUT", out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn artifact_hashes(dir: &Path, command: &str) -> BTreeMap<String, String> {
    let text = std::fs::read_to_string(dir.join(format!("{command}.metadata.json"))).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["artifacts"]
        .as_object()
        .unwrap()
        .iter()
        .map(|(k, h)| (k.clone(), h.as_str().unwrap().to_string()))
        .collect()
}

#[test]
fn print_config_round_trips_through_toml() {
    let dir = tempfile::tempdir().unwrap();
    let o = rendezvous(dir.path(), &["print-config"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("[sweep]") && text.contains("[bounds.inputs]"));
    let cfg = write_config(dir.path(), &text);
    let again = rendezvous(dir.path(), &["--config", &cfg, "print-config"]);
    assert_eq!(code(&again), 0);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
}

#[test]
fn exit_codes_separate_validation_from_runtime_failures() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&rendezvous(dir.path(), &["no-such-command"])), 1);
    assert_eq!(code(&rendezvous(dir.path(), &["--help"])), 0);

    let unknown_key = write_config(dir.path(), "[sim]\nwarp = 9\n");
    assert_eq!(code(&rendezvous(dir.path(), &["--config", &unknown_key, "bounds"])), 1);
    let bad_value = write_config(dir.path(), "[sim]\ncontrollers = [\"LQR\"]\n");
    let o = rendezvous(dir.path(), &["--config", &bad_value, "print-config"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("LQR"));

    // Inputs missing from the output root are a runtime failure.
    assert_eq!(code(&rendezvous(dir.path(), &["gen-data"])), 2);
    assert_eq!(code(&rendezvous(dir.path(), &["plotdata"])), 2);
}

#[test]
fn out_flag_overrides_the_environment() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let out = flag_dir.path().display().to_string();
    let o = rendezvous(env_dir.path(), &["--out", &out, "bounds"]);
    assert_eq!(code(&o), 0);
    assert!(flag_dir.path().join("bounds.json").exists());
    assert!(!env_dir.path().join("bounds.json").exists());
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(flag_dir.path().join("bounds.json")).unwrap()).unwrap();
    assert_eq!(v["version"], 1);
    assert!(v["example1"]["value"].as_f64().unwrap() > 0.0);
}

fn pipeline(dir: &Path, cfg: &str) {
    for cmd in [
        vec!["gen-catalog"],
        vec!["gen-data"],
        vec!["train"],
        vec!["montecarlo"],
        vec!["sweep-interval"],
        vec!["sweep-ratio"],
        vec!["simulate", "--scenario", "1", "--controller", "sndnn"],
        vec!["plotdata"],
    ] {
        let mut args = vec!["--config", cfg];
        args.extend(cmd.iter().copied());
        let o = rendezvous(dir, &args);
        assert_eq!(code(&o), 0, "{cmd:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn pipeline_is_reproducible_and_artifacts_are_consistent() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = write_config(a.path(), TINY);
    pipeline(a.path(), &cfg);
    pipeline(b.path(), &cfg);

    let commands = [
        "gen-catalog",
        "gen-data",
        "train",
        "montecarlo",
        "sweep-interval",
        "sweep-ratio",
        "simulate",
        "plotdata",
    ];
    for c in commands {
        let ha = artifact_hashes(a.path(), c);
        assert!(!ha.is_empty(), "{c}");
        assert_eq!(ha, artifact_hashes(b.path(), c), "{c}");
        for (name, hash) in &ha {
            let bytes = std::fs::read(a.path().join(name)).unwrap();
            assert_eq!(&rendezvous_core::harness::artifacts::sha256_hex(&bytes), hash);
        }
    }
    // Timing files exist but are not hashed.
    assert!(a.path().join("montecarlo_timing.csv").exists());
    assert!(!artifact_hashes(a.path(), "montecarlo").contains_key("montecarlo_timing.csv"));

    // Every CSV carries the versioned header and the config echo.
    for entry in std::fs::read_dir(a.path()).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "csv") {
            let text = std::fs::read_to_string(&p).unwrap();
            let mut lines = text.lines();
            let first = lines.next().unwrap();
            assert!(first.starts_with("# rendezvous-") && first.ends_with(" v1"), "{}", p.display());
            assert!(lines.next().unwrap().starts_with("# config {\"seed\":7"), "{}", p.display());
        }
    }

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.path().join("data_report.json")).unwrap()).unwrap();
    let t = &report["train"];
    assert_eq!(
        t["rows"].as_u64().unwrap(),
        t["requested"].as_u64().unwrap() - t["dropped_infeasible"].as_u64().unwrap() - t["dropped_other"].as_u64().unwrap()
    );

    let rows = |name: &str| -> Vec<String> {
        std::fs::read_to_string(a.path().join(name))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .skip(1)
            .map(str::to_string)
            .collect()
    };
    // 3 scenarios, 2 repetitions, 3 controllers.
    assert_eq!(rows("montecarlo.csv").len(), 18);
    // One row per (interval, controller), copied verbatim from the sweep.
    let sweep = rows("sweep_interval.csv");
    let fig = rows("fig_error_vs_interval.csv");
    assert_eq!(fig.len(), 2 * 2);
    for (s, f) in sweep.iter().zip(&fig) {
        let s: Vec<&str> = s.split(',').collect();
        let f: Vec<&str> = f.split(',').collect();
        assert_eq!(&f[..2], &s[..2]);
        assert_eq!(f[2], s[4]);
    }
    let ratios: Vec<f64> = rows("fig_error_vs_ratio.csv")
        .iter()
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(ratios, vec![0.01, 1.0]);
}

#[test]
fn parallel_montecarlo_matches_sequential() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    for c in ["gen-catalog", "gen-data", "train", "montecarlo"] {
        assert_eq!(code(&rendezvous(dir.path(), &["--config", &cfg, c])), 0);
    }
    let seq = std::fs::read_to_string(dir.path().join("montecarlo.csv")).unwrap();
    let o = rendezvous(dir.path(), &["--config", &cfg, "--parallelism", "3", "montecarlo"]);
    assert_eq!(code(&o), 0);
    let par = std::fs::read_to_string(dir.path().join("montecarlo.csv")).unwrap();
    let body = |s: &str| s.lines().skip(2).map(str::to_string).collect::<Vec<_>>();
    assert_eq!(body(&seq), body(&par));
}
