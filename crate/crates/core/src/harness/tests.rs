use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::artifacts::*;
use super::*;

fn tiny() -> RunConfig {
    let mut c = RunConfig::default();
    c.catalog.n = 3;
    c.catalog.t_f = 4.0 * 3600.0;
    c.catalog.train_fraction = 0.67;
    c.data.n_control = 6;
    c.data.n_state = 6;
    c.data.test_fraction = 0.5;
    c.data.t_state = 600.0;
    c.data.mpc_dt_grid = 600.0;
    c.train.epochs = 3;
    c.train.n_layers = 2;
    c.train.width = 8;
    c.sim.dt_ctrl = 600.0;
    c.sim.t_s_override = Some(3600.0);
    c.sim.trajectory_step = 60.0;
    c.sim.step_integrate = 60.0;
    c.sim.mpc_dt_grid = 1800.0;
    c.sim.repetitions = 2;
    c.sweep.intervals = vec![1200.0, 2400.0];
    c.sweep.ratios = vec![1e-2, 1.0];
    c.sweep.ratio_seeds = vec![1];
    c.sweep.ratio_epochs = 2;
    c.sweep.repetitions = 1;
    c
}

#[test]
fn streamed_percentiles_match_a_sort_based_pass() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for n in [1usize, 2, 7, 100, 1001] {
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..50.0f64).exp()).collect();
        let mut st = StreamingStats::new();
        for &x in &xs {
            st.push(x);
        }
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        for q in [0.0, 5.0, 25.0, 50.0, 75.0, 95.0, 100.0] {
            assert_eq!(st.percentile(q), percentile_of_sorted(&sorted, q));
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        assert!((st.mean() - mean).abs() <= 1e-12 * mean.abs());
        if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!((st.std() - var.sqrt()).abs() <= 1e-9 * var.sqrt());
        }
        let s = st.summary();
        assert_eq!(s.min, sorted[0]);
        assert_eq!(s.max, sorted[n - 1]);
    }
    assert_eq!(percentile_of_sorted(&[1.0, 2.0, 3.0, 4.0], 50.0), 2.5);
    assert!(StreamingStats::new().mean().is_nan());
}

#[test]
fn default_config_is_valid_and_bad_values_are_rejected() {
    let c = RunConfig::default();
    c.validate().unwrap();
    assert_eq!(c.catalog.n, 20);
    assert_eq!(c.data.n_control + c.data.n_state, 500);
    assert_eq!(c.train.epochs, 2000);
    assert_eq!(c.sim.repetitions, 10);
    assert!(c.sweep.intervals.contains(&600.0));
    assert_eq!(c.sweep.ratios, vec![1e-2, 1.0, 1e2, 1e4]);
    assert_eq!(c.controllers().unwrap().len(), 5);

    let mut bad = c.clone();
    bad.sim.controllers = vec!["NR".into(), "LQR".into()];
    assert!(bad.validate().unwrap_err().is_validation());
    let mut bad = c.clone();
    bad.sim.dt_ctrl = -1.0;
    assert!(bad.validate().is_err());
    let mut bad = c.clone();
    bad.sweep.ratios.clear();
    assert!(bad.validate().is_err());
    let mut bad = c;
    bad.data.test_fraction = 2.0;
    assert!(bad.validate().is_err());
}

#[test]
fn small_pipeline_produces_consistent_artifacts() {
    let cfg = tiny();
    let cat = gen_catalog(&cfg).unwrap();
    let (train_ds, test_ds) = gen_data(&cfg, &cat).unwrap();
    assert_eq!(train_ds.len() + train_ds.dropped(), 12);
    let trained = train_policy(&cfg, &train_ds, test_ds.as_ref()).unwrap();
    assert_eq!(trained.history.len(), 4);

    let mut c = cfg.clone();
    c.sim.controllers = vec!["NR".into(), "SNDNN".into(), "PD".into()];
    let mc = monte_carlo(&c, &cat.scenarios, &trained.model).unwrap();
    assert_eq!(mc.rows.len(), 3 * 2 * 3);
    assert_eq!(mc.stats.len(), 3);
    assert!(mc.rows.iter().all(|r| r.error.is_none()));
    // Streamed summary agrees with a sort of the rows.
    let mut nr: Vec<f64> = mc.rows.iter().filter(|r| r.controller == "NR").map(|r| r.delivery_error).collect();
    nr.sort_by(f64::total_cmp);
    assert_eq!(mc.stats[0].delivery.median(), percentile_of_sorted(&nr, 50.0));

    // Parallel run gives the same rows.
    let par = monte_carlo(&RunConfig { parallelism: 2, ..c.clone() }, &cat.scenarios, &trained.model).unwrap();
    assert_eq!(par.rows, mc.rows);

    let rows_csv = mc_rows_csv(&c, &mc);
    assert!(rows_csv.starts_with("# rendezvous-montecarlo v1\n# config {"));
    let table = Table::parse(&rows_csv, "mc").unwrap();
    assert_eq!(table.rows.len(), mc.rows.len());
    let fig = plot_error_vs_iso(&c, &table).unwrap();
    let fig = Table::parse(&fig, "fig").unwrap();
    assert_eq!(fig.rows.len(), 3 * 3);
    // Join check: the bundle mean equals the mean of the source rows.
    let de = table.col("delivery_error_km").unwrap();
    let src: Vec<f64> = (0..table.rows.len())
        .filter(|&i| table.rows[i][0] == "0" && table.rows[i][2] == "PD")
        .map(|i| table.f64_at(i, de).unwrap())
        .collect();
    let row = fig.rows.iter().position(|r| r[0] == "0" && r[1] == "PD").unwrap();
    let mean = fig.f64_at(row, fig.col("delivery_mean").unwrap()).unwrap();
    assert!((mean - src.iter().sum::<f64>() / src.len() as f64).abs() <= 1e-12 * mean.abs());

    let sweep = interval_sweep(&c, &cat.scenarios, &trained.model).unwrap();
    let sweep_t = Table::parse(&sweep_interval_csv(&c, &sweep), "sweep").unwrap();
    let fig = Table::parse(&plot_error_vs_interval(&c, &sweep_t).unwrap(), "fig").unwrap();
    assert_eq!(fig.rows.len(), c.sweep.intervals.len() * 2);

    let ratios = ratio_sweep(&c, &train_ds, test_ds.as_ref(), &cat.scenarios).unwrap();
    let ratio_t = Table::parse(&sweep_ratio_csv(&c, &ratios), "ratio").unwrap();
    let fig = Table::parse(&plot_error_vs_ratio(&c, &ratio_t).unwrap(), "fig").unwrap();
    let got: Vec<f64> = (0..fig.rows.len()).map(|i| fig.f64_at(i, 0).unwrap()).collect();
    assert_eq!(got, c.sweep.ratios);
}

#[test]
fn plot_bundles_reject_missing_columns() {
    let cfg = RunConfig::default();
    let t = Table::parse("# x\na,b\n1,2\n", "t").unwrap();
    assert!(plot_error_vs_iso(&cfg, &t).unwrap_err().is_validation());
    assert!(plot_error_vs_interval(&cfg, &t).is_err());
    assert!(plot_error_vs_ratio(&cfg, &t).is_err());
    assert!(Table::parse("a,b\n1\n", "t").is_err());
    assert_eq!(sha256_hex(b"abc").len(), 64);
}

#[test]
fn bound_report_uses_the_profile_envelope_and_default_lipschitz() {
    let cfg = RunConfig::default();
    let rep = bound_report(&cfg).unwrap();
    let i = rep.inputs;
    assert_eq!(i.l_k, i.m_f * (i.lambda_max + i.alpha));
    assert!(i.c_e > 0.0 && i.beta > 0.0);
    let rel = (rep.example1.value - rep.example1_quadrature.value).abs() / rep.example1.value;
    assert!(rel < 1e-6, "{rel}");
    assert!((0.0..=1.0).contains(&rep.confidence));
    let mut bad = cfg;
    bad.bounds.inputs.t_s = 1e6;
    assert!(bound_report(&bad).unwrap_err().is_validation());
}
