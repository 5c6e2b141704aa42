//! Cross-checks of generated data and trained policies against
//! independent recomputation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rendezvous_core::dynamics::{integrate, DynamicsParams};
use rendezvous_core::harness::{gen_catalog, gen_data, train_policy, RunConfig};
use rendezvous_core::mpc::{solve, MpcProblem};
use rendezvous_core::policy::{spectral_norm, SnDnnModel, N_FEATURES};
use rendezvous_core::training::Dataset;

fn small_config() -> RunConfig {
    let mut c = RunConfig {
        seed: 31,
        ..RunConfig::default()
    };
    c.catalog.n = 4;
    c.catalog.t_f = 6.0 * 3600.0;
    c.catalog.train_fraction = 0.75;
    c.data.n_control = 12;
    c.data.n_state = 8;
    c.data.test_fraction = 0.0;
    c.data.t_state = 1800.0;
    c.data.mpc_dt_grid = 600.0;
    c.train.epochs = 20;
    c.train.n_layers = 3;
    c.train.width = 16;
    c
}

fn data() -> (RunConfig, Dataset) {
    let cfg = small_config();
    let cat = gen_catalog(&cfg).unwrap();
    let (ds, _) = gen_data(&cfg, &cat).unwrap();
    assert!(ds.len() >= 10, "only {} rows survived", ds.len());
    (cfg, ds)
}

#[test]
fn stored_labels_match_a_fresh_solve() {
    let (_, ds) = data();
    let cfg = &ds.cfg;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let row = &ds.rows[rng.random_range(0..ds.len())];
        let sol = solve(&MpcProblem {
            x_hat: row.x_bar,
            oe_hat: row.oe_bar,
            tau: row.t_bar,
            t_f: row.t_f,
            rho: row.rho_bar,
            mass: row.mass,
            cfg: cfg.mpc,
            dyn_params: DynamicsParams {
                iso: row.oe_bar,
                mass: cfg.mass,
                u_max: cfg.u_max,
                model: cfg.model,
            },
        })
        .unwrap();
        let du = (sol.u_seq[0] - row.u_label).amax();
        assert!(du <= 1e-9, "label differs by {du:e} N");
        assert_eq!(sol.iterations as u32, row.mpc_iterations);
    }
}

#[test]
fn rollout_labels_agree_with_a_fine_step_reintegration() {
    let (_, ds) = data();
    for row in &ds.rows {
        let u = row.u_label;
        let fine = integrate(
            &row.x_bar,
            &row.oe_bar,
            row.mass,
            row.t_bar,
            row.t_bar + row.dt_bar,
            move |_| Ok(u),
            &ds.cfg.rollout_params(row),
            row.dt_bar / 64.0,
        )
        .unwrap()
        .last_state();
        let dp = (fine.p - row.x_rollout_label.p).norm();
        let dv = (fine.v - row.x_rollout_label.v).norm();
        assert!(dp <= 1e-6, "position off by {dp:e} km");
        assert!(dv <= 1e-9, "velocity off by {dv:e} km/s");
    }
}

fn random_features(model: &SnDnnModel, rng: &mut ChaCha8Rng) -> [f64; N_FEATURES] {
    let norm = model.input_norm();
    std::array::from_fn(|i| 3.0 * norm[i] * rng.sample::<f64, _>(StandardNormal))
}

#[test]
fn trained_policy_respects_its_spectral_and_lipschitz_limits() {
    let (cfg, ds) = data();
    let model = train_policy(&cfg, &ds, None).unwrap().model;
    for w in model.effective_weights() {
        assert!(spectral_norm(w) <= model.c_nn() + 1e-6);
    }
    let bound = model.lipschitz_bound().total;
    let u_max = model.u_max();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for k in 0..10_000 {
        let a = random_features(&model, &mut rng);
        // Half the pairs are close neighbours, where the ratio is tightest.
        let b: [f64; N_FEATURES] = if k % 2 == 0 {
            random_features(&model, &mut rng)
        } else {
            let norm = model.input_norm();
            std::array::from_fn(|i| a[i] + 1e-3 * norm[i] * rng.sample::<f64, _>(StandardNormal))
        };
        let (ua, ub) = (model.forward_raw(&a).unwrap(), model.forward_raw(&b).unwrap());
        assert!(ua.amax() <= u_max && ub.amax() <= u_max);
        let d: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        worst = worst.max((ua - ub).norm() / d);
    }
    assert!(worst <= bound, "empirical {worst:e} above bound {bound:e}");
}
