use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dynamics::{SpacecraftState, Vec3};
use crate::mpc::MpcConfig;
use crate::policy::{Architecture, SnDnnModel};
use crate::scenario::{generate_catalog, CatalogRanges, UncertaintyProfile};

fn short_ranges() -> CatalogRanges {
    CatalogRanges {
        t_f: 4.0 * 3600.0,
        ..CatalogRanges::default()
    }
}

fn cfg(t_f: f64) -> DatasetConfig {
    DatasetConfig {
        n_control: 4,
        n_state: 2,
        t_state: 1800.0,
        mpc: MpcConfig {
            dt_grid: 600.0,
            ..DatasetConfig::new(t_f).mpc
        },
        profile: UncertaintyProfile::paper(t_f).scaled(1e-3).unwrap(),
        ..DatasetConfig::new(t_f)
    }
}

/// Rows at ideal states with random labels; no MPC involved.
fn synthetic(n: usize, seed: u64) -> Dataset {
    let ranges = short_ranges();
    let cat = generate_catalog(3, 4, &ranges).unwrap();
    let c = cfg(ranges.t_f);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|i| {
            let s = &cat.scenarios[i % 3];
            let t_bar = rng.random_range(0.0..s.t_f - 100.0);
            let (x, oe) = s.ideal_state(t_bar).unwrap();
            let mut row = TrainingSample {
                scenario_id: s.id as u32,
                kind: RowKind::Control,
                x_bar: x,
                oe_bar: oe,
                t_bar,
                t_f: s.t_f,
                rho_bar: s.rho,
                dt_bar: 10.0,
                mass: 150.0,
                u_label: Vec3::from_fn(|_, _| rng.random_range(-3.0..3.0)),
                x_rollout_label: x,
                mpc_iterations: 0,
                mpc_converged: true,
                mpc_cost: 0.0,
                mpc_terminal_error: 0.0,
            };
            let u = Vec3::from_fn(|_, _| rng.random_range(-3.0..3.0));
            row.x_rollout_label = label_rollout(&row, &u, &c).unwrap();
            row
        })
        .collect();
    Dataset {
        rows,
        dropped_infeasible: 0,
        dropped_other: 0,
        seed,
        cfg: c,
    }
}

fn small_arch() -> Architecture {
    Architecture {
        n_layers: 2,
        width: 16,
        c_nn: 2.0,
        u_max: 3.0,
    }
}

#[test]
fn generated_dataset_is_deterministic_and_labeled() {
    let ranges = short_ranges();
    let cat = generate_catalog(5, 21, &ranges).unwrap();
    let c = cfg(ranges.t_f);
    let a = generate_dataset(&cat, &c, 9).unwrap();
    let b = generate_dataset(&cat, &c, 9).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
    assert_eq!(a.len() + a.dropped(), 6);
    assert!(a.len() >= 4, "dropped {} rows", a.dropped());
    for r in &a.rows {
        assert!(r.u_label.amax() <= c.u_max + 1e-12);
        assert!(r.mpc_terminal_error <= 1e-6);
        if r.kind == RowKind::State {
            assert!(r.t_bar <= c.t_state);
        }
        let again = label_rollout(r, &r.u_label, &c).unwrap();
        assert_eq!(again, r.x_rollout_label);
    }
    let other = generate_dataset(&cat, &c, 10).unwrap();
    assert_ne!(a.to_bytes(), other.to_bytes());
}

#[test]
fn dataset_file_round_trip_and_rejections() {
    let ds = synthetic(7, 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.bin");
    ds.save(&path).unwrap();
    assert_eq!(Dataset::load(&path).unwrap(), ds);
    let bytes = ds.to_bytes();
    let p = std::path::Path::new("mem");
    assert!(Dataset::from_bytes(&bytes[..bytes.len() - 3], p).is_err());
    let model = SnDnnModel::new_random(small_arch(), 0).unwrap();
    let mbytes = crate::policy::model_to_bytes(&model);
    assert!(matches!(Dataset::from_bytes(&mbytes, p), Err(crate::Error::Format { .. })));
    assert!(matches!(crate::policy::model_from_bytes(&bytes, p), Err(crate::Error::Format { .. })));
}

#[test]
fn loss_vanishes_on_self_generated_labels() {
    let mut ds = synthetic(5, 2);
    let model = init_model(small_arch(), &ds, 3).unwrap();
    for r in ds.rows.iter_mut() {
        let snap = crate::dynamics::IsoSnapshot::new(r.oe_bar).unwrap();
        let input = crate::policy::GuidanceInput {
            x_hat: r.x_bar,
            oe_hat: r.oe_bar,
            t: r.t_bar,
            rho: r.rho_bar,
            t_f: r.t_f,
        };
        r.u_label = model.control_in(&input, &snap.frame, ds.cfg.model).unwrap();
        r.x_rollout_label = model_rollout(&model, r, &ds.cfg).unwrap();
    }
    let w = LossWeights::default();
    let (l, g) = loss_and_grad(&model, &ds.rows, &w, &ds.cfg).unwrap();
    // Labels are stored as absolute states, so only round-off remains.
    assert!(l < 1e-12, "{l:e}");
    let other = synthetic(5, 2);
    let g_ref = grad(&model, &other.rows, &w, &other.cfg).unwrap();
    assert!(g.norm() < 1e-8 * g_ref.norm(), "{:e} vs {:e}", g.norm(), g_ref.norm());
}

#[test]
fn control_only_weights_drop_the_rollout_term() {
    let ds = synthetic(6, 3);
    let model = init_model(small_arch(), &ds, 4).unwrap();
    let both = loss_parts(&model, &ds.rows, &LossWeights { c_u: 1.0, c_x: 1.0 }, &ds.cfg).unwrap();
    let only = loss(&model, &ds.rows, &LossWeights { c_u: 1.0, c_x: 0.0 }, &ds.cfg).unwrap();
    assert!(both.state > 0.0);
    assert_eq!(only, both.control);
    assert!(loss_parts(&model, &ds.rows, &LossWeights { c_u: 0.0, c_x: 0.0 }, &ds.cfg).is_err());
}

#[test]
fn doubling_control_weight_doubles_gradient() {
    let ds = synthetic(4, 5);
    let model = init_model(small_arch(), &ds, 6).unwrap();
    let g1 = grad(&model, &ds.rows, &LossWeights { c_u: 1.0, c_x: 0.0 }, &ds.cfg).unwrap().flat();
    let g2 = grad(&model, &ds.rows, &LossWeights { c_u: 2.0, c_x: 0.0 }, &ds.cfg).unwrap().flat();
    for (a, b) in g1.iter().zip(&g2) {
        assert!((2.0 * a - b).abs() <= 1e-14 * b.abs().max(1e-300));
    }
}

#[test]
fn gradient_matches_central_differences() {
    let ds = synthetic(6, 7);
    let mut model = init_model(small_arch(), &ds, 8).unwrap();
    // Move off the symmetric initialization so every coordinate matters.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p: Vec<f64> = model.params().iter().map(|x| x + rng.random_range(-0.2..0.2)).collect();
    model.set_params(&p).unwrap();
    let w = LossWeights { c_u: 1.0, c_x: 100.0 };
    let (_, g) = loss_and_grad(&model, &ds.rows, &w, &ds.cfg).unwrap();
    let g = g.flat();
    let gmax = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let k = rng.random_range(0..p.len());
        let mut m = model.clone();
        let mut q = p.clone();
        q[k] = p[k] + h;
        m.set_params(&q).unwrap();
        let fp = loss(&m, &ds.rows, &w, &ds.cfg).unwrap();
        q[k] = p[k] - h;
        m.set_params(&q).unwrap();
        let fm = loss(&m, &ds.rows, &w, &ds.cfg).unwrap();
        let fd = (fp - fm) / (2.0 * h);
        let rel = (fd - g[k]).abs() / g[k].abs().max(fd.abs()).max(1e-6 * gmax);
        worst = worst.max(rel);
    }
    assert!(worst <= 1e-4, "worst relative error {worst:e}");
}

#[test]
fn zero_learning_rate_leaves_model_unchanged() {
    let ds = synthetic(8, 9);
    let model = init_model(small_arch(), &ds, 1).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        lr: 0.0,
        ..TrainConfig::default()
    };
    let out = train(model.clone(), &ds, None, &cfg).unwrap();
    assert_eq!(out.model, model);
    assert_eq!(out.history.len(), 4);
    assert!(out.history.windows(2).all(|w| w[0].train_loss == w[1].train_loss));
    assert_eq!(out.stop, StopReason::Completed);
}

fn teacher_labels(ds: &mut Dataset, teacher: &SnDnnModel) {
    for r in ds.rows.iter_mut() {
        let snap = crate::dynamics::IsoSnapshot::new(r.oe_bar).unwrap();
        let input = crate::policy::GuidanceInput {
            x_hat: r.x_bar,
            oe_hat: r.oe_bar,
            t: r.t_bar,
            rho: r.rho_bar,
            t_f: r.t_f,
        };
        r.u_label = teacher.control_in(&input, &snap.frame, ds.cfg.model).unwrap();
        r.x_rollout_label = model_rollout(teacher, r, &ds.cfg).unwrap();
    }
}

#[test]
fn sgd_fits_toy_dataset_deterministically() {
    let mut ds = synthetic(50, 11);
    let arch = small_arch();
    let base = init_model(arch, &ds, 12).unwrap();
    let mut teacher = base.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let p: Vec<f64> = base.params().iter().map(|x| x + rng.random_range(-0.5..0.5)).collect();
    teacher.set_params(&p).unwrap();
    teacher_labels(&mut ds, &teacher);
    let cfg = TrainConfig {
        epochs: 2000,
        lr: 3e-3,
        seed: 3,
        weights: LossWeights { c_u: 1.0, c_x: 100.0 },
        ..TrainConfig::default()
    };
    let out = train(base.clone(), &ds, None, &cfg).unwrap();
    let first = out.history[0].train_loss;
    let last = out.history.last().unwrap().train_loss;
    assert_eq!(out.stop, StopReason::Completed);
    assert!(last < 0.1 * first, "{first} -> {last}");
    let short = TrainConfig { epochs: 5, ..cfg };
    let a = train(base.clone(), &ds, None, &short).unwrap();
    let b = train(base, &ds, None, &short).unwrap();
    assert_eq!(a.model, b.model);
}

#[test]
fn sup_error_and_nearest_distance() {
    let mut ds = synthetic(20, 15);
    let model = init_model(small_arch(), &ds, 16).unwrap();
    let errs = control_errors(&model, &ds.rows, ds.cfg.model).unwrap();
    let sup = training_sup_error(&model, &ds.rows, ds.cfg.model).unwrap();
    assert_eq!(sup, errs.iter().copied().fold(0.0, f64::max));
    assert!(sup >= errs.iter().sum::<f64>() / errs.len() as f64);
    teacher_labels(&mut ds, &model);
    assert_eq!(training_sup_error(&model, &ds.rows, ds.cfg.model).unwrap(), 0.0);

    let q = QueryPoint::from(&ds.rows[4]);
    assert_eq!(nearest_training_distance(&q, &ds.rows).unwrap(), 0.0);
    let mut q2 = q;
    q2.x = SpacecraftState::new(q.x.p + Vec3::new(3.0, 4.0, 0.0), q.x.v);
    q2.t += 12.0;
    let single = &ds.rows[4..5];
    assert!((nearest_training_distance(&q2, single).unwrap() - 13.0).abs() < 1e-6);
    // A full turn in an angle does not move the embedding.
    let mut q3 = q;
    q3.oe.raan += 2.0 * std::f64::consts::PI;
    assert!(nearest_training_distance(&q3, single).unwrap() < 1e-9);
}
