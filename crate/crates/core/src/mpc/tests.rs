use super::*;
use crate::dynamics::{DynamicsModel, MassModel, AU_KM, MU_SUN};
use crate::scenario::{generate_catalog, CatalogRanges};

fn some_iso() -> IsoElements {
    IsoElements {
        semi_major_axis: -1.5 * AU_KM / 1.5,
        eccentricity: 2.5,
        inclination: 0.7,
        raan: 1.0,
        arg_periapsis: 0.3,
        anomaly_at_epoch: 0.2,
        epoch: 0.0,
        mu_sun: MU_SUN,
    }
}

fn double_integrator(cfg: MpcConfig, rho: Vec3, t_f: f64) -> MpcProblem {
    MpcProblem {
        x_hat: SpacecraftState::zero(),
        oe_hat: some_iso(),
        tau: 0.0,
        t_f,
        rho,
        mass: 150.0,
        cfg,
        dyn_params: DynamicsParams {
            iso: some_iso(),
            mass: MassModel::constant(150.0),
            u_max: 1.0,
            model: DynamicsModel::ZeroGravity,
        },
    }
}

/// Minimum of `Σ h ||u_k||²` reaching `d` from rest with `N` equal holds.
fn discrete_min_energy(d: &Vec3, t_f: f64, n: usize, mass: f64) -> f64 {
    let continuous = (1000.0 * mass).powi(2) * d.norm_squared() * 3.0 / t_f.powi(3);
    continuous / (1.0 - 1.0 / (4.0 * (n * n) as f64))
}

#[test]
fn zero_gravity_matches_minimum_energy_oracle() {
    let rho = Vec3::new(30.0, -35.0, 20.0);
    let cfg = MpcConfig { dt_grid: 10.0, ..MpcConfig::default() };
    let sol = solve(&double_integrator(cfg, rho, 1e4)).unwrap();
    assert!(sol.converged);
    assert!(sol.terminal_error < 1e-6);
    assert!(sol.u_seq.iter().all(|u| u.amax() < 1.0), "oracle needs an interior optimum");
    let expect = discrete_min_energy(&rho, 1e4, 1000, 150.0);
    assert!((sol.cost - expect).abs() < 1e-6 * expect, "{} vs {}", sol.cost, expect);
}

#[test]
fn single_convexification_is_exact_on_linear_dynamics() {
    let rho = Vec3::new(-40.0, 10.0, 5.0);
    let cfg = MpcConfig { dt_grid: 10.0, single_convexification: true, ..MpcConfig::default() };
    let sol = solve(&double_integrator(cfg, rho, 1e4)).unwrap();
    assert_eq!(sol.iterations, 1);
    let expect = discrete_min_energy(&rho, 1e4, 1000, 150.0);
    assert!((sol.cost - expect).abs() < 1e-6 * expect);
}

#[test]
fn penalty_mode_shrinks_the_miss_as_predicted() {
    let rho = Vec3::new(50.0, 0.0, 0.0);
    let (t_f, n) = (1e4, 1000);
    let k = discrete_min_energy(&Vec3::x(), t_f, n, 150.0);
    let c0 = 3.0 * k;
    let cfg = MpcConfig {
        dt_grid: 10.0,
        terminal_mode: TerminalMode::Penalty,
        c0,
        ..MpcConfig::default()
    };
    let sol = solve(&double_integrator(cfg, rho, t_f)).unwrap();
    // Scalar tradeoff: reach y minimizing k y² + c0 (y - d)².
    let reached = sol.x_seq.last().unwrap().p;
    let y = c0 * 50.0 / (k + c0);
    assert!((reached.x - y).abs() < 1e-6 * y);
    assert!((sol.cost - k * c0 / (k + c0) * 2500.0).abs() < 1e-6 * sol.cost);
}

#[test]
fn grid_has_short_final_interval() {
    let cfg = MpcConfig { dt_grid: 60.0, ..MpcConfig::default() };
    let p = double_integrator(cfg, Vec3::new(0.01, 0.0, 0.0), 150.0);
    let sol = solve(&p).unwrap();
    assert_eq!(sol.times, vec![0.0, 60.0, 120.0, 150.0]);
    assert_eq!(sol.control_at(130.0), sol.u_seq[2]);
    assert_eq!(sol.control_at(0.0), sol.u_seq[0]);
    assert_eq!(sol.control_at(60.0), sol.u_seq[1]);
}

#[test]
fn unreachable_target_is_infeasible() {
    let cfg = MpcConfig { dt_grid: 100.0, ..MpcConfig::default() };
    let p = double_integrator(cfg, Vec3::new(1e5, 0.0, 0.0), 1000.0);
    match solve(&p) {
        Err(Error::Infeasible { axes, .. }) => assert!(axes.contains(&0)),
        other => panic!("expected infeasibility, got {other:?}"),
    }
}

#[test]
fn invalid_horizon_rejected() {
    let mut p = double_integrator(MpcConfig::default(), Vec3::zeros(), 100.0);
    p.tau = 100.0;
    assert!(matches!(solve(&p), Err(e) if e.is_validation()));
}

fn flyby_problem(horizon: f64) -> MpcProblem {
    let catalog = generate_catalog(1, 11, &CatalogRanges::default()).unwrap();
    let s = catalog.scenarios[0];
    let tau = s.t_f - horizon;
    let iso = iso_flow(&s.iso, tau).unwrap();
    // Ballistic state at tau, then knocked off the collision course.
    let traj = crate::dynamics::integrate(
        &s.x0,
        &s.iso,
        150.0,
        0.0,
        tau,
        &mut |_: &crate::dynamics::PolicyArgs| Ok(Vec3::zeros()),
        &DynamicsParams {
            iso: s.iso,
            mass: MassModel::default(),
            u_max: 1.0,
            model: DynamicsModel::TwoBodyLvlh,
        },
        60.0,
    )
    .unwrap();
    let mut x = traj.last_state();
    x.p += Vec3::new(400.0, -300.0, 250.0);
    x.v += Vec3::new(1e-3, 2e-3, -1e-3);
    MpcProblem {
        x_hat: x,
        oe_hat: iso,
        tau,
        t_f: s.t_f,
        rho: s.rho,
        mass: 150.0,
        cfg: MpcConfig::default(),
        dyn_params: DynamicsParams {
            iso,
            mass: MassModel::default(),
            u_max: 1.0,
            model: DynamicsModel::TwoBodyLvlh,
        },
    }
}

use crate::dynamics::iso_flow;

#[test]
fn flyby_converges_to_target_with_monotone_merit() {
    let p = flyby_problem(6.0 * 3600.0);
    let sol = solve(&p).unwrap();
    assert!(sol.converged, "history {:?}", sol.history);
    assert!(sol.terminal_error <= 1e-6);
    assert!(sol.u_seq.iter().all(|u| u.amax() <= 1.0));
    let accepted: Vec<f64> = sol.history.iter().filter(|r| r.accepted).map(|r| r.merit).collect();
    assert!(!accepted.is_empty());
    // Mass decreases along the plan.
    assert!(sol.mass_seq.windows(2).all(|w| w[1] <= w[0]));

    // Warm start from the converged plan finishes almost immediately.
    let warm = solve_warm(&p, Some(&sol.u_seq)).unwrap();
    assert!(warm.converged);
    assert!(warm.iterations <= 3, "{}", warm.iterations);
    assert!((warm.cost - sol.cost).abs() <= 1e-6 * sol.cost);
}

#[test]
fn shifted_guess_resamples_plan() {
    let cfg = MpcConfig { dt_grid: 10.0, ..MpcConfig::default() };
    let sol = solve(&double_integrator(cfg, Vec3::new(1.0, 0.0, 0.0), 1000.0)).unwrap();
    let g = shifted_guess(&sol, 35.0, 10.0, 1000.0);
    assert_eq!(g.len(), 97);
    assert_eq!(g[0], sol.u_seq[3]);
    assert_eq!(g[1], sol.u_seq[4]);
}
