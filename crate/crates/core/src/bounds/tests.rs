use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn inputs() -> BoundInputs {
    BoundInputs {
        alpha: 2e-4,
        lambda_min: 1.3e-3,
        lambda_max: 2e-3,
        l_k: 0.05,
        m_f: 140.0,
        t_s: 1000.0,
        t_f: 20_000.0,
        p_err_s: 3.0,
        x_err_s: 3.2,
        c_e: 4.0,
        beta: 5e-4,
        c: 0.3,
        sigma_bar: 5.0,
        ..BoundInputs::default()
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn gaps_follow_their_formulas() {
    assert_eq!(guidance_gap(0.7, 0.0, 3.0, 4.0), 0.7);
    assert_eq!(guidance_gap(0.0, 1.0, 1.0, 1.0), 2.0);
    assert_eq!(control_gap(0.4, 2.0, 0.1, 150.0, 1e-3, 1e-6, 0.0, 0.0), 0.4);
    let slope = 2.0 + 150.0 * (0.1 + 1e-3 * (1e-6 + 1.0) + 1e-6);
    let g = |d: f64| control_gap(0.4, 2.0, 0.1, 150.0, 1e-3, 1e-6, 0.0, d);
    assert!(rel(g(2.0) - g(1.0), slope) < 1e-14);
    assert!(rel(control_gap(0.0, 2.0, 0.1, 150.0, 1e-3, 1e-6, 1.0, 0.0), 2.0 + 15.0) < 1e-14);
}

#[test]
fn exp_difference_is_continuous_through_equal_rates() {
    let t: f64 = 5000.0;
    let exact = t * (-1e-3 * t).exp();
    assert_eq!(exp_difference(1e-3, 1e-3, t), exact);
    for d in [1e-14, 1e-15, 1e-16] {
        assert!((exp_difference(1e-3, 1e-3 + d, t) - exact).abs() <= 1e-9);
        assert!((exp_difference(1e-3, 1e-3 - d, t) - exact).abs() <= 1e-9);
    }
    // Naive form where it is well conditioned.
    let (a, b) = (1e-3, 3e-3);
    let naive = ((-a * t).exp() - (-b * t).exp()) / (b - a);
    assert!(rel(exp_difference(a, b, t), naive) < 1e-13);
    assert_eq!(exp_difference(a, b, t), exp_difference(b, a, t));
}

#[test]
fn zero_errors_give_zero_bound() {
    let inp = BoundInputs {
        p_err_s: 0.0,
        x_err_s: 0.0,
        c_e: 0.0,
        c: 0.0,
        sigma_bar: 0.0,
        ..inputs()
    };
    assert_eq!(delivery_bound_example1(&inp).unwrap().value, 0.0);
    assert_eq!(delivery_bound_example2(&inp).unwrap().value, 0.0);
    assert_eq!(delivery_bound_quadrature(&inp, 0.0, &|_| 0.0, None).unwrap().value, 0.0);
}

#[test]
fn branch_limit_is_continuous() {
    let base = inputs();
    let at = |alpha: f64| {
        let inp = BoundInputs { alpha, ..base };
        example1_quadrature(&inp, Some(1000)).unwrap()
    };
    let eq = at(base.lambda_min);
    assert_eq!(eq.branch, RateBranch::Equal);
    for d in [1e-10, 1e-13] {
        for side in [-1.0, 1.0] {
            let r = at(base.lambda_min + side * d);
            assert_eq!(r.branch, RateBranch::Distinct);
            assert!((r.terms[1] - eq.terms[1]).abs() <= 1e-9, "{:?} vs {:?}", r.terms, eq.terms);
        }
    }
    let t = base.horizon();
    let direct = t * (-base.lambda_min * t).exp() * (base.lambda_max + 1.0) * (base.x_err_s + base.c_e)
        / base.m_f.sqrt();
    assert!(rel(eq.terms[1], direct) < 1e-14);
}

#[test]
fn example1_matches_quadrature_over_a_parameter_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let inp = BoundInputs {
            alpha: 10f64.powf(rng.random_range(-6.5..-2.5)),
            lambda_min: 10f64.powf(rng.random_range(-4.0..-2.0)),
            beta: 10f64.powf(rng.random_range(-5.5..-3.0)),
            l_k: rng.random_range(0.0..1.0),
            c: rng.random_range(0.0..5.0),
            c_e: rng.random_range(0.0..50.0),
            p_err_s: rng.random_range(0.0..100.0),
            x_err_s: rng.random_range(0.0..100.0),
            t_s: rng.random_range(0.0..40_000.0),
            t_f: 86_400.0,
            ..inputs()
        };
        let inp = BoundInputs {
            lambda_max: inp.lambda_min * rng.random_range(1.0..3.0),
            ..inp
        };
        let closed = delivery_bound_example1(&inp).unwrap();
        let quad = example1_quadrature(&inp, None).unwrap();
        assert!(quad.richardson_rel < 1e-6, "{:?}", quad.warning);
        worst = worst.max(rel(closed.value, quad.value));
        assert!(rel(closed.value, quad.value) <= 1e-6, "{inp:?}: {} vs {}", closed.value, quad.value);
    }
    assert!(worst > 0.0);
}

#[test]
fn paper_gains_cross_check_and_large_horizon_limit() {
    let inp = BoundInputs {
        alpha: 8.9e-7,
        lambda_min: 1.3e-3,
        lambda_max: 1.3e-3,
        t_s: 26_400.0,
        t_f: 86_400.0,
        ..inputs()
    };
    let closed = delivery_bound_example1(&inp).unwrap();
    let quad = example1_quadrature(&inp, None).unwrap();
    assert!(rel(closed.value, quad.value) <= 1e-6);

    let far = BoundInputs {
        t_f: inp.t_s + 1e9,
        ..inp
    };
    let v = delivery_bound_example1(&far).unwrap().value;
    assert!(rel(v, example1_limit(&far)) < 1e-3, "{v} vs {}", example1_limit(&far));
}

#[test]
fn rate_collisions_defer_to_quadrature() {
    let inp = BoundInputs {
        beta: inputs().alpha,
        ..inputs()
    };
    assert!(delivery_bound_example1(&inp).unwrap_err().is_validation());
    let r = delivery_bound_example1_or_quadrature(&inp).unwrap();
    assert_eq!(r.method, BoundMethod::Quadrature);
    // Nearby distinct rates agree with the fallback.
    let near = BoundInputs {
        beta: inp.alpha * (1.0 + 1e-6),
        ..inp
    };
    let c = delivery_bound_example1(&near).unwrap();
    assert!(rel(c.value, r.value) < 1e-5);
}

#[test]
fn example2_matches_quadrature_and_dominates_example1() {
    let inp = inputs();
    let closed = delivery_bound_example2(&inp).unwrap();
    let quad = example2_quadrature(&inp, None).unwrap();
    assert!(rel(closed.value, quad.value) <= 1e-6);
    // σ̄ above c_e + c dominates the exponential envelope pointwise.
    assert!(inp.sigma_bar >= inp.c_e + inp.c);
    assert!(closed.value >= delivery_bound_example1(&inp).unwrap().value);
}

#[test]
fn quadrature_is_monotone_in_its_inputs() {
    let base = inputs();
    let b = |inp: &BoundInputs, scale: f64| {
        delivery_bound_quadrature(inp, inp.c_e, &|lag| scale * inp.exponential_varsigma()(lag), Some(2000))
            .unwrap()
            .value
    };
    let v0 = b(&base, 1.0);
    assert!(b(&BoundInputs { p_err_s: 5.0, ..base }, 1.0) >= v0);
    assert!(b(&BoundInputs { x_err_s: 5.0, ..base }, 1.0) >= v0);
    assert!(b(&BoundInputs { l_k: 0.1, ..base }, 1.0) >= v0);
    assert!(b(&base, 1.5) >= v0);
    assert!(b(&BoundInputs { m_f: 200.0, ..base }, 1.0) <= v0);
}

#[test]
fn invalid_inputs_are_rejected() {
    let bad = [
        BoundInputs { alpha: 0.0, ..inputs() },
        BoundInputs { t_f: 0.0, ..inputs() },
        BoundInputs { m_f: -1.0, ..inputs() },
        BoundInputs { c_e: f64::NAN, ..inputs() },
        BoundInputs { lambda_max: 1e-4, ..inputs() },
    ];
    for inp in bad {
        assert!(delivery_bound_example1(&inp).unwrap_err().is_validation());
        assert!(delivery_bound_quadrature(&inp, 0.0, &|_| 0.0, None).is_err());
    }
    assert!(delivery_bound_quadrature(&inputs(), 0.0, &|_| 0.0, Some(1)).is_err());
}

#[test]
fn exit_probability_branches() {
    // Perfect estimation and zero initial error: no exit.
    let perfect = BoundInputs {
        p_err_s: 0.0,
        x_err_s: 0.0,
        c_e: 0.0,
        c: 0.0,
        ..inputs()
    };
    let r = exit_probability(&perfect, None).unwrap();
    assert_eq!(r.branch, ExitBranch::LargeLevel);
    assert_eq!(r.eps_exit, 0.0);

    // Branch 1 probability is non-decreasing in v̄.
    let mut last = -1.0;
    let mut inp = inputs();
    let first = exit_probability(&inp, None).unwrap();
    let threshold = first.h_sup / first.alpha_bar;
    for k in 0..40 {
        inp.v_bar = threshold * (1.0 + k as f64);
        let r = exit_probability(&inp, None).unwrap();
        assert_eq!(r.branch, ExitBranch::LargeLevel);
        assert!(r.large_level >= last);
        last = r.large_level;
    }

    // At the switching level the two expressions differ by e^{−H̄/2}.
    inp.v_bar = threshold;
    let r = exit_probability(&inp, None).unwrap();
    assert_eq!(r.branch, ExitBranch::LargeLevel);
    let x = 0.5 * r.h_bar;
    assert!(rel(r.small_level, r.large_level * (-x).exp()) < 1e-9);
    inp.v_bar = threshold * (1.0 - 1e-12);
    assert_eq!(exit_probability(&inp, None).unwrap().branch, ExitBranch::SmallLevel);

    let bad = BoundInputs {
        delta_p: Some(2.0 * inputs().alpha * inputs().m_f.sqrt()),
        ..inputs()
    };
    assert!(exit_probability(&bad, None).unwrap_err().is_validation());
}

#[test]
fn ctrl_probability_products() {
    assert_eq!(ctrl_probability(0.0, 0.0, 0.0, f64::INFINITY), 1.0);
    assert_eq!(ctrl_probability(0.0, 0.0, 0.0, 1.0), 0.0);
    assert!((ctrl_probability(0.1, 0.1, 0.1, 10.0) - 0.6561).abs() < 1e-15);
    assert_eq!(ctrl_probability(1.5, 0.0, 0.0, 10.0), 0.0);
    assert!(ctrl_probability(0.2, 0.1, 0.1, 10.0) <= ctrl_probability(0.1, 0.1, 0.1, 10.0));
}
