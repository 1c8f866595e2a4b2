//! Invariants of the model, the surrogates and the dual machinery.

use ndarray::{Array1, Array2, Array3};
use proptest::prelude::*;
use v2x_ee::approx::{
    bounded_charging, bounded_sinr, coefficients_at, relax_assignment, sca_bound,
    update_coefficients, worst_case_interference,
};
use v2x_ee::metrics::{interference, sinr_given, wireless_charging};
use v2x_ee::scenario::fading_samples;
use v2x_ee::solver::{
    subgradient_step, DualScales, DualState, IntervalProblem, LinkDuals, LinkTerms, Slacks,
};
use v2x_ee::{generate, IntervalPolicy, ScenarioConfig, SolverConfig};

fn config(seed: u64, n: usize, b: usize) -> ScenarioConfig {
    ScenarioConfig {
        num_vehicles: n,
        num_rbs: b,
        num_intervals: 2,
        road_length_m: 300.0,
        rng_seed: seed,
        ..ScenarioConfig::default()
    }
}

/// Every served object on every RB at the given power and split.
fn full_policy(
    shape: (usize, usize, usize),
    assoc: &[Vec<usize>],
    p: f64,
    w: f64,
) -> IntervalPolicy {
    let mut pol = IntervalPolicy::empty(shape);
    for (i, objs) in assoc.iter().enumerate() {
        for &o in objs {
            for r in 0..shape.2 {
                pol.assignment[[i, o, r]] = 1.0;
                pol.power[[i, o, r]] = p;
                pol.set_split(i, o, r, w);
            }
        }
    }
    pol
}

fn link(a: f64, b: f64, gain: f64, ambient: f64, np: f64) -> LinkTerms {
    LinkTerms {
        a,
        b,
        gain,
        ambient_w: ambient,
        processing_noise_w: np,
        bandwidth_hz: 1e6,
        efficiency: 0.7,
        power_cap_w: 0.2,
    }
}

#[test]
fn fading_has_unit_mean() {
    let h = fading_samples(9, 100_000);
    let mean = h.iter().sum::<f64>() / h.len() as f64;
    assert!((mean - 1.0).abs() < 0.02, "{mean}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scenario_is_deterministic_with_positive_gains(seed in any::<u64>(), n in 1usize..5, b in 1usize..4) {
        let cfg = config(seed, n, b);
        let a = generate(&cfg).unwrap();
        prop_assert_eq!(&a, &generate(&cfg).unwrap());
        for s in &a {
            prop_assert!(s.gains.iter().all(|&g| g > 0.0 && g.is_finite()));
        }
    }

    #[test]
    fn sca_bound_is_a_tight_minorant(g0 in 1e-6f64..1e8, g in 1e-6f64..1e8) {
        let (a, b) = coefficients_at(g0).unwrap();
        prop_assert!(sca_bound(a, b, g) <= (1.0 + g).log2() + 1e-9);
        prop_assert!((sca_bound(a, b, g0) - (1.0 + g0).log2()).abs() <= 1e-9);
    }

    #[test]
    fn coefficient_recursion_has_a_fixpoint(gs in proptest::collection::vec(1e-4f64..1e6, 8)) {
        let gamma = Array3::from_shape_vec((2, 2, 2), gs).unwrap();
        let c1 = update_coefficients(&gamma, 1).unwrap();
        let c2 = update_coefficients(&gamma, 2).unwrap();
        prop_assert_eq!(c1.max_change(&c2), 0.0);
    }

    #[test]
    fn relaxed_indicator_stays_in_unit_interval(x in -10.0f64..10.0) {
        let s = relax_assignment(x);
        prop_assert!((0.0..=1.0).contains(&s));
    }

    #[test]
    fn sinr_monotone(w in 0.01f64..1.0, p1 in 0.0f64..0.2, p2 in 0.0f64..0.2, i1 in 0.0f64..1e-8, i2 in 0.0f64..1e-8) {
        let cfg = ScenarioConfig::default();
        let g = 1e-6;
        let (plo, phi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
        let (ilo, ihi) = if i1 <= i2 { (i1, i2) } else { (i2, i1) };
        prop_assert!(sinr_given(w, plo, g, ilo, &cfg) <= sinr_given(w, phi, g, ilo, &cfg));
        prop_assert!(sinr_given(w, phi, g, ihi, &cfg) <= sinr_given(w, phi, g, ilo, &cfg));
    }

    #[test]
    fn sinr_rises_with_information_ratio(w1 in 0.01f64..1.0, w2 in 0.01f64..1.0, p in 1e-4f64..0.2) {
        let cfg = ScenarioConfig::default();
        let (lo, hi) = if w1 <= w2 { (w1, w2) } else { (w2, w1) };
        prop_assume!(hi > lo);
        prop_assert!(sinr_given(lo, p, 1e-6, 1e-10, &cfg) < sinr_given(hi, p, 1e-6, 1e-10, &cfg));
    }

    #[test]
    fn charging_monotone(seed in 0u64..500, w in 0.05f64..0.9, dw in 0.0f64..0.05, p in 0.0f64..0.05, dp in 0.0f64..0.05) {
        let cfg = config(seed, 2, 2);
        let s = &generate(&cfg).unwrap()[0];
        let base = full_policy(s.shape(), &s.associations, p, w);
        for (i, o) in s.served_pairs() {
            let c = wireless_charging(&base, s, &cfg, i, o);
            // more energy split
            let less_info = full_policy(s.shape(), &s.associations, p, w - dw);
            prop_assert!(wireless_charging(&less_info, s, &cfg, i, o) >= c);
            // more power on any single link
            for k in 0..s.num_vehicles() {
                for &x in &s.associations[k] {
                    let mut more = base.clone();
                    more.power[[k, x, 0]] += dp;
                    prop_assert!(wireless_charging(&more, s, &cfg, i, o) >= c);
                }
            }
        }
    }

    #[test]
    fn tolerable_interference_bounds_the_surrogates(seed in 0u64..500, p in 1e-4f64..0.05, w in 0.05f64..0.95) {
        let cfg = config(seed, 3, 2);
        let s = &generate(&cfg).unwrap()[0];
        let pol = full_policy(s.shape(), &s.associations, p, w);
        let itilde = worst_case_interference(s, &cfg);
        for (i, o) in s.served_pairs() {
            for r in 0..2 {
                prop_assert!(itilde[[o, r]] >= interference(&pol, s, i, o, r) * (1.0 - 1e-12));
                let exact = sinr_given(w, p, s.gain(i, o, r), interference(&pol, s, i, o, r), &cfg);
                prop_assert!(bounded_sinr(&pol, s, &cfg, &itilde, (i, o, r)).unwrap() <= exact * (1.0 + 1e-12));
            }
            // with the tolerable level set to the realized interference the
            // surrogate harvests at least as much
            let mut actual = Array2::zeros(itilde.dim());
            for r in 0..2 {
                actual[[o, r]] = interference(&pol, s, i, o, r);
            }
            prop_assert!(bounded_charging(&pol, s, &cfg, &actual, (i, o)) >= wireless_charging(&pol, s, &cfg, i, o) * (1.0 - 1e-12));
        }
    }

    #[test]
    fn multipliers_stay_nonnegative(
        raw in proptest::collection::vec(-50.0f64..50.0, 24),
        init in proptest::collection::vec(0.0f64..5.0, 24),
        literal in any::<bool>(),
        t in 0usize..100,
    ) {
        let shape = (2, 2, 2);
        let mut dual = DualState::new(shape, 0.1);
        dual.t = t;
        dual.beta = Array1::from(init[0..2].to_vec());
        dual.delta = Array3::from_shape_vec(shape, init[2..10].to_vec()).unwrap();
        dual.tau = Array2::from_shape_vec((2, 2), init[10..14].to_vec()).unwrap();
        dual.theta = Array1::from(init[14..16].to_vec());
        dual.lambda = Array1::from(init[16..18].to_vec());
        dual.pi = Array1::from(init[18..20].to_vec());
        let slacks = Slacks {
            rate: Array1::from(raw[0..2].to_vec()),
            split: Array3::from_shape_vec(shape, raw[2..10].to_vec()).unwrap(),
            exclusive: Array2::from_shape_vec((2, 2), raw[10..14].to_vec()).unwrap(),
            charge_floor: Array1::from(raw[14..16].to_vec()),
            budget: Array1::from(raw[16..18].to_vec()),
            charge_ceiling: Array1::from(raw[18..20].to_vec()),
        };
        let next = subgradient_step(&dual, &slacks, &DualScales::unit(2), literal);
        prop_assert!(next.all_nonnegative());
        prop_assert_eq!(next.t, t + 1);
    }

    #[test]
    fn assignment_is_binary_and_exclusive(
        seed in 0u64..300,
        ee in 1e6f64..1e9,
        delta in 1e4f64..1e7,
        tau in 0.0f64..1e6,
        theta in 0.0f64..1e9,
    ) {
        let cfg = config(seed, 3, 3);
        let snaps = generate(&cfg).unwrap();
        let s = &snaps[0];
        let problem = IntervalProblem::new(s, &cfg).unwrap();
        let coeffs = update_coefficients(&Array3::from_elem(s.shape(), 20.0), 0).unwrap();
        let mut dual = DualState::new(s.shape(), 0.1);
        dual.delta.fill(delta);
        dual.tau.fill(tau);
        dual.theta.fill(theta);
        let cand = problem.primal_step(ee, &coeffs, &dual, &SolverConfig::default()).unwrap();
        for (i, objs) in s.associations.iter().enumerate() {
            for r in 0..3 {
                let used: f64 = objs.iter().map(|&o| cand.assignment[[i, o, r]]).sum();
                prop_assert!(used == 0.0 || used == 1.0);
                prop_assert!(objs.iter().all(|&o| cand.assignment[[i, o, r]] == 0.0 || cand.assignment[[i, o, r]] == 1.0));
            }
        }
    }

    #[test]
    fn closed_forms_are_stationary(
        g0 in 0.5f64..500.0,
        gain in 1e-7f64..1e-5,
        ambient in 1e-12f64..1e-9,
        np in 1e-11f64..1e-9,
        beta in 0.0f64..1.0,
        delta in 1e5f64..1e7,
        ee in 1e7f64..3e8,
        theta in 0.0f64..1e9,
    ) {
        let (a, b) = coefficients_at(g0).unwrap();
        let t = link(a, b, gain, ambient, np);
        let d = LinkDuals { beta, delta, theta, ..LinkDuals::default() };
        let w = t.ps_ratio(&d);
        let p = t.power(&d, ee, 0.0);
        let price = ee + (d.pi - d.theta - ee * t.efficiency) * t.gain + d.lambda;
        let lag = |x: f64, q: f64| {
            let gamma = x * q * gain / (np + x * ambient);
            (1.0 + beta) * 1e6 * (a * gamma.log2() + b) - delta * x - price * q
        };
        let h = 1e-6;
        if w > h && w < 1.0 - h {
            let slope = (lag(w + h, p) - lag(w - h, p)) / (2.0 * h);
            prop_assert!(slope.abs() < 1e-3 * delta, "split slope {slope}");
        }
        if p > 0.0 && p < t.power_cap_w {
            let hp = h * p;
            let slope = (lag(w, p + hp) - lag(w, p - hp)) / (2.0 * hp);
            prop_assert!(slope.abs() < 1e-3 * price, "power slope {slope} price {price}");
        }
    }

    #[test]
    fn assignment_picks_the_larger_lagrangian(
        g0 in (0.5f64..500.0, 0.5f64..500.0),
        gains in (1e-7f64..1e-5, 1e-7f64..1e-5),
        ambient in (1e-12f64..1e-9, 1e-12f64..1e-9),
        np in 1e-11f64..1e-9,
        beta in (0.0f64..1.0, 0.0f64..1.0),
        delta in (1e4f64..1e7, 1e4f64..1e7),
        tau in 0.0f64..1e6,
        ee in 0.0f64..1e9,
        lambda in 0.0f64..1e8,
    ) {
        // each object's candidate from the closed forms, then the full
        // Lagrangian of the RB with σ = 1 on that object and 0 on the other
        let objects = [
            (g0.0, gains.0, ambient.0, beta.0, delta.0),
            (g0.1, gains.1, ambient.1, beta.1, delta.1),
        ];
        let mut benefits = Vec::new();
        let mut lagrangians = Vec::new();
        for (g0, gain, k, beta, delta) in objects {
            let (a, b) = coefficients_at(g0).unwrap();
            let t = link(a, b, gain, k, np);
            let d = LinkDuals { beta, delta, tau, lambda, ..LinkDuals::default() };
            let w = t.ps_ratio(&d).clamp(1e-4, 1.0 - 1e-4);
            let p = t.power(&d, ee, 1e-12);
            let price = ee + (0.0 - ee * 0.7) * gain + lambda;
            let gamma = w * p * gain / (np + w * k);
            let value = (1.0 + beta) * 1e6 * (a * gamma.log2() + b) - price * p + delta * (1.0 - w) - tau;
            benefits.push(t.marginal_benefit(&d, ee, w, p));
            lagrangians.push(value);
        }
        for (j, l) in benefits.iter().zip(&lagrangians) {
            prop_assert!((j - l).abs() <= 1e-9 * j.abs().max(l.abs()).max(1.0), "{j} vs {l}");
        }
        let pick = v2x_ee::solver::assign_resource_blocks(0, 0, &benefits).unwrap();
        if (lagrangians[0] - lagrangians[1]).abs() > 1e-9 * lagrangians[0].abs().max(1.0) {
            prop_assert_eq!(pick, if lagrangians[1] > lagrangians[0] { 1 } else { 0 });
        }
    }

    #[test]
    fn interior_benefit_has_the_closed_form(
        g0 in 0.5f64..500.0,
        gain in 1e-7f64..1e-5,
        k in 1e-12f64..1e-9,
        np in 1e-11f64..1e-9,
        beta in 0.0f64..1.0,
        delta in 1e4f64..1e7,
        tau in 0.0f64..1e6,
        ee in 1e6f64..1e9,
    ) {
        let (a, b) = coefficients_at(g0).unwrap();
        let t = link(a, b, gain, k, np);
        let d = LinkDuals { beta, delta, tau, ..LinkDuals::default() };
        let w = t.ps_ratio(&d);
        let p = t.power(&d, ee, 1e-12);
        prop_assume!(w > 0.0 && w < 1.0 && p > 0.0 && p < t.power_cap_w);
        let gamma = w * p * gain / (np + w * k);
        let ln2 = std::f64::consts::LN_2;
        let wb = 1e6 * (1.0 + beta);
        let expect = wb * a * (gamma.log2() - (k * w + 2.0 * np) / (ln2 * (k * w + np))) + wb * b + delta - tau;
        let j = t.marginal_benefit(&d, ee, w, p);
        prop_assert!((j - expect).abs() <= 1e-6 * j.abs().max(expect.abs()).max(1e3), "{j} vs {expect}");
    }
}
