//! Concave surrogates used by the solver: the successive convex
//! approximation of `log2(1 + γ)`, SINR and charging evaluated at a fixed
//! tolerable interference level, and the relaxed object power.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{sinr_given, IntervalPolicy};
use crate::scenario::{NetworkSnapshot, ScenarioConfig};

/// Coefficients of the bound `a·log2 γ + b ≤ log2(1 + γ)` for one interval,
/// indexed `[vehicle, object, rb]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaCoefficients {
    pub a: Array3<f64>,
    pub b: Array3<f64>,
    pub iteration: usize,
}

/// `(a, b)` expanded at `γ0`: tight there and below `log2(1 + γ)` elsewhere.
pub fn coefficients_at(gamma0: f64) -> Result<(f64, f64)> {
    if !(gamma0 > 0.0 && gamma0.is_finite()) {
        return Err(Error::ExpansionPoint(gamma0));
    }
    let a = gamma0 / (gamma0 + 1.0);
    let b = (1.0 + gamma0).log2() - a * gamma0.log2();
    Ok((a, b))
}

/// `a·log2 γ + b`; `-∞` at `γ = 0` unless `a = 0`.
pub fn sca_bound(a: f64, b: f64, gamma: f64) -> f64 {
    if a == 0.0 {
        b
    } else {
        a * gamma.log2() + b
    }
}

/// Re-expands every link at its previous SINR.
pub fn update_coefficients(prev_sinr: &Array3<f64>, iteration: usize) -> Result<ScaCoefficients> {
    let mut a = Array3::zeros(prev_sinr.dim());
    let mut b = Array3::zeros(prev_sinr.dim());
    for ((&g, ai), bi) in prev_sinr.iter().zip(a.iter_mut()).zip(b.iter_mut()) {
        (*ai, *bi) = coefficients_at(g)?;
    }
    Ok(ScaCoefficients { a, b, iteration })
}

impl ScaCoefficients {
    /// Largest absolute change of either coefficient.
    pub fn max_change(&self, other: &ScaCoefficients) -> f64 {
        let da = self
            .a
            .iter()
            .zip(other.a.iter())
            .map(|(x, y)| (x - y).abs());
        let db = self
            .b
            .iter()
            .zip(other.b.iter())
            .map(|(x, y)| (x - y).abs());
        da.chain(db).fold(0.0, f64::max)
    }

    /// Largest coefficient change over links where `mask` is positive.
    pub fn max_change_on(&self, other: &ScaCoefficients, mask: &Array3<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        for (idx, &m) in mask.indexed_iter() {
            if m > 0.0 {
                worst = worst
                    .max((self.a[idx] - other.a[idx]).abs())
                    .max((self.b[idx] - other.b[idx]).abs());
            }
        }
        worst
    }
}

/// Tolerable interference per `[object, rb]`.
///
/// A configured scalar is used everywhere. Otherwise each object sees the
/// interference it would receive if every other active vehicle radiated its
/// whole budget on that resource block, so the level bounds any feasible
/// policy from above.
pub fn worst_case_interference(snapshot: &NetworkSnapshot, config: &ScenarioConfig) -> Array2<f64> {
    let (n, m, b) = snapshot.shape();
    if let Some(level) = config.worst_case_interference_w {
        return Array2::from_elem((m, b), level);
    }
    let mut out = Array2::zeros((m, b));
    for o in 0..m {
        let Some(server) = snapshot.serving_vehicle(o) else {
            continue;
        };
        for r in 0..b {
            out[[o, r]] = (0..n)
                .filter(|&k| k != server && snapshot.vehicle_active[k])
                .map(|k| config.vehicle_power_budget_w * snapshot.gain(k, o, r))
                .sum();
        }
    }
    out
}

/// `γ̃` with the interference replaced by the tolerable level.
pub fn bounded_sinr(
    policy: &IntervalPolicy,
    snapshot: &NetworkSnapshot,
    config: &ScenarioConfig,
    itilde: &Array2<f64>,
    (vehicle, object, rb): (usize, usize, usize),
) -> Result<f64> {
    let info = policy.ps_info[[vehicle, object, rb]];
    if info == 0.0 && policy.assignment[[vehicle, object, rb]] > 0.0 {
        return Err(Error::DegeneratePolicy {
            vehicle,
            object,
            rb,
        });
    }
    Ok(sinr_given(
        info,
        policy.power[[vehicle, object, rb]],
        snapshot.gain(vehicle, object, rb),
        itilde[[object, rb]],
        config,
    ))
}

/// `Π̃ = Σ_r W σ (a·log2 γ̃ + b)`.
pub fn bounded_rate(
    policy: &IntervalPolicy,
    coeffs: &ScaCoefficients,
    snapshot: &NetworkSnapshot,
    config: &ScenarioConfig,
    itilde: &Array2<f64>,
    (vehicle, object): (usize, usize),
) -> Result<f64> {
    let mut rate = 0.0;
    for r in 0..snapshot.num_rbs() {
        let s = relax_assignment(policy.assignment[[vehicle, object, r]]);
        if s == 0.0 {
            continue;
        }
        let gamma = bounded_sinr(policy, snapshot, config, itilde, (vehicle, object, r))?;
        if !(gamma > 0.0) {
            return Err(Error::SurrogateDomain {
                vehicle,
                object,
                rb: r,
            });
        }
        let (a, b) = (
            coeffs.a[[vehicle, object, r]],
            coeffs.b[[vehicle, object, r]],
        );
        rate += config.bandwidth_hz * s * sca_bound(a, b, gamma);
    }
    Ok(rate)
}

/// `C̃`: ambient term at the tolerable level, desired signal harvested in
/// full as if the receiver did not split it.
pub fn bounded_charging(
    policy: &IntervalPolicy,
    snapshot: &NetworkSnapshot,
    config: &ScenarioConfig,
    itilde: &Array2<f64>,
    (vehicle, object): (usize, usize),
) -> f64 {
    let eta = config.conversion_efficiency;
    let n0w = config.thermal_noise_w();
    (0..snapshot.num_rbs())
        .map(|r| {
            let s = relax_assignment(policy.assignment[[vehicle, object, r]]);
            if s == 0.0 {
                return 0.0;
            }
            let ambient = policy.ps_energy[[vehicle, object, r]] * (itilde[[object, r]] + n0w);
            let desired = policy.power[[vehicle, object, r]] * snapshot.gain(vehicle, object, r);
            eta * s * (ambient + desired)
        })
        .sum()
}

/// `Ẽ^RO = P^RO - C̃`, unclamped.
pub fn relaxed_object_power(charging: f64, config: &ScenarioConfig) -> f64 {
    config.object_rx_power_w - charging
}

/// True when `C̃` exceeds the object's reception power.
pub fn violates_c7(charging: f64, config: &ScenarioConfig) -> bool {
    charging > config.object_rx_power_w
}

/// Projection of a relaxed indicator onto `[0, 1]`.
pub fn relax_assignment(sigma: f64) -> f64 {
    sigma.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{interference, sinr, wireless_charging};
    use crate::scenario::{generate, Layout};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn coefficients_at_one() {
        let (a, b) = coefficients_at(1.0).unwrap();
        assert_eq!(a, 0.5);
        assert_eq!(b, 1.0);
    }

    #[test]
    fn coefficients_at_three() {
        let (a, b) = coefficients_at(3.0).unwrap();
        assert_abs_diff_eq!(a, 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(b, 2.0 - 0.75 * 3f64.log2(), epsilon = 1e-15);
    }

    #[test]
    fn coefficients_high_snr_limit() {
        let (a, b) = coefficients_at(1e6).unwrap();
        assert!((a - 1.0).abs() < 1e-5);
        // the bound approaches log2 γ
        assert!((sca_bound(a, b, 1e6) - 1e6f64.log2()).abs() < 1e-5);
    }

    #[test]
    fn coefficients_reject_nonpositive() {
        assert!(matches!(
            coefficients_at(0.0),
            Err(Error::ExpansionPoint(_))
        ));
        assert!(coefficients_at(-1.0).is_err());
        assert!(coefficients_at(f64::NAN).is_err());
    }

    #[test]
    fn recursion_fixpoint() {
        let g = Array3::from_shape_fn((2, 3, 2), |(i, o, r)| 0.1 + (i * 6 + o * 2 + r) as f64);
        let c1 = update_coefficients(&g, 1).unwrap();
        let c2 = update_coefficients(&g, 2).unwrap();
        assert_eq!(c1.max_change(&c2), 0.0);
    }

    fn instance() -> (ScenarioConfig, NetworkSnapshot) {
        let config = ScenarioConfig {
            num_vehicles: 2,
            num_rbs: 2,
            num_intervals: 1,
            road_length_m: 200.0,
            layout: Layout::PerVehicle {
                objects_per_vehicle: 2,
                spread_m: 10.0,
                offset_m: 3.0,
            },
            rng_seed: 9,
            ..ScenarioConfig::default()
        };
        let snap = generate(&config).unwrap().remove(0);
        (config, snap)
    }

    fn random_policy(snap: &NetworkSnapshot, config: &ScenarioConfig, seed: u64) -> IntervalPolicy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = IntervalPolicy::empty(snap.shape());
        for i in 0..snap.num_vehicles() {
            for r in 0..snap.num_rbs() {
                let objs = &snap.associations[i];
                let o = objs[rng.random_range(0..objs.len())];
                p.assignment[[i, o, r]] = 1.0;
                p.power[[i, o, r]] = rng.random_range(0.0..config.vehicle_power_budget_w / 2.0);
                p.set_split(i, o, r, rng.random_range(0.05..0.95));
            }
        }
        p
    }

    #[test]
    fn bounded_sinr_substitution_identity() {
        let (mut config, snap) = instance();
        let p = random_policy(&snap, &config, 1);
        let (i, o, r) = (0, snap.associations[0][0], 0);
        let actual = interference(&p, &snap, i, o, r);
        config.worst_case_interference_w = Some(actual);
        let itilde = worst_case_interference(&snap, &config);
        let g = bounded_sinr(&p, &snap, &config, &itilde, (i, o, r)).unwrap();
        assert_abs_diff_eq!(
            g,
            sinr(&p, &snap, &config, i, o, r).unwrap(),
            epsilon = 1e-12 * g.max(1.0)
        );
    }

    #[test]
    fn bounded_sinr_noise_only() {
        let (mut config, snap) = instance();
        config.worst_case_interference_w = Some(0.0);
        config.processing_noise_w = 0.0;
        let itilde = worst_case_interference(&snap, &config);
        let mut p = random_policy(&snap, &config, 2);
        let o = snap.associations[1][0];
        p.assignment[[1, o, 1]] = 1.0;
        p.power[[1, o, 1]] = 0.05;
        p.set_split(1, o, 1, 0.3);
        let g = bounded_sinr(&p, &snap, &config, &itilde, (1, o, 1)).unwrap();
        let expect = 0.05 * snap.gain(1, o, 1) / config.thermal_noise_w();
        assert!((g - expect).abs() <= 1e-12 * expect);
    }

    #[test]
    fn default_level_dominates_actual_interference() {
        let (config, snap) = instance();
        let itilde = worst_case_interference(&snap, &config);
        for seed in 0..20 {
            let p = random_policy(&snap, &config, seed);
            for (i, o) in snap.served_pairs() {
                for r in 0..snap.num_rbs() {
                    if p.assignment[[i, o, r]] == 0.0 {
                        continue;
                    }
                    assert!(itilde[[o, r]] >= interference(&p, &snap, i, o, r));
                    let gt = bounded_sinr(&p, &snap, &config, &itilde, (i, o, r)).unwrap();
                    assert!(gt <= sinr(&p, &snap, &config, i, o, r).unwrap());
                }
            }
        }
    }

    #[test]
    fn bounded_rate_tight_at_expansion_point() {
        let (mut config, snap) = instance();
        let p = random_policy(&snap, &config, 3);
        let (i, o) = (0, snap.associations[0][0]);
        // with Ĩ = I on every link of this pair, expanding at the true SINR is exact
        let mut gamma = Array3::from_elem(snap.shape(), 1.0);
        let mut exact = 0.0;
        for r in 0..snap.num_rbs() {
            let g = sinr(&p, &snap, &config, i, o, r).unwrap();
            if p.assignment[[i, o, r]] > 0.0 {
                gamma[[i, o, r]] = g;
                exact += config.bandwidth_hz * (1.0 + g).log2();
            }
        }
        let coeffs = update_coefficients(&gamma, 1).unwrap();
        let mut itilde = Array2::zeros((snap.num_objects(), snap.num_rbs()));
        for r in 0..snap.num_rbs() {
            itilde[[o, r]] = interference(&p, &snap, i, o, r);
        }
        config.worst_case_interference_w = None;
        let approx_rate = bounded_rate(&p, &coeffs, &snap, &config, &itilde, (i, o)).unwrap();
        assert!((approx_rate - exact).abs() <= 1e-9 * exact.max(1.0));
    }

    #[test]
    fn bounded_rate_unassigned_is_zero() {
        let (config, snap) = instance();
        let p = IntervalPolicy::empty(snap.shape());
        let coeffs = update_coefficients(&Array3::from_elem(snap.shape(), 1.0), 1).unwrap();
        let itilde = worst_case_interference(&snap, &config);
        for (i, o) in snap.served_pairs() {
            assert_eq!(
                bounded_rate(&p, &coeffs, &snap, &config, &itilde, (i, o)).unwrap(),
                0.0
            );
        }
    }

    #[test]
    fn bounded_rate_zero_power_is_domain_error() {
        let (config, snap) = instance();
        let mut p = IntervalPolicy::empty(snap.shape());
        let o = snap.associations[0][0];
        p.assignment[[0, o, 0]] = 1.0;
        let coeffs = update_coefficients(&Array3::from_elem(snap.shape(), 1.0), 1).unwrap();
        let itilde = worst_case_interference(&snap, &config);
        assert!(matches!(
            bounded_rate(&p, &coeffs, &snap, &config, &itilde, (0, o)),
            Err(Error::SurrogateDomain { .. })
        ));
    }

    #[test]
    fn bounded_charging_full_split_matches_exact() {
        let (mut config, snap) = instance();
        let mut p = random_policy(&snap, &config, 4);
        let o = snap.associations[0][0];
        for r in 0..snap.num_rbs() {
            p.set_split(0, o, r, 0.0);
        }
        // Ĩ = I needs a scalar per link; use one RB only
        for r in 1..snap.num_rbs() {
            p.assignment[[0, o, r]] = 0.0;
        }
        config.worst_case_interference_w = Some(interference(&p, &snap, 0, o, 0));
        let itilde = worst_case_interference(&snap, &config);
        let exact = wireless_charging(&p, &snap, &config, 0, o);
        let bound = bounded_charging(&p, &snap, &config, &itilde, (0, o));
        assert!((exact - bound).abs() <= 1e-12 * exact);
    }

    #[test]
    fn bounded_charging_dominates_exact() {
        let (config, snap) = instance();
        let itilde = worst_case_interference(&snap, &config);
        for seed in 0..20 {
            let p = random_policy(&snap, &config, 100 + seed);
            for (i, o) in snap.served_pairs() {
                let exact = wireless_charging(&p, &snap, &config, i, o);
                let bound = bounded_charging(&p, &snap, &config, &itilde, (i, o));
                assert!(bound >= exact * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn bounded_charging_nothing_harvested() {
        let (config, snap) = instance();
        let mut p = IntervalPolicy::empty(snap.shape());
        let o = snap.associations[0][0];
        p.assignment[[0, o, 0]] = 1.0;
        p.set_split(0, o, 0, 1.0);
        let itilde = worst_case_interference(&snap, &config);
        assert_eq!(bounded_charging(&p, &snap, &config, &itilde, (0, o)), 0.0);
    }

    #[test]
    fn relaxed_object_power_cases() {
        let config = ScenarioConfig {
            object_rx_power_w: 0.05,
            ..ScenarioConfig::default()
        };
        assert_eq!(relaxed_object_power(0.0, &config), 0.05);
        assert_eq!(relaxed_object_power(0.05, &config), 0.0);
        assert!(!violates_c7(0.05, &config));
        assert!(violates_c7(0.06, &config));
        let c = 0.02;
        assert_eq!(
            relaxed_object_power(c, &config),
            crate::metrics::object_power(c, &config)
        );
    }

    #[test]
    fn relaxation_clamps() {
        assert_eq!(relax_assignment(-0.2), 0.0);
        assert_eq!(relax_assignment(0.4), 0.4);
        assert_eq!(relax_assignment(1.3), 1.0);
    }
}
