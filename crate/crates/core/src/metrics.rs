//! Exact evaluation of the physical model: vehicle and object power
//! consumption, wireless charging, interference, SINR, capacity and the
//! energy-efficiency objective, together with signed constraint slacks.

use std::io::Write;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{NetworkSnapshot, ScenarioConfig};

/// Decision variables of one interval, indexed `[vehicle, object, rb]`.
/// Entries for object/vehicle pairs that are not associated are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalPolicy {
    pub power: Array3<f64>,
    pub ps_info: Array3<f64>,
    pub ps_energy: Array3<f64>,
    pub assignment: Array3<f64>,
}

impl IntervalPolicy {
    /// All-zero power and assignment with an even 0.5/0.5 split.
    pub fn empty(shape: (usize, usize, usize)) -> Self {
        Self {
            power: Array3::zeros(shape),
            ps_info: Array3::from_elem(shape, 0.5),
            ps_energy: Array3::from_elem(shape, 0.5),
            assignment: Array3::zeros(shape),
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.power.dim()
    }

    /// Sets both split ratios of one link from the information ratio.
    pub fn set_split(&mut self, vehicle: usize, object: usize, rb: usize, info: f64) {
        self.ps_info[[vehicle, object, rb]] = info;
        self.ps_energy[[vehicle, object, rb]] = 1.0 - info;
    }

    pub fn check_shape(&self, snapshot: &NetworkSnapshot) -> Result<()> {
        snapshot.ensure_realized()?;
        let expected = snapshot.shape();
        for found in [
            self.power.dim(),
            self.ps_info.dim(),
            self.ps_energy.dim(),
            self.assignment.dim(),
        ] {
            if found != expected {
                return Err(Error::ShapeMismatch { expected, found });
            }
        }
        Ok(())
    }

    /// Power put on the air by `vehicle` on `rb`: `Σ_j σ P`.
    pub fn radiated_power(&self, snapshot: &NetworkSnapshot, vehicle: usize, rb: usize) -> f64 {
        snapshot.associations[vehicle]
            .iter()
            .map(|&o| self.assignment[[vehicle, o, rb]] * self.power[[vehicle, o, rb]])
            .sum()
    }

    /// `radiated[[vehicle, rb]]` for every vehicle and RB.
    pub fn radiated(&self, snapshot: &NetworkSnapshot) -> Array2<f64> {
        let (n, _, b) = self.shape();
        Array2::from_shape_fn((n, b), |(i, r)| self.radiated_power(snapshot, i, r))
    }
}

/// A full-horizon policy, one entry per interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub intervals: Vec<IntervalPolicy>,
}

impl Policy {
    pub fn check(&self, snapshots: &[NetworkSnapshot]) -> Result<()> {
        if self.intervals.len() != snapshots.len() {
            return Err(Error::Config(format!(
                "policy covers {} intervals, scenario has {}",
                self.intervals.len(),
                snapshots.len()
            )));
        }
        for (p, s) in self.intervals.iter().zip(snapshots) {
            p.check_shape(s)?;
        }
        Ok(())
    }
}

/// `E^V = P^V + Σ_j Σ_r σ P`.
pub fn vehicle_power(
    policy: &IntervalPolicy,
    snapshot: &NetworkSnapshot,
    config: &ScenarioConfig,
    vehicle: usize,
) -> f64 {
    let transmit: f64 = (0..snapshot.num_rbs())
        .map(|r| policy.radiated_power(snapshot, vehicle, r))
        .sum();
    config.static_vehicle_power_w + transmit
}

/// Interference at `object` (served by `vehicle`) on `rb` from every other
/// vehicle, through the cross gain from each interferer to the object.
pub fn interference(
    policy: &IntervalPolicy,
    snapshot: &NetworkSnapshot,
    vehicle: usize,
    object: usize,
    rb: usize,
) -> f64 {
    (0..snapshot.num_vehicles())
        .filter(|&k| k != vehicle)
        .map(|k| policy.radiated_power(snapshot, k, rb) * snapshot.gain(k, object, rb))
        .sum()
}

fn interference_from(
    radiated: &Array2<f64>,
    snapshot: &NetworkSnapshot,
    vehicle: usize,
    object: usize,
    rb: usize,
) -> f64 {
    (0..snapshot.num_vehicles())
        .filter(|&k| k != vehicle)
        .map(|k| radiated[[k, rb]] * snapshot.gain(k, object, rb))
        .sum()
}

fn charging_with(
    policy: &IntervalPolicy,
    snapshot: &NetworkSnapshot,
    config: &ScenarioConfig,
    vehicle: usize,
    object: usize,
    interference_at: impl Fn(usize) -> f64,
) -> f64 {
    let eta = config.conversion_efficiency;
    let n0w = config.thermal_noise_w();
    (0..snapshot.num_rbs())
        .map(|r| {
            let s = policy.assignment[[vehicle, object, r]];
            if s == 0.0 {
                return 0.0;
            }
            let split = policy.ps_energy[[vehicle, object, r]];
            let ambient = eta * split * s * (interference_at(r) + n0w);
            let desired = eta
                * split
                * s
                * policy.power[[vehicle, object, r]]
                * snapshot.gain(vehicle, object, r);
            ambient + desired
        })
        .sum()
}

/// Harvested power `C_{i,j}`: the energy stream of both the ambient
/// (interference plus noise) and the desired signal.
pub fn wireless_charging(
    policy: &IntervalPolicy,
    snapshot: &NetworkSnapshot,
    config: &ScenarioConfig,
    vehicle: usize,
    object: usize,
) -> f64 {
    charging_with(policy, snapshot, config, vehicle, object, |r| {
        interference(policy, snapshot, vehicle, object, r)
    })
}

/// `E^RO = max(P^RO - C, 0)`.
pub fn object_power(charging: f64, config: &ScenarioConfig) -> f64 {
    (config.object_rx_power_w - charging).max(0.0)
}

/// SINR of the information stream given the interference on the link.
pub fn sinr_given(
    info: f64,
    power: f64,
    gain: f64,
    interference: f64,
    config: &ScenarioConfig,
) -> f64 {
    let signal = info * power * gain;
    if signal == 0.0 {
        return 0.0;
    }
    signal / (config.processing_noise_w + info * (interference + config.thermal_noise_w()))
}

/// `γ = ϖ^I P g / (N_p + ϖ^I (I + N0 W))`.
pub fn sinr(
    policy: &IntervalPolicy,
    snapshot: &NetworkSnapshot,
    config: &ScenarioConfig,
    vehicle: usize,
    object: usize,
    rb: usize,
) -> Result<f64> {
    let info = policy.ps_info[[vehicle, object, rb]];
    if info == 0.0 && policy.assignment[[vehicle, object, rb]] > 0.0 {
        return Err(Error::DegeneratePolicy {
            vehicle,
            object,
            rb,
        });
    }
    let i = interference(policy, snapshot, vehicle, object, rb);
    Ok(sinr_given(
        info,
        policy.power[[vehicle, object, rb]],
        snapshot.gain(vehicle, object, rb),
        i,
        config,
    ))
}

/// Normalisers for constraint slacks.
pub fn rate_scale(config: &ScenarioConfig) -> f64 {
    if config.min_rate_bps > 0.0 {
        config.min_rate_bps
    } else {
        config.bandwidth_hz
    }
}

pub fn charge_scale(config: &ScenarioConfig) -> f64 {
    if config.min_charge_w > 0.0 {
        config.min_charge_w
    } else if config.object_rx_power_w > 0.0 {
        config.object_rx_power_w
    } else {
        1.0
    }
}

pub fn ceiling_scale(config: &ScenarioConfig) -> f64 {
    if config.object_rx_power_w > 0.0 {
        config.object_rx_power_w
    } else {
        charge_scale(config)
    }
}

/// Worst (smallest) normalised slack per constraint; `None` when a
/// constraint has no instances (e.g. no assigned link for C2/C6).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Residuals {
    /// `(Π - Π^min) / Π^min`.
    pub c1_rate: Option<f64>,
    /// `-|ϖ^I + ϖ^E - 1|` on assigned links.
    pub c2_split_sum: Option<f64>,
    /// `1 - Σ_j σ`.
    pub c3_exclusive: Option<f64>,
    /// `(C - P^min) / P^min`.
    pub c4_charge: Option<f64>,
    /// `(P^T - Σ σ P) / P^T`.
    pub c5_budget: Option<f64>,
    /// `min(ϖ^I, ϖ^E)` on assigned links; must be strictly positive.
    pub c6_split_bounds: Option<f64>,
    /// `(P^RO - C̃) / P^RO` of the surrogate problem; filled by the solver.
    pub c7_surrogate_charge: Option<f64>,
}

fn fold_min(slot: &mut Option<f64>, v: f64) {
    *slot = Some(slot.map_or(v, |cur| cur.min(v)));
}

impl Residuals {
    pub fn min_slack(&self) -> f64 {
        [
            self.c1_rate,
            self.c2_split_sum,
            self.c3_exclusive,
            self.c4_charge,
            self.c5_budget,
            self.c6_split_bounds,
            self.c7_surrogate_charge,
        ]
        .into_iter()
        .flatten()
        .fold(f64::INFINITY, f64::min)
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        self.min_slack() >= -tol
    }

    pub fn merge(&mut self, other: &Residuals) {
        let pairs = [
            (&mut self.c1_rate, other.c1_rate),
            (&mut self.c2_split_sum, other.c2_split_sum),
            (&mut self.c3_exclusive, other.c3_exclusive),
            (&mut self.c4_charge, other.c4_charge),
            (&mut self.c5_budget, other.c5_budget),
            (&mut self.c6_split_bounds, other.c6_split_bounds),
            (&mut self.c7_surrogate_charge, other.c7_surrogate_charge),
        ];
        for (slot, v) in pairs {
            if let Some(v) = v {
                fold_min(slot, v);
            }
        }
    }
}

/// Per served pair quantities of one interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRow {
    pub interval: usize,
    pub vehicle: usize,
    pub object: usize,
    pub rate_bps: f64,
    pub charging_w: f64,
    pub object_power_w: f64,
    pub allocated_power_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<LinkRow>,
    /// `E^V_i(l)` indexed `[interval][vehicle]`.
    pub vehicle_power_w: Vec<Vec<f64>>,
    /// Total energy E in joules.
    pub total_energy_j: f64,
    /// Total delivered bits R.
    pub total_bits: f64,
    /// Λ = R / E in bit/J.
    pub energy_efficiency: f64,
    pub residuals: Residuals,
}

/// Evaluated quantities of a single interval.
#[derive(Debug, Clone)]
pub struct IntervalEval {
    pub rows: Vec<LinkRow>,
    pub vehicle_power_w: Vec<f64>,
    pub object_power_sum_w: f64,
    pub rate_sum_bps: f64,
    pub residuals: Residuals,
}

pub fn evaluate_interval(
    policy: &IntervalPolicy,
    snapshot: &NetworkSnapshot,
    config: &ScenarioConfig,
) -> Result<IntervalEval> {
    policy.check_shape(snapshot)?;
    let (n, _, b) = snapshot.shape();
    let radiated = policy.radiated(snapshot);
    let w = config.bandwidth_hz;
    let mut residuals = Residuals::default();
    let mut rows = Vec::with_capacity(snapshot.num_served_pairs());
    let mut rate_sum = 0.0;
    let mut object_sum = 0.0;

    for (i, o) in snapshot.served_pairs() {
        let mut rate = 0.0;
        let mut allocated = 0.0;
        for r in 0..b {
            let s = policy.assignment[[i, o, r]];
            if s == 0.0 {
                continue;
            }
            let info = policy.ps_info[[i, o, r]];
            if info == 0.0 {
                return Err(Error::DegeneratePolicy {
                    vehicle: i,
                    object: o,
                    rb: r,
                });
            }
            let interf = interference_from(&radiated, snapshot, i, o, r);
            let gamma = sinr_given(
                info,
                policy.power[[i, o, r]],
                snapshot.gain(i, o, r),
                interf,
                config,
            );
            rate += w * s * (1.0 + gamma).log2();
            allocated += s * policy.power[[i, o, r]];
            let energy = policy.ps_energy[[i, o, r]];
            fold_min(&mut residuals.c2_split_sum, -(info + energy - 1.0).abs());
            fold_min(&mut residuals.c6_split_bounds, info.min(energy));
        }
        let charging = charging_with(policy, snapshot, config, i, o, |r| {
            interference_from(&radiated, snapshot, i, o, r)
        });
        let e_ro = object_power(charging, config);
        fold_min(
            &mut residuals.c1_rate,
            (rate - config.min_rate_bps) / rate_scale(config),
        );
        fold_min(
            &mut residuals.c4_charge,
            (charging - config.min_charge_w) / charge_scale(config),
        );
        rate_sum += rate;
        object_sum += e_ro;
        rows.push(LinkRow {
            interval: snapshot.interval,
            vehicle: i,
            object: o,
            rate_bps: rate,
            charging_w: charging,
            object_power_w: e_ro,
            allocated_power_w: allocated,
        });
    }

    let mut vehicle_powers = Vec::with_capacity(n);
    for i in 0..n {
        let transmit: f64 = radiated.row(i).sum();
        if !snapshot.vehicle_active[i] {
            vehicle_powers.push(transmit);
            continue;
        }
        vehicle_powers.push(config.static_vehicle_power_w + transmit);
        {
            fold_min(
                &mut residuals.c5_budget,
                (config.vehicle_power_budget_w - transmit) / config.vehicle_power_budget_w,
            );
            for r in 0..b {
                let used: f64 = snapshot.associations[i]
                    .iter()
                    .map(|&o| policy.assignment[[i, o, r]])
                    .sum();
                fold_min(&mut residuals.c3_exclusive, 1.0 - used);
            }
        }
    }

    Ok(IntervalEval {
        rows,
        vehicle_power_w: vehicle_powers,
        object_power_sum_w: object_sum,
        rate_sum_bps: rate_sum,
        residuals,
    })
}

/// Total delivered bits `R` and the per-pair rates.
pub fn total_capacity(
    policy: &Policy,
    snapshots: &[NetworkSnapshot],
    config: &ScenarioConfig,
) -> Result<(f64, Vec<LinkRow>)> {
    policy.check(snapshots)?;
    let mut bits = 0.0;
    let mut rows = Vec::new();
    for (p, s) in policy.intervals.iter().zip(snapshots) {
        let eval = evaluate_interval(p, s, config)?;
        bits += eval.rate_sum_bps * config.interval_s;
        rows.extend(eval.rows);
    }
    Ok((bits, rows))
}

/// Energy efficiency Λ = R / E over the whole horizon, with the full report.
pub fn energy_efficiency(
    policy: &Policy,
    snapshots: &[NetworkSnapshot],
    config: &ScenarioConfig,
) -> Result<MetricsReport> {
    policy.check(snapshots)?;
    let mut rows = Vec::new();
    let mut vehicle_power_w = Vec::with_capacity(snapshots.len());
    let mut residuals = Residuals::default();
    let mut bits = 0.0;
    let mut energy = 0.0;
    for (p, s) in policy.intervals.iter().zip(snapshots) {
        let eval = evaluate_interval(p, s, config)?;
        bits += eval.rate_sum_bps * config.interval_s;
        let power: f64 = eval.object_power_sum_w + eval.vehicle_power_w.iter().sum::<f64>();
        energy += power * config.interval_s;
        residuals.merge(&eval.residuals);
        rows.extend(eval.rows);
        vehicle_power_w.push(eval.vehicle_power_w);
    }
    if !(energy > 0.0) {
        return Err(Error::UndefinedEfficiency);
    }
    Ok(MetricsReport {
        rows,
        vehicle_power_w,
        total_energy_j: energy,
        total_bits: bits,
        energy_efficiency: bits / energy,
        residuals,
    })
}

impl MetricsReport {
    /// One row per served `(interval, vehicle, object)` followed by a totals row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "row",
            "interval",
            "vehicle",
            "object",
            "rate_bps",
            "charging_w",
            "object_power_w",
            "allocated_power_w",
        ])?;
        for r in &self.rows {
            w.write_record([
                "link".to_string(),
                r.interval.to_string(),
                r.vehicle.to_string(),
                r.object.to_string(),
                format!("{:e}", r.rate_bps),
                format!("{:e}", r.charging_w),
                format!("{:e}", r.object_power_w),
                format!("{:e}", r.allocated_power_w),
            ])?;
        }
        let allocated: f64 = self.rows.iter().map(|r| r.allocated_power_w).sum();
        let charging: f64 = self.rows.iter().map(|r| r.charging_w).sum();
        let object_power: f64 = self.rows.iter().map(|r| r.object_power_w).sum();
        w.write_record([
            "total".to_string(),
            String::new(),
            String::new(),
            String::new(),
            format!("{:e}", self.total_bits),
            format!("{:e}", charging),
            format!("{:e}", object_power),
            format!("{:e}", allocated),
        ])?;
        w.flush()?;
        Ok(())
    }
}
