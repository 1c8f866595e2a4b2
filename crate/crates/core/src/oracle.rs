//! Brute-force reference optimizer for tiny instances.
//!
//! Every resource-block assignment is enumerated, transmit powers are taken
//! from a log-spaced grid and power-splitting ratios from a uniform grid.
//! Ratio maximization over the horizon uses Dinkelbach's method on the
//! finite candidate set, which is exact for that set. Given the assignment
//! and powers, the split problem of each object is concave along every link,
//! so the best grid ratios are found with monotone searches instead of a
//! full sweep.

use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::approx::{sca_bound, worst_case_interference, ScaCoefficients};
use crate::error::{Error, Result};
use crate::metrics::{energy_efficiency, IntervalPolicy, Policy};
use crate::scenario::{NetworkSnapshot, ScenarioConfig};

pub const MAX_VEHICLES: usize = 2;
pub const MAX_OBJECTS_PER_VEHICLE: usize = 2;
pub const MAX_RBS: usize = 2;
pub const MAX_INTERVALS: usize = 2;
const MIN_GRID: usize = 8;
const MAX_DINKELBACH: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Transmit powers per assigned link, log-spaced up to `P^T`.
    pub power_grid_points: usize,
    /// Information ratios `k / (n + 1)` for `k = 1..=n`.
    pub ps_grid_points: usize,
    /// Smallest grid power as a fraction of `P^T`.
    pub power_floor_ratio: f64,
    /// Relative stopping tolerance of the Dinkelbach loop.
    pub tolerance: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            power_grid_points: 64,
            ps_grid_points: 64,
            power_floor_ratio: 1e-3,
            tolerance: 1e-12,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.power_grid_points < MIN_GRID || self.ps_grid_points < MIN_GRID {
            return Err(Error::Config(format!(
                "oracle grids need at least {MIN_GRID} points"
            )));
        }
        if !(self.power_floor_ratio > 0.0 && self.power_floor_ratio < 1.0) {
            return Err(Error::Config("power_floor_ratio must lie in (0, 1)".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Config("tolerance must be non-negative".into()));
        }
        Ok(())
    }

    pub fn power_grid(&self, budget: f64) -> Vec<f64> {
        let n = self.power_grid_points;
        let lo = self.power_floor_ratio.ln();
        (0..n)
            .map(|k| {
                if k + 1 == n {
                    budget
                } else {
                    budget * (lo * (1.0 - k as f64 / (n - 1) as f64)).exp()
                }
            })
            .collect()
    }

    pub fn ps_grid(&self) -> Vec<f64> {
        let n = self.ps_grid_points;
        (1..=n).map(|k| k as f64 / (n + 1) as f64).collect()
    }
}

/// Best grid point found by an oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// `Λ` for [`oracle_max_ee`], `F` for [`oracle_max_transformed`].
    pub value: f64,
    pub policy: Policy,
    /// Largest change of `value` when a single power or split index of the
    /// optimum moves to a neighbouring grid point.
    pub grid_slack: f64,
    pub dinkelbach_iterations: usize,
}

/// Rejects instances outside the enumeration caps.
pub fn check_caps(snapshots: &[NetworkSnapshot]) -> Result<()> {
    if snapshots.is_empty() || snapshots.len() > MAX_INTERVALS {
        return Err(Error::OracleCaps(format!(
            "{} intervals (1..={MAX_INTERVALS} allowed)",
            snapshots.len()
        )));
    }
    for s in snapshots {
        s.ensure_realized()?;
        let (n, _, b) = s.shape();
        if n > MAX_VEHICLES {
            return Err(Error::OracleCaps(format!(
                "{n} vehicles (max {MAX_VEHICLES})"
            )));
        }
        if b > MAX_RBS {
            return Err(Error::OracleCaps(format!(
                "{b} resource blocks (max {MAX_RBS})"
            )));
        }
        if let Some(objs) = s
            .associations
            .iter()
            .find(|a| a.len() > MAX_OBJECTS_PER_VEHICLE)
        {
            return Err(Error::OracleCaps(format!(
                "{} objects on one vehicle in interval {} (max {MAX_OBJECTS_PER_VEHICLE})",
                objs.len(),
                s.interval
            )));
        }
    }
    Ok(())
}

/// Exhaustive maximum of the true energy efficiency under C1-C6.
/// `Ok(None)` when no grid point is feasible.
pub fn oracle_max_ee(
    snapshots: &[NetworkSnapshot],
    config: &ScenarioConfig,
    oc: &OracleConfig,
) -> Result<Option<OracleResult>> {
    oc.validate()?;
    check_caps(snapshots)?;
    let searches: Vec<Search> = snapshots
        .iter()
        .map(|s| Search::new(s, config, oc, Mode::True))
        .collect();

    let mut ee = 0.0;
    let mut iterations = 0;
    let mut best: Vec<Leaf> = Vec::new();
    while iterations < MAX_DINKELBACH {
        iterations += 1;
        let mut leaves = Vec::with_capacity(searches.len());
        for search in &searches {
            match search.best(ee) {
                Some(leaf) => leaves.push(leaf),
                None => return Ok(None),
            }
        }
        let bits: f64 = leaves.iter().map(|l| l.rate).sum();
        let energy: f64 = leaves.iter().map(|l| l.energy).sum();
        let f = bits - ee * energy;
        best = leaves;
        if f <= oc.tolerance * bits.max(f64::MIN_POSITIVE) {
            break;
        }
        ee = bits / energy;
    }

    let policy = Policy {
        intervals: searches
            .iter()
            .zip(&best)
            .map(|(s, l)| s.policy(l))
            .collect(),
    };
    let value = energy_efficiency(&policy, snapshots, config)?.energy_efficiency;
    let mut slack = 0.0;
    for (l, (search, leaf)) in searches.iter().zip(&best).enumerate() {
        for group in search.neighbours(leaf) {
            let mut worst: f64 = 0.0;
            for neighbour in group {
                let mut p = policy.clone();
                p.intervals[l] = neighbour;
                if let Ok(report) = energy_efficiency(&p, snapshots, config) {
                    worst = worst.max((report.energy_efficiency - value).abs());
                }
            }
            slack += worst;
        }
    }
    Ok(Some(OracleResult {
        value,
        policy,
        grid_slack: slack,
        dinkelbach_iterations: iterations,
    }))
}

/// Exhaustive maximum of the transformed objective
/// `Σ W σ (a·log2 γ̃ + b) - Λ·Ẽ` at fixed `Λ` and expansion coefficients,
/// under C1-C7 of the surrogate problem. `coeffs` holds one set per interval.
pub fn oracle_max_transformed(
    snapshots: &[NetworkSnapshot],
    config: &ScenarioConfig,
    ee: f64,
    coeffs: &[ScaCoefficients],
    oc: &OracleConfig,
) -> Result<Option<OracleResult>> {
    oc.validate()?;
    check_caps(snapshots)?;
    if coeffs.len() != snapshots.len() {
        return Err(Error::Config(format!(
            "{} coefficient sets for {} intervals",
            coeffs.len(),
            snapshots.len()
        )));
    }
    let mut value = 0.0;
    let mut intervals = Vec::with_capacity(snapshots.len());
    let mut slack = 0.0;
    for (s, c) in snapshots.iter().zip(coeffs) {
        let search = Search::new(s, config, oc, Mode::Transformed(c));
        let Some(leaf) = search.best(ee) else {
            return Ok(None);
        };
        let own = transformed_value(&search.policy(&leaf), s, config, ee, c)?;
        for group in search.neighbours(&leaf) {
            let mut worst: f64 = 0.0;
            for neighbour in group {
                if let Ok(v) = transformed_value(&neighbour, s, config, ee, c) {
                    worst = worst.max((v - own).abs() * config.interval_s);
                }
            }
            slack += worst;
        }
        value += own * config.interval_s;
        intervals.push(search.policy(&leaf));
    }
    Ok(Some(OracleResult {
        value,
        policy: Policy { intervals },
        grid_slack: slack,
        dinkelbach_iterations: 0,
    }))
}

/// `Σ W σ (a·log2 γ̃ + b) - Λ·Ẽ` of one interval, per second.
pub fn transformed_value(
    policy: &IntervalPolicy,
    snapshot: &NetworkSnapshot,
    config: &ScenarioConfig,
    ee: f64,
    coeffs: &ScaCoefficients,
) -> Result<f64> {
    policy.check_shape(snapshot)?;
    let itilde = worst_case_interference(snapshot, config);
    let n0w = config.thermal_noise_w();
    let mut rate = 0.0;
    let mut energy = 0.0;
    for (i, objs) in snapshot.associations.iter().enumerate() {
        if !snapshot.vehicle_active[i] {
            continue;
        }
        energy += config.static_vehicle_power_w;
        for &o in objs {
            let mut charge = 0.0;
            for r in 0..snapshot.num_rbs() {
                let s = policy.assignment[[i, o, r]];
                if s == 0.0 {
                    continue;
                }
                let (w, p, g) = (
                    policy.ps_info[[i, o, r]],
                    policy.power[[i, o, r]],
                    snapshot.gain(i, o, r),
                );
                let gamma = w * p * g / (config.processing_noise_w + w * (itilde[[o, r]] + n0w));
                rate += s
                    * config.bandwidth_hz
                    * sca_bound(coeffs.a[[i, o, r]], coeffs.b[[i, o, r]], gamma);
                charge += s
                    * config.conversion_efficiency
                    * (policy.ps_energy[[i, o, r]] * (itilde[[o, r]] + n0w) + p * g);
                energy += s * p;
            }
            energy += config.object_rx_power_w - charge;
        }
    }
    Ok(rate - ee * energy)
}

#[derive(Clone, Copy)]
enum Mode<'c> {
    True,
    Transformed(&'c ScaCoefficients),
}

/// Slot state on one RB: `None` or `(local object index, power index)`.
type SlotState = Option<(usize, usize)>;
type VehicleState = [SlotState; MAX_RBS];

#[derive(Debug, Clone)]
struct Leaf {
    states: Vec<VehicleState>,
    /// Information-ratio index per vehicle and RB.
    splits: Vec<[usize; MAX_RBS]>,
    rate: f64,
    energy: f64,
}

/// Harvested power `fixed + var·(1 - ϖ)` and the rate over the split grid of
/// one link at given powers.
struct LinkView<'t> {
    rate: &'t [f64],
    fixed: f64,
    var: f64,
}

/// Per-object constraint and valuation rule.
struct ObjectRule {
    ee: f64,
    min_rate: f64,
    min_charge: f64,
    /// Harvesting beyond this is worth nothing.
    saturation: f64,
    /// Harvesting beyond this is infeasible.
    ceiling: f64,
}

struct Assessment {
    rate: f64,
    energy: f64,
    splits: [usize; MAX_RBS],
}

/// Enumeration of one interval. The objective of a vehicle depends on its
/// own slot states and, through interference, on the powers its rival uses
/// on each RB, so each Dinkelbach step tabulates every vehicle over
/// `(own state, rival power pattern)` and then pairs the tables.
struct Search<'a> {
    snapshot: &'a NetworkSnapshot,
    config: &'a ScenarioConfig,
    mode: Mode<'a>,
    powers: Vec<f64>,
    splits: Vec<f64>,
    itilde: Array2<f64>,
    n0w: f64,
    /// Active vehicles with objects.
    vehicles: Vec<usize>,
    /// Budget-feasible states of each vehicle.
    states: Vec<Vec<VehicleState>>,
    /// Power pattern each state presents to the rival.
    pattern: Vec<Vec<usize>>,
    /// Interference levels per RB seen by a link: `G + 1` (every grid power
    /// or silence) when a rival exists in the true problem, else 1.
    levels: usize,
    /// `rate[vehicle][object][rb]` over `[p][q][w]`, flattened.
    rate: Vec<Vec<Vec<Vec<f64>>>>,
}

impl<'a> Search<'a> {
    fn new(
        snapshot: &'a NetworkSnapshot,
        config: &'a ScenarioConfig,
        oc: &OracleConfig,
        mode: Mode<'a>,
    ) -> Self {
        let powers = oc.power_grid(config.vehicle_power_budget_w);
        let splits = oc.ps_grid();
        let b = snapshot.num_rbs();
        let vehicles: Vec<usize> = (0..snapshot.num_vehicles())
            .filter(|&i| snapshot.vehicle_active[i] && !snapshot.associations[i].is_empty())
            .collect();
        let levels = match mode {
            Mode::True if vehicles.len() > 1 => powers.len() + 1,
            _ => 1,
        };
        let budget = config.vehicle_power_budget_w * (1.0 + 1e-12);
        let mut states = Vec::with_capacity(vehicles.len());
        let mut pattern = Vec::with_capacity(vehicles.len());
        for &i in &vehicles {
            let mut options: Vec<SlotState> = vec![None];
            for ol in 0..snapshot.associations[i].len() {
                options.extend((0..powers.len()).map(|p| Some((ol, p))));
            }
            let mut list: Vec<VehicleState> = vec![[None; MAX_RBS]];
            for r in 0..b {
                list = list
                    .into_iter()
                    .flat_map(|st| {
                        options.iter().map(move |&opt| {
                            let mut next = st;
                            next[r] = opt;
                            next
                        })
                    })
                    .collect();
            }
            list.retain(|st| st.iter().flatten().map(|&(_, p)| powers[p]).sum::<f64>() <= budget);
            let pat = list
                .iter()
                .map(|st| {
                    if levels == 1 {
                        return 0;
                    }
                    (0..b).rev().fold(0, |acc, r| {
                        acc * levels + st[r].map_or(powers.len(), |(_, p)| p)
                    })
                })
                .collect();
            states.push(list);
            pattern.push(pat);
        }
        let mut search = Search {
            snapshot,
            config,
            mode,
            powers,
            splits,
            itilde: worst_case_interference(snapshot, config),
            n0w: config.thermal_noise_w(),
            vehicles,
            states,
            pattern,
            levels,
            rate: Vec::new(),
        };
        search.rate = (0..search.vehicles.len())
            .map(|v| search.rate_tables(v))
            .collect();
        search
    }

    fn rate_tables(&self, v: usize) -> Vec<Vec<Vec<f64>>> {
        let i = self.vehicles[v];
        let cfg = self.config;
        self.snapshot.associations[i]
            .iter()
            .map(|&o| {
                (0..self.snapshot.num_rbs())
                    .map(|r| {
                        let g = self.snapshot.gain(i, o, r);
                        let mut table =
                            Vec::with_capacity(self.powers.len() * self.levels * self.splits.len());
                        for &p in &self.powers {
                            for q in 0..self.levels {
                                let interference = self.interference(v, o, r, q);
                                for &w in &self.splits {
                                    let gamma = w * p * g
                                        / (cfg.processing_noise_w + w * (interference + self.n0w));
                                    table.push(match self.mode {
                                        Mode::True => cfg.bandwidth_hz * (1.0 + gamma).log2(),
                                        Mode::Transformed(c) => {
                                            cfg.bandwidth_hz
                                                * sca_bound(c.a[[i, o, r]], c.b[[i, o, r]], gamma)
                                        }
                                    });
                                }
                            }
                        }
                        table
                    })
                    .collect()
            })
            .collect()
    }

    fn rival(&self, v: usize) -> Option<usize> {
        (self.levels > 1).then(|| self.vehicles[1 - v])
    }

    /// Interference at `object` on `rb` when the rival radiates power index
    /// `q` there (`q = G` is silence).
    fn interference(&self, v: usize, object: usize, rb: usize, q: usize) -> f64 {
        match self.mode {
            Mode::Transformed(_) => self.itilde[[object, rb]],
            Mode::True => match self.rival(v) {
                Some(k) if q < self.powers.len() => {
                    self.powers[q] * self.snapshot.gain(k, object, rb)
                }
                _ => 0.0,
            },
        }
    }

    fn rule(&self, ee: f64) -> ObjectRule {
        let cfg = self.config;
        let (saturation, ceiling) = match self.mode {
            Mode::True => (cfg.object_rx_power_w, f64::INFINITY),
            Mode::Transformed(_) => (f64::INFINITY, cfg.object_rx_power_w),
        };
        ObjectRule {
            ee,
            min_rate: cfg.min_rate_bps,
            min_charge: cfg.min_charge_w,
            saturation,
            ceiling,
        }
    }

    /// Rate and energy (per second) of vehicle `v` in `state` facing rival
    /// `pattern`, with the best splits, or `None` if some object misses a
    /// floor.
    fn assess(
        &self,
        v: usize,
        state: &VehicleState,
        pattern: usize,
        rule: &ObjectRule,
    ) -> Option<Assessment> {
        let i = self.vehicles[v];
        let cfg = self.config;
        let b = self.snapshot.num_rbs();
        let gw = self.splits.len();
        let eta = cfg.conversion_efficiency;
        let mut out = Assessment {
            rate: 0.0,
            energy: cfg.static_vehicle_power_w,
            splits: [0; MAX_RBS],
        };
        for (ol, &o) in self.snapshot.associations[i].iter().enumerate() {
            let mut rbs = [0; MAX_RBS];
            let mut views: [Option<LinkView>; MAX_RBS] = [None, None];
            let mut k = 0;
            for r in 0..b {
                let Some((oo, p)) = state[r] else {
                    continue;
                };
                if oo != ol {
                    continue;
                }
                let q = (pattern / self.levels.pow(r as u32)) % self.levels;
                let start = (p * self.levels + q) * gw;
                let signal = self.powers[p] * self.snapshot.gain(i, o, r);
                let (fixed, var) = match self.mode {
                    Mode::True => (
                        0.0,
                        eta * (signal + self.interference(v, o, r, q) + self.n0w),
                    ),
                    Mode::Transformed(_) => (eta * signal, eta * (self.itilde[[o, r]] + self.n0w)),
                };
                views[k] = Some(LinkView {
                    rate: &self.rate[v][ol][r][start..start + gw],
                    fixed,
                    var,
                });
                rbs[k] = r;
                out.energy += self.powers[p];
                k += 1;
            }
            let (rate, charge, ws) = match (&views[0], &views[1]) {
                (None, _) => best_splits(&[], rule)?,
                (Some(a), None) => best_splits(&[a], rule)?,
                (Some(a), Some(c)) => best_splits(&[a, c], rule)?,
            };
            for (slot, &r) in rbs.iter().take(k).enumerate() {
                out.splits[r] = ws[slot];
            }
            out.rate += rate;
            out.energy += match self.mode {
                Mode::True => (cfg.object_rx_power_w - charge).max(0.0),
                Mode::Transformed(_) => cfg.object_rx_power_w - charge,
            };
        }
        Some(out)
    }

    /// `R - Λ·E` per state and rival pattern, `-∞` when infeasible.
    fn table(&self, v: usize, rule: &ObjectRule) -> Vec<f64> {
        let patterns = self.levels.pow(self.snapshot.num_rbs() as u32);
        let mut out = Vec::with_capacity(self.states[v].len() * patterns);
        for st in &self.states[v] {
            for pat in 0..patterns {
                out.push(
                    self.assess(v, st, pat, rule)
                        .map_or(f64::NEG_INFINITY, |a| a.rate - rule.ee * a.energy),
                );
            }
        }
        out
    }

    /// Highest-value leaf of `R - Λ·E` (per second), or `None` if nothing
    /// is feasible.
    fn best(&self, ee: f64) -> Option<Leaf> {
        let rule = self.rule(ee);
        let choice: Vec<usize> = match self.vehicles.len() {
            0 => Vec::new(),
            1 => {
                let t = self.table(0, &rule);
                let k = argmax(t.iter().copied())?;
                vec![k]
            }
            _ => {
                let t0 = self.table(0, &rule);
                let t1 = self.table(1, &rule);
                let patterns = self.levels.pow(self.snapshot.num_rbs() as u32);
                let (t0, t1) = (&t0, &t1);
                let (p0, p1) = (&self.pattern[0], &self.pattern[1]);
                let n1 = self.states[1].len();
                let k = argmax((0..self.states[0].len()).flat_map(|a| {
                    (0..n1).map(move |b| t0[a * patterns + p1[b]] + t1[b * patterns + p0[a]])
                }))?;
                vec![k / n1, k % n1]
            }
        };
        let mut leaf = Leaf {
            states: Vec::with_capacity(choice.len()),
            splits: Vec::with_capacity(choice.len()),
            rate: 0.0,
            energy: 0.0,
        };
        for (v, &k) in choice.iter().enumerate() {
            let pattern = if self.levels > 1 {
                self.pattern[1 - v][choice[1 - v]]
            } else {
                0
            };
            let st = self.states[v][k];
            let a = self
                .assess(v, &st, pattern, &rule)
                .expect("feasible choice");
            leaf.states.push(st);
            leaf.splits.push(a.splits);
            leaf.rate += a.rate;
            leaf.energy += a.energy;
        }
        Some(leaf)
    }

    fn policy(&self, leaf: &Leaf) -> IntervalPolicy {
        let mut p = IntervalPolicy::empty(self.snapshot.shape());
        for (v, st) in leaf.states.iter().enumerate() {
            let i = self.vehicles[v];
            for (r, slot) in st.iter().enumerate().take(self.snapshot.num_rbs()) {
                if let Some((ol, pi)) = *slot {
                    let o = self.snapshot.associations[i][ol];
                    p.assignment[[i, o, r]] = 1.0;
                    p.power[[i, o, r]] = self.powers[pi];
                    p.set_split(i, o, r, self.splits[leaf.splits[v][r]]);
                }
            }
        }
        p
    }

    /// Policies one grid step away from `leaf`, grouped by the power or split
    /// index that moved.
    fn neighbours(&self, leaf: &Leaf) -> Vec<Vec<IntervalPolicy>> {
        let mut out = Vec::new();
        let (gp, gw) = (self.powers.len() as isize, self.splits.len() as isize);
        for (v, st) in leaf.states.iter().enumerate() {
            for r in 0..self.snapshot.num_rbs() {
                let Some((ol, p)) = st[r] else {
                    continue;
                };
                let mut powers = Vec::new();
                let mut splits = Vec::new();
                for d in [-1isize, 1] {
                    let np = p as isize + d;
                    if (0..gp).contains(&np) {
                        let mut l = leaf.clone();
                        l.states[v][r] = Some((ol, np as usize));
                        powers.push(self.policy(&l));
                    }
                    let nw = leaf.splits[v][r] as isize + d;
                    if (0..gw).contains(&nw) {
                        let mut l = leaf.clone();
                        l.splits[v][r] = nw as usize;
                        splits.push(self.policy(&l));
                    }
                }
                out.push(powers);
                out.push(splits);
            }
        }
        out
    }
}

/// Index of the largest finite value; the first one on ties.
fn argmax(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, v) in values.enumerate() {
        if v > f64::NEG_INFINITY && best.is_none_or(|(_, b)| v > b) {
            best = Some((k, v));
        }
    }
    best.map(|(k, _)| k)
}

/// Best split indices of one object's links: maximizes
/// `Σ rate + Λ·min(C, saturation)` subject to the rate and charging floors
/// and the charging ceiling. Returns `(rate, charge, indices)`.
fn best_splits(links: &[&LinkView], rule: &ObjectRule) -> Option<(f64, f64, [usize; MAX_RBS])> {
    match links {
        [] => (rule.min_rate <= 0.0 && rule.min_charge <= 0.0 && 0.0 <= rule.ceiling).then_some((
            0.0,
            0.0,
            [0; MAX_RBS],
        )),
        [only] => {
            let (w, _) = best_second(0.0, 0.0, only, rule)?;
            Some((only.rate[w], charge_at(only, w), [w, 0]))
        }
        [first, second] => {
            let mut best: Option<(f64, usize, usize)> = None;
            for w0 in 0..first.rate.len() {
                let (r0, c0) = (first.rate[w0], charge_at(first, w0));
                if let Some((w1, v)) = best_second(r0, c0, second, rule) {
                    if best.is_none_or(|(b, _, _)| v > b) {
                        best = Some((v, w0, w1));
                    }
                }
            }
            let (_, w0, w1) = best?;
            Some((
                first.rate[w0] + second.rate[w1],
                charge_at(first, w0) + charge_at(second, w1),
                [w0, w1],
            ))
        }
        _ => unreachable!("at most two resource blocks"),
    }
}

fn charge_at(link: &LinkView, w: usize) -> f64 {
    // the split grid is k / (n + 1)
    let n = link.rate.len();
    let info = (w + 1) as f64 / (n + 1) as f64;
    link.fixed + link.var * (1.0 - info)
}

/// Best index on `link` given the rate and charge already contributed by
/// the object's other links, with the object's value.
fn best_second(
    base_rate: f64,
    base_charge: f64,
    link: &LinkView,
    rule: &ObjectRule,
) -> Option<(usize, f64)> {
    let n = link.rate.len();
    // rate grows and charge falls with the index
    let lo_rate = link
        .rate
        .partition_point(|&r| base_rate + r < rule.min_rate);
    let lo_ceiling = partition(n, |w| base_charge + charge_at(link, w) > rule.ceiling);
    let hi = partition(n, |w| base_charge + charge_at(link, w) >= rule.min_charge);
    let lo = lo_rate.max(lo_ceiling);
    if lo >= hi {
        return None;
    }
    let value = |w: usize| {
        base_rate + link.rate[w] + rule.ee * (base_charge + charge_at(link, w)).min(rule.saturation)
    };
    // the value is concave in the index: find the first non-ascending step
    let (mut a, mut b) = (lo, hi - 1);
    while a < b {
        let mid = (a + b) / 2;
        if value(mid + 1) > value(mid) {
            a = mid + 1;
        } else {
            b = mid;
        }
    }
    Some((a, value(a)))
}

/// First index in `0..n` where `pred` turns false; `pred` must be true on a
/// prefix.
fn partition(n: usize, pred: impl Fn(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (0, n);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if pred(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

/// One line of an oracle-versus-solver comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub seed: u64,
    pub oracle_ee: Option<f64>,
    pub solver_ee: Option<f64>,
    /// `(oracle - solver) / oracle`.
    pub gap: Option<f64>,
    pub grid_slack: Option<f64>,
    pub solver_status: String,
}

pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "seed",
        "oracle_ee",
        "solver_ee",
        "gap",
        "grid_slack",
        "solver_status",
    ])?;
    let fmt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.12e}"));
    for r in rows {
        w.write_record([
            r.seed.to_string(),
            fmt(r.oracle_ee),
            fmt(r.solver_ee),
            fmt(r.gap),
            fmt(r.grid_slack),
            r.solver_status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the solver and [`oracle_max_ee`] on `config` with each seed.
pub fn compare_with_solver(
    config: &ScenarioConfig,
    seeds: &[u64],
    oc: &OracleConfig,
    opts: &crate::solver::SolverConfig,
) -> Result<Vec<ComparisonRow>> {
    let mut rows = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let cfg = ScenarioConfig {
            rng_seed: seed,
            ..config.clone()
        };
        let snaps = crate::scenario::generate(&cfg)?;
        let oracle = oracle_max_ee(&snaps, &cfg, oc)?;
        let report = crate::solver::solve(&snaps, &cfg, opts)?;
        let solver_ee = (report.status != crate::solver::SolveStatus::Infeasible)
            .then_some(report.metrics.energy_efficiency);
        let oracle_ee = oracle.as_ref().map(|o| o.value);
        rows.push(ComparisonRow {
            seed,
            oracle_ee,
            solver_ee,
            gap: oracle_ee.zip(solver_ee).map(|(o, s)| (o - s) / o),
            grid_slack: oracle.as_ref().map(|o| o.grid_slack),
            solver_status: report.status.as_str().to_string(),
        });
    }
    Ok(rows)
}
