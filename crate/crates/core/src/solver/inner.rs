//! One interval of the surrogate problem at fixed `Λ` and SCA coefficients:
//! the dual loop, the primal repair that makes its output feasible, and the
//! phase-1 feasibility probe.

use std::f64::consts::LN_2;

use ndarray::{Array1, Array2, Array3};

use super::closed_form::{assign_resource_blocks, LinkDuals, LinkTerms};
use super::dual::{subgradient_step, DualScales, DualState, Slacks};
use super::SolverConfig;
use crate::approx::{worst_case_interference, ScaCoefficients};
use crate::error::Result;
use crate::metrics::{ceiling_scale, charge_scale, rate_scale, IntervalPolicy};
use crate::scenario::{NetworkSnapshot, ScenarioConfig};

/// Fixed data of one interval's subproblem.
#[derive(Debug, Clone)]
pub struct IntervalProblem<'a> {
    pub snapshot: &'a NetworkSnapshot,
    pub config: &'a ScenarioConfig,
    /// Tolerable interference per `[object, rb]`.
    pub itilde: Array2<f64>,
    /// Best own-vehicle gain of each served object.
    pub best_gain: Array1<f64>,
}

/// Closed-form primal point for every served link, before binarization
/// side effects and repair.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidates {
    pub power: Array3<f64>,
    /// Unclamped closed-form information ratio in `[0, 1]`.
    pub info: Array3<f64>,
    pub assignment: Array3<f64>,
}

#[derive(Debug, Clone)]
pub struct InnerOutcome {
    pub policy: IntervalPolicy,
    pub candidates: Candidates,
    pub dual: DualState,
    pub iterations: usize,
    pub converged: bool,
    /// Vehicles whose repaired point could not be made feasible and that
    /// fell back to the phase-1 policy.
    pub fallback_vehicles: Vec<usize>,
}

impl<'a> IntervalProblem<'a> {
    pub fn new(snapshot: &'a NetworkSnapshot, config: &'a ScenarioConfig) -> Result<Self> {
        snapshot.ensure_realized()?;
        let itilde = worst_case_interference(snapshot, config);
        let mut best_gain = Array1::zeros(snapshot.num_objects());
        for (i, o) in snapshot.served_pairs() {
            best_gain[o] = (0..snapshot.num_rbs())
                .map(|r| snapshot.gain(i, o, r))
                .fold(0.0, f64::max);
        }
        Ok(Self {
            snapshot,
            config,
            itilde,
            best_gain,
        })
    }

    fn shape(&self) -> (usize, usize, usize) {
        self.snapshot.shape()
    }

    fn requires_service(&self) -> bool {
        self.config.min_rate_bps > 0.0 || self.config.min_charge_w > 0.0
    }

    pub fn link_terms(
        &self,
        coeffs: Option<&ScaCoefficients>,
        (i, o, r): (usize, usize, usize),
    ) -> LinkTerms {
        let (a, b) = coeffs.map_or((1.0, 0.0), |c| (c.a[[i, o, r]], c.b[[i, o, r]]));
        LinkTerms {
            a,
            b,
            gain: self.snapshot.gain(i, o, r),
            ambient_w: self.itilde[[o, r]] + self.config.thermal_noise_w(),
            processing_noise_w: self.config.processing_noise_w,
            bandwidth_hz: self.config.bandwidth_hz,
            efficiency: self.config.conversion_efficiency,
            power_cap_w: self.config.vehicle_power_budget_w,
        }
    }

    pub fn link_duals(dual: &DualState, (i, o, r): (usize, usize, usize)) -> LinkDuals {
        LinkDuals {
            beta: dual.beta[o],
            delta: dual.delta[[i, o, r]],
            tau: dual.tau[[i, r]],
            theta: dual.theta[o],
            lambda: dual.lambda[i],
            pi: dual.pi[o],
        }
    }

    /// Step scales of each multiplier family at efficiency `ee`.
    pub fn scales(&self, ee: f64) -> DualScales {
        let cfg = self.config;
        let budget = ee + cfg.bandwidth_hz / cfg.vehicle_power_budget_w;
        DualScales {
            bandwidth: cfg.bandwidth_hz,
            budget,
            charge: self
                .best_gain
                .mapv(|g| if g > 0.0 { budget / g } else { 0.0 }),
        }
    }

    fn price_floor(&self, opts: &SolverConfig) -> f64 {
        opts.price_floor * self.config.bandwidth_hz / self.config.vehicle_power_budget_w
    }

    /// Closed-form split and power on every served link followed by the
    /// marginal-benefit assignment. An RB whose winner has zero power stays
    /// unused.
    pub fn primal_step(
        &self,
        ee: f64,
        coeffs: &ScaCoefficients,
        dual: &DualState,
        opts: &SolverConfig,
    ) -> Result<Candidates> {
        let shape = self.shape();
        let mut power = Array3::zeros(shape);
        let mut info = Array3::zeros(shape);
        let mut assignment = Array3::zeros(shape);
        let floor = self.price_floor(opts);
        for (i, objs) in self.snapshot.associations.iter().enumerate() {
            if !self.snapshot.vehicle_active[i] || objs.is_empty() {
                continue;
            }
            for r in 0..shape.2 {
                let mut benefits = Vec::with_capacity(objs.len());
                for &o in objs {
                    let terms = self.link_terms(Some(coeffs), (i, o, r));
                    let duals = Self::link_duals(dual, (i, o, r));
                    let w = terms.ps_ratio(&duals);
                    let p = terms.power(&duals, ee, floor);
                    info[[i, o, r]] = w;
                    power[[i, o, r]] = p;
                    let w_eff = w.clamp(opts.ps_floor, 1.0 - opts.ps_floor);
                    benefits.push(terms.marginal_benefit(&duals, ee, w_eff, p));
                }
                let k = assign_resource_blocks(i, r, &benefits)?;
                if power[[i, objs[k], r]] > 0.0 {
                    assignment[[i, objs[k], r]] = 1.0;
                }
            }
        }
        Ok(Candidates {
            power,
            info,
            assignment,
        })
    }

    /// Normalized slacks of the surrogate constraints at a candidate point.
    fn slacks(&self, coeffs: &ScaCoefficients, cand: &Candidates, opts: &SolverConfig) -> Slacks {
        let cfg = self.config;
        let (n, m, b) = self.shape();
        let mut s = Slacks {
            rate: Array1::zeros(m),
            split: Array3::zeros((n, m, b)),
            exclusive: Array2::zeros((n, b)),
            charge_floor: Array1::zeros(m),
            budget: Array1::zeros(n),
            charge_ceiling: Array1::zeros(m),
        };
        for (i, objs) in self.snapshot.associations.iter().enumerate() {
            if !self.snapshot.vehicle_active[i] || objs.is_empty() {
                continue;
            }
            let mut spend = 0.0;
            for &o in objs {
                let mut rate = 0.0;
                let mut charge = 0.0;
                for r in 0..b {
                    if cand.assignment[[i, o, r]] == 0.0 {
                        continue;
                    }
                    let terms = self.link_terms(Some(coeffs), (i, o, r));
                    let w = cand.info[[i, o, r]].clamp(opts.ps_floor, 1.0 - opts.ps_floor);
                    let p = cand.power[[i, o, r]];
                    rate += terms.bounded_rate(w, p);
                    charge += terms.efficiency * ((1.0 - w) * terms.ambient_w + p * terms.gain);
                    spend += p;
                }
                // clipped so a tiny floor does not blow up the step
                s.rate[o] = ((rate - cfg.min_rate_bps) / rate_scale(cfg)).clamp(-1.0, 1.0);
                s.charge_floor[o] =
                    ((charge - cfg.min_charge_w) / charge_scale(cfg)).clamp(-1.0, 1.0);
                s.charge_ceiling[o] =
                    ((cfg.object_rx_power_w - charge) / ceiling_scale(cfg)).clamp(-1.0, 1.0);
            }
            s.budget[i] = (cfg.vehicle_power_budget_w - spend) / cfg.vehicle_power_budget_w;
            for r in 0..b {
                let used: f64 = objs.iter().map(|&o| cand.assignment[[i, o, r]]).sum();
                s.exclusive[[i, r]] = 1.0 - used;
            }
        }
        s
    }

    /// Runs the dual loop from `dual`, then repairs the final primal point.
    pub fn inner_dual_solve(
        &self,
        ee: f64,
        coeffs: &ScaCoefficients,
        dual: DualState,
        fallback: &IntervalPolicy,
        opts: &SolverConfig,
    ) -> Result<InnerOutcome> {
        let scales = self.scales(ee);
        let mut dual = dual;
        let mut converged = false;
        let mut iterations = 0;
        while iterations < opts.max_dual {
            iterations += 1;
            let cand = self.primal_step(ee, coeffs, &dual, opts)?;
            let slacks = self.slacks(coeffs, &cand, opts);
            let next = subgradient_step(&dual, &slacks, &scales, opts.paper_signs);
            let change = next.normalized_change(&dual, &scales);
            dual = next;
            if change < opts.tol_dual {
                converged = true;
                break;
            }
        }
        let mut cand = self.primal_step(ee, coeffs, &dual, opts)?;
        let mut policy = IntervalPolicy::empty(self.shape());
        let mut fallback_vehicles = Vec::new();
        for i in 0..self.snapshot.num_vehicles() {
            if !self.repair_vehicle(i, Some(ee), &mut cand, &mut policy, opts) {
                copy_vehicle(fallback, &mut policy, self.snapshot, i);
                fallback_vehicles.push(i);
            }
        }
        Ok(InnerOutcome {
            policy,
            candidates: cand,
            dual,
            iterations,
            converged,
            fallback_vehicles,
        })
    }

    /// Turns the candidate point of vehicle `i` into a feasible policy:
    /// give every object with a requirement an RB, raise each object's power
    /// to the least scale meeting its rate and charging floors, respect the
    /// charging ceiling and the transmit budget, then fix the split ratios.
    /// With `ee` given, each object's scale and splits maximize its share of
    /// the Dinkelbach objective instead of following the candidate.
    /// Returns false when no such point exists along this path.
    pub fn repair_vehicle(
        &self,
        i: usize,
        ee: Option<f64>,
        cand: &mut Candidates,
        policy: &mut IntervalPolicy,
        opts: &SolverConfig,
    ) -> bool {
        let snap = self.snapshot;
        let cfg = self.config;
        let objs = &snap.associations[i];
        if !snap.vehicle_active[i] || objs.is_empty() {
            return true;
        }
        let b = snap.num_rbs();
        if self.requires_service() && !self.cover_objects(i, cand) {
            return false;
        }

        struct Plan {
            object: usize,
            rbs: Vec<usize>,
            base: Vec<f64>,
            lo: f64,
            scale: f64,
        }
        let mut plans = Vec::new();
        for &o in objs {
            let rbs: Vec<usize> = (0..b)
                .filter(|&r| cand.assignment[[i, o, r]] > 0.0)
                .collect();
            if rbs.is_empty() {
                continue;
            }
            let mut base: Vec<f64> = rbs.iter().map(|&r| cand.power[[i, o, r]]).collect();
            if base.iter().sum::<f64>() <= 0.0 {
                base.iter_mut().for_each(|p| *p = 1.0);
            }
            let s_budget = cfg.vehicle_power_budget_w / base.iter().sum::<f64>();
            let met = |s: f64| self.object_meets_floors(i, o, &rbs, &base, s, cand, opts);
            let lo = if met(0.0) {
                0.0
            } else if !met(s_budget) {
                return false;
            } else {
                let (mut lo, mut hi) = (0.0, s_budget);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if met(mid) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                    if hi - lo <= 1e-14 * hi {
                        break;
                    }
                }
                hi
            };
            // charging ceiling, conservatively with the whole signal harvested
            let eta = cfg.conversion_efficiency;
            let ambient: f64 = rbs
                .iter()
                .map(|&r| self.itilde[[o, r]] + cfg.thermal_noise_w())
                .sum();
            let desired: f64 = rbs
                .iter()
                .zip(&base)
                .map(|(&r, p)| p * snap.gain(i, o, r))
                .sum();
            let s_ceiling = if desired > 0.0 {
                (cfg.object_rx_power_w / eta - ambient) / desired
            } else {
                f64::INFINITY
            };
            let scale = match ee {
                _ if s_ceiling < lo => lo,
                None => lo.max(s_ceiling.min(1.0)),
                Some(ee) => {
                    self.best_scale(i, o, &rbs, &base, lo, s_ceiling.min(s_budget), ee, opts)
                }
            };
            plans.push(Plan {
                object: o,
                rbs,
                base,
                lo,
                scale,
            });
        }

        let total: f64 = plans
            .iter()
            .map(|p| p.scale * p.base.iter().sum::<f64>())
            .sum();
        let floor_total: f64 = plans
            .iter()
            .map(|p| p.lo * p.base.iter().sum::<f64>())
            .sum();
        let budget = cfg.vehicle_power_budget_w;
        if floor_total > budget * (1.0 + 1e-12) {
            return false;
        }
        let shrink = if total > budget {
            (budget - floor_total) / (total - floor_total)
        } else {
            1.0
        };

        for o in objs {
            for r in 0..b {
                policy.power[[i, *o, r]] = 0.0;
                policy.assignment[[i, *o, r]] = 0.0;
                policy.set_split(i, *o, r, 0.5);
            }
        }
        for plan in &plans {
            let s = plan.lo + (plan.scale - plan.lo) * shrink.clamp(0.0, 1.0);
            let powers: Vec<f64> = plan.base.iter().map(|p| p * s).collect();
            let infos = match ee {
                Some(ee) => {
                    self.object_value(i, plan.object, &plan.rbs, &powers, ee, opts)
                        .1
                }
                None => self.final_splits(i, plan.object, &plan.rbs, &powers, cand, opts),
            };
            for ((&r, p), w) in plan.rbs.iter().zip(&powers).zip(&infos) {
                policy.assignment[[i, plan.object, r]] = 1.0;
                policy.power[[i, plan.object, r]] = *p;
                policy.set_split(i, plan.object, r, *w);
            }
            if !self.object_ceiling_ok(i, plan.object, &plan.rbs, &powers, &infos) {
                return false;
            }
        }
        // the budget projection can only have lowered powers; floors hold at
        // the new point because they are monotone in the scale
        true
    }

    /// Gives an RB to every object lacking one, taking it from an unused RB
    /// or from an object holding several. Returns false if impossible.
    fn cover_objects(&self, i: usize, cand: &mut Candidates) -> bool {
        let snap = self.snapshot;
        let objs = &snap.associations[i];
        let b = snap.num_rbs();
        for &o in objs {
            let has = (0..b).any(|r| cand.assignment[[i, o, r]] > 0.0);
            if has {
                continue;
            }
            let owner = |r: usize| {
                objs.iter()
                    .copied()
                    .find(|&x| cand.assignment[[i, x, r]] > 0.0)
            };
            let count = |x: usize| (0..b).filter(|&r| cand.assignment[[i, x, r]] > 0.0).count();
            let donor = (0..b)
                .filter(|&r| owner(r).is_none_or(|x| count(x) >= 2))
                .max_by(|&r1, &r2| {
                    snap.gain(i, o, r1)
                        .total_cmp(&snap.gain(i, o, r2))
                        .then(r2.cmp(&r1))
                });
            let Some(r) = donor else {
                return false;
            };
            if let Some(x) = owner(r) {
                cand.assignment[[i, x, r]] = 0.0;
            }
            cand.assignment[[i, o, r]] = 1.0;
            if !(cand.power[[i, o, r]] > 0.0) {
                cand.power[[i, o, r]] = self.config.vehicle_power_budget_w / b as f64;
            }
        }
        true
    }

    /// Energy ratio needed on every RB of the object so that the charging
    /// floor holds even without interference.
    fn required_energy_ratio(&self, i: usize, o: usize, rbs: &[usize], powers: &[f64]) -> f64 {
        let cfg = self.config;
        if cfg.min_charge_w <= 0.0 {
            return 0.0;
        }
        let x: f64 = rbs
            .iter()
            .zip(powers)
            .map(|(&r, p)| cfg.thermal_noise_w() + p * self.snapshot.gain(i, o, r))
            .sum();
        if x > 0.0 {
            cfg.min_charge_w / (cfg.conversion_efficiency * x)
        } else {
            f64::INFINITY
        }
    }

    /// Scale in `[lo, hi]` maximizing the object's objective share: a coarse
    /// grid, then golden section around the best grid point.
    #[allow(clippy::too_many_arguments)]
    fn best_scale(
        &self,
        i: usize,
        o: usize,
        rbs: &[usize],
        base: &[f64],
        lo: f64,
        hi: f64,
        ee: f64,
        opts: &SolverConfig,
    ) -> f64 {
        const GRID: usize = 24;
        if !(hi > lo) {
            return lo;
        }
        let value = |s: f64| {
            let powers: Vec<f64> = base.iter().map(|p| p * s).collect();
            self.object_value(i, o, rbs, &powers, ee, opts).0
        };
        let step = (hi - lo) / GRID as f64;
        let mut best = (lo, value(lo));
        let mut k_best = 0;
        for k in 1..=GRID {
            let s = if k == GRID { hi } else { lo + step * k as f64 };
            let v = value(s);
            if v > best.1 {
                best = (s, v);
                k_best = k;
            }
        }
        let a = lo + step * k_best.saturating_sub(1) as f64;
        let b = (lo + step * (k_best + 1) as f64).min(hi);
        let s = golden_max(a, b, value);
        if value(s) > best.1 {
            s
        } else {
            best.0
        }
    }

    /// Objective share of an object at the given powers, `Σ W·log2(1+γ̃)`
    /// minus `Λ` times transmit power net of harvest, with each split chosen
    /// optimally above the charging floor. Returns the value and the splits.
    fn object_value(
        &self,
        i: usize,
        o: usize,
        rbs: &[usize],
        powers: &[f64],
        ee: f64,
        opts: &SolverConfig,
    ) -> (f64, Vec<f64>) {
        let cfg = self.config;
        let req = self.required_energy_ratio(i, o, rbs, powers);
        let w_hi = (1.0 - req).min(1.0 - opts.ps_floor);
        let mut total = 0.0;
        let mut rate = 0.0;
        let mut infos = Vec::with_capacity(rbs.len());
        for (&r, &p) in rbs.iter().zip(powers) {
            let terms = self.link_terms(None, (i, o, r));
            let income = cfg.conversion_efficiency * (terms.ambient_w + p * terms.gain);
            let f = |w: f64| {
                cfg.bandwidth_hz * terms.bounded_sinr(w, p).ln_1p() / LN_2 - ee * w * income
            };
            let w = if w_hi > opts.ps_floor {
                golden_max(opts.ps_floor, w_hi, f)
            } else {
                opts.ps_floor
            };
            total += f(w) + ee * income - ee * p;
            rate += cfg.bandwidth_hz * terms.bounded_sinr(w, p).ln_1p() / LN_2;
            infos.push(w);
        }
        if rate < cfg.min_rate_bps && w_hi > opts.ps_floor {
            // harvesting cost the rate floor: serve it first
            total = 0.0;
            infos.iter_mut().for_each(|w| *w = w_hi);
            for (&r, &p) in rbs.iter().zip(powers) {
                let terms = self.link_terms(None, (i, o, r));
                let income = cfg.conversion_efficiency * (terms.ambient_w + p * terms.gain);
                total += cfg.bandwidth_hz * terms.bounded_sinr(w_hi, p).ln_1p() / LN_2
                    + ee * (1.0 - w_hi) * income
                    - ee * p;
            }
        }
        (total, infos)
    }

    fn final_splits(
        &self,
        i: usize,
        o: usize,
        rbs: &[usize],
        powers: &[f64],
        cand: &Candidates,
        opts: &SolverConfig,
    ) -> Vec<f64> {
        let req = self.required_energy_ratio(i, o, rbs, powers);
        rbs.iter()
            .map(|&r| {
                cand.info[[i, o, r]]
                    .min(1.0 - req)
                    .clamp(opts.ps_floor, 1.0 - opts.ps_floor)
            })
            .collect()
    }

    /// Conservative charging floor and exact surrogate rate floor at scale `s`.
    #[allow(clippy::too_many_arguments)]
    fn object_meets_floors(
        &self,
        i: usize,
        o: usize,
        rbs: &[usize],
        base: &[f64],
        s: f64,
        cand: &Candidates,
        opts: &SolverConfig,
    ) -> bool {
        let cfg = self.config;
        let powers: Vec<f64> = base.iter().map(|p| p * s).collect();
        let req = self.required_energy_ratio(i, o, rbs, &powers);
        if req > 1.0 - opts.ps_floor {
            return false;
        }
        if cfg.min_rate_bps <= 0.0 {
            return true;
        }
        let infos = self.final_splits(i, o, rbs, &powers, cand, opts);
        let rate: f64 = rbs
            .iter()
            .zip(&powers)
            .zip(&infos)
            .map(|((&r, &p), &w)| {
                let terms = self.link_terms(None, (i, o, r));
                cfg.bandwidth_hz * (1.0 + terms.bounded_sinr(w, p)).log2()
            })
            .sum();
        rate >= cfg.min_rate_bps
    }

    fn object_ceiling_ok(
        &self,
        i: usize,
        o: usize,
        rbs: &[usize],
        powers: &[f64],
        infos: &[f64],
    ) -> bool {
        let cfg = self.config;
        let c: f64 = rbs
            .iter()
            .zip(powers)
            .zip(infos)
            .map(|((&r, p), w)| {
                let ambient = self.itilde[[o, r]] + cfg.thermal_noise_w();
                cfg.conversion_efficiency * ((1.0 - w) * ambient + p * self.snapshot.gain(i, o, r))
            })
            .sum();
        c <= cfg.object_rx_power_w
    }

    /// Phase-1 probe: the whole budget split evenly over best-gain links and
    /// the split ratio of each object balancing its rate and charging slacks.
    /// Returns the probe policy and its smallest normalized slack.
    pub fn feasibility_probe(&self, opts: &SolverConfig) -> (IntervalPolicy, f64) {
        let snap = self.snapshot;
        let cfg = self.config;
        let b = snap.num_rbs();
        let mut policy = IntervalPolicy::empty(self.shape());
        let mut worst = f64::INFINITY;
        for (i, objs) in snap.associations.iter().enumerate() {
            if !snap.vehicle_active[i] || objs.is_empty() {
                continue;
            }
            let mut owner: Vec<Option<usize>> = vec![None; b];
            // the weakest object picks first, so one good RB is not spent on
            // an object that would do fine elsewhere
            let mut waiting: Vec<usize> = objs.clone();
            while !waiting.is_empty() {
                let best_free = |o: usize| {
                    (0..b).filter(|&r| owner[r].is_none()).max_by(|&r1, &r2| {
                        snap.gain(i, o, r1)
                            .total_cmp(&snap.gain(i, o, r2))
                            .then(r2.cmp(&r1))
                    })
                };
                let Some(k) = (0..waiting.len())
                    .filter_map(|k| best_free(waiting[k]).map(|r| (k, snap.gain(i, waiting[k], r))))
                    .min_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)))
                    .map(|(k, _)| k)
                else {
                    break;
                };
                let o = waiting.remove(k);
                if let Some(r) = best_free(o) {
                    owner[r] = Some(o);
                }
            }
            for r in 0..b {
                if owner[r].is_none() {
                    owner[r] = objs.iter().copied().max_by(|&x, &y| {
                        snap.gain(i, x, r)
                            .total_cmp(&snap.gain(i, y, r))
                            .then(y.cmp(&x))
                    });
                }
            }
            let links = owner.iter().filter(|x| x.is_some()).count().max(1);
            let p = cfg.vehicle_power_budget_w / links as f64;
            for (r, o) in owner.iter().enumerate() {
                if let Some(o) = *o {
                    policy.assignment[[i, o, r]] = 1.0;
                    policy.power[[i, o, r]] = p;
                }
            }
            for &o in objs {
                let rbs: Vec<usize> = (0..b).filter(|&r| owner[r] == Some(o)).collect();
                let slack = |w: f64| self.probe_slacks(i, o, &rbs, p, w);
                // rate slack grows with w, charging slack shrinks: bisect on the difference
                let (mut lo, mut hi) = (opts.ps_floor, 1.0 - opts.ps_floor);
                let best_w = if rbs.is_empty() {
                    0.5
                } else {
                    let diff = |w: f64| {
                        let (r, c) = slack(w);
                        r - c
                    };
                    if diff(lo) >= 0.0 {
                        lo
                    } else if diff(hi) <= 0.0 {
                        hi
                    } else {
                        for _ in 0..100 {
                            let mid = 0.5 * (lo + hi);
                            if diff(mid) < 0.0 {
                                lo = mid;
                            } else {
                                hi = mid;
                            }
                        }
                        lo
                    }
                };
                for &r in &rbs {
                    policy.set_split(i, o, r, best_w);
                }
                let (rs, cs) = slack(best_w);
                worst = worst.min(rs.min(cs));
            }
        }
        (policy, worst)
    }

    fn probe_slacks(&self, i: usize, o: usize, rbs: &[usize], p: f64, w: f64) -> (f64, f64) {
        let cfg = self.config;
        let mut rate = 0.0;
        let mut charge = 0.0;
        for &r in rbs {
            let terms = self.link_terms(None, (i, o, r));
            rate += cfg.bandwidth_hz * (1.0 + terms.bounded_sinr(w, p)).log2();
            charge +=
                cfg.conversion_efficiency * (1.0 - w) * (cfg.thermal_noise_w() + p * terms.gain);
        }
        (
            (rate - cfg.min_rate_bps) / rate_scale(cfg),
            (charge - cfg.min_charge_w) / charge_scale(cfg),
        )
    }

    /// The probe point pushed through the repair, used whenever the repair of
    /// a dual solution fails. `None` when even that is infeasible.
    pub fn fallback_policy(
        &self,
        probe: &IntervalPolicy,
        opts: &SolverConfig,
    ) -> Option<IntervalPolicy> {
        let mut cand = Candidates {
            power: probe.power.clone(),
            info: Array3::from_elem(self.shape(), 1.0),
            assignment: probe.assignment.clone(),
        };
        let mut policy = IntervalPolicy::empty(self.shape());
        for i in 0..self.snapshot.num_vehicles() {
            if !self.repair_vehicle(i, None, &mut cand, &mut policy, opts) {
                return None;
            }
        }
        Some(policy)
    }

    /// SINR at which to expand the next SCA bound: the policy's own point on
    /// assigned links, the closed-form candidate elsewhere.
    pub fn expansion_sinr(
        &self,
        policy: &IntervalPolicy,
        cand: &Candidates,
        opts: &SolverConfig,
    ) -> Array3<f64> {
        let mut gamma = Array3::from_elem(self.shape(), 1.0);
        for (i, o) in self.snapshot.served_pairs() {
            for r in 0..self.snapshot.num_rbs() {
                let terms = self.link_terms(None, (i, o, r));
                let g = if policy.assignment[[i, o, r]] > 0.0 {
                    terms.bounded_sinr(policy.ps_info[[i, o, r]], policy.power[[i, o, r]])
                } else {
                    let w = cand.info[[i, o, r]].clamp(opts.ps_floor, 1.0 - opts.ps_floor);
                    terms.bounded_sinr(w, cand.power[[i, o, r]])
                };
                gamma[[i, o, r]] = g.max(opts.sinr_floor);
            }
        }
        gamma
    }

    /// Surrogate rate `Σ W log2(1 + γ̃)` and energy terms of one interval, per
    /// second: `(rate, power, per-object (rate, charging))`.
    pub fn surrogate_totals(&self, policy: &IntervalPolicy) -> (f64, f64, Vec<(usize, f64, f64)>) {
        let snap = self.snapshot;
        let cfg = self.config;
        let mut rate_sum = 0.0;
        let mut power = 0.0;
        let mut per_object = Vec::new();
        for (i, objs) in snap.associations.iter().enumerate() {
            if !snap.vehicle_active[i] {
                continue;
            }
            power += cfg.static_vehicle_power_w;
            for &o in objs {
                let mut rate = 0.0;
                let mut charge = 0.0;
                for r in 0..snap.num_rbs() {
                    let s = policy.assignment[[i, o, r]];
                    if s == 0.0 {
                        continue;
                    }
                    let terms = self.link_terms(None, (i, o, r));
                    let (w, p) = (policy.ps_info[[i, o, r]], policy.power[[i, o, r]]);
                    rate += s * cfg.bandwidth_hz * (1.0 + terms.bounded_sinr(w, p)).log2();
                    charge += s
                        * cfg.conversion_efficiency
                        * (policy.ps_energy[[i, o, r]] * terms.ambient_w + p * terms.gain);
                    power += s * p;
                }
                rate_sum += rate;
                power += cfg.object_rx_power_w - charge;
                per_object.push((o, rate, charge));
            }
        }
        (rate_sum, power, per_object)
    }
}

fn copy_vehicle(
    from: &IntervalPolicy,
    to: &mut IntervalPolicy,
    snapshot: &NetworkSnapshot,
    i: usize,
) {
    for &o in &snapshot.associations[i] {
        for r in 0..snapshot.num_rbs() {
            to.power[[i, o, r]] = from.power[[i, o, r]];
            to.ps_info[[i, o, r]] = from.ps_info[[i, o, r]];
            to.ps_energy[[i, o, r]] = from.ps_energy[[i, o, r]];
            to.assignment[[i, o, r]] = from.assignment[[i, o, r]];
        }
    }
}

/// Maximizer of a unimodal `f` on `[a, b]`.
fn golden_max(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        if b - a <= 1e-12 * b.abs().max(1e-300) {
            break;
        }
    }
    0.5 * (a + b)
}
