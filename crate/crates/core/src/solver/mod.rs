//! Three nested loops: Dinkelbach on the efficiency `Λ` outermost, SCA
//! re-expansion of the rate bound in the middle, and a projected sub-gradient
//! loop on the Lagrange multipliers innermost with closed-form primal
//! updates. Given `Λ` the surrogate problem splits into independent
//! per-interval subproblems.

mod closed_form;
mod dual;
mod inner;

use std::io::Write;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

pub use closed_form::{assign_resource_blocks, LinkDuals, LinkTerms};
pub use dual::{subgradient_step, DualScales, DualState, Slacks};
pub use inner::{Candidates, InnerOutcome, IntervalProblem};

use crate::approx::{update_coefficients, ScaCoefficients};
use crate::error::{Error, Result};
use crate::metrics::{
    ceiling_scale, charge_scale, energy_efficiency, rate_scale, IntervalPolicy, MetricsReport,
    Policy, Residuals,
};
use crate::scenario::{NetworkSnapshot, ScenarioConfig};

/// Tolerances, iteration limits and numerical guards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Stop when `|F| < tol_dinkelbach · Ẽ`.
    pub tol_dinkelbach: f64,
    /// Largest SCA coefficient change accepted as converged.
    pub tol_sca: f64,
    /// Largest normalized multiplier change accepted as converged.
    pub tol_dual: f64,
    pub max_dinkelbach: usize,
    pub max_sca: usize,
    pub max_dual: usize,
    /// `ζ0` of the `ζ0/√t` step schedule.
    pub step0: f64,
    /// Split ratios are kept in `[ps_floor, 1 - ps_floor]`.
    pub ps_floor: f64,
    /// Smallest SINR used as an expansion point.
    pub sinr_floor: f64,
    /// Power prices below `price_floor · W / P^T` return the budget cap.
    pub price_floor: f64,
    /// Update multipliers with the opposite sign convention.
    pub paper_signs: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_dinkelbach: 1e-6,
            tol_sca: 1e-4,
            tol_dual: 1e-4,
            max_dinkelbach: 50,
            max_sca: 30,
            max_dual: 500,
            step0: 0.1,
            ps_floor: 1e-4,
            sinr_floor: 1e-9,
            price_floor: 1e-12,
            paper_signs: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.tol_dinkelbach,
            self.tol_sca,
            self.tol_dual,
            self.step0,
            self.sinr_floor,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config(
                "solver tolerances and step size must be positive".into(),
            ));
        }
        if self.max_dinkelbach == 0 || self.max_sca == 0 || self.max_dual == 0 {
            return Err(Error::Config(
                "solver iteration limits must be at least 1".into(),
            ));
        }
        if !(self.ps_floor > 0.0 && self.ps_floor < 0.5) {
            return Err(Error::Config("ps_floor must lie in (0, 0.5)".into()));
        }
        if !(self.price_floor >= 0.0) {
            return Err(Error::Config("price_floor must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    NotConverged,
    Infeasible,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::NotConverged => "not_converged",
            SolveStatus::Infeasible => "infeasible",
        }
    }
}

/// One Dinkelbach iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    /// `Λ_k` used by this iteration's subproblem.
    pub ee: f64,
    /// `F = R̃ - Λ_k Ẽ` of the accepted policy.
    pub objective: f64,
    /// `Ẽ` of the accepted policy, joules.
    pub energy: f64,
    /// Smallest normalized true-constraint slack of the accepted policy.
    pub min_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    /// Binary assignment, one entry per interval.
    pub policy: Policy,
    /// True (non-surrogate) metrics of `policy`.
    pub metrics: MetricsReport,
    /// Surrogate rate floor, charging floor and charging ceiling slacks.
    pub surrogate_residuals: Residuals,
    /// `R̃ / Ẽ` of the final policy.
    pub surrogate_ee: f64,
    /// Final `F`.
    pub objective: f64,
    pub surrogate_bits: f64,
    pub surrogate_energy_j: f64,
    pub trace: Vec<TraceRow>,
    pub dinkelbach_iterations: usize,
    pub sca_iterations: usize,
    pub dual_iterations: usize,
    /// Inner solves that hit `max_dual`.
    pub dual_unconverged: usize,
    /// Vehicle/interval subproblems that fell back to the phase-1 point.
    pub fallbacks: usize,
    /// The last subproblem failed to improve on the incumbent, which was kept.
    pub kept_incumbent: bool,
}

impl SolveReport {
    /// Smallest slack over true C1-C6 and surrogate C1, C4, C7.
    pub fn min_slack(&self) -> f64 {
        self.metrics
            .residuals
            .min_slack()
            .min(self.surrogate_residuals.min_slack())
    }

    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "status",
            "energy_efficiency",
            "total_bits",
            "total_energy_j",
            "surrogate_ee",
            "objective",
            "min_slack",
            "dinkelbach_iterations",
            "sca_iterations",
            "dual_iterations",
            "dual_unconverged",
            "fallbacks",
        ])?;
        w.write_record([
            self.status.as_str().to_string(),
            format!("{:e}", self.metrics.energy_efficiency),
            format!("{:e}", self.metrics.total_bits),
            format!("{:e}", self.metrics.total_energy_j),
            format!("{:e}", self.surrogate_ee),
            format!("{:e}", self.objective),
            format!("{:e}", self.min_slack()),
            self.dinkelbach_iterations.to_string(),
            self.sca_iterations.to_string(),
            self.dual_iterations.to_string(),
            self.dual_unconverged.to_string(),
            self.fallbacks.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }

    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "ee", "objective", "energy_j", "min_slack"])?;
        for row in &self.trace {
            w.write_record([
                row.k.to_string(),
                format!("{:e}", row.ee),
                format!("{:e}", row.objective),
                format!("{:e}", row.energy),
                format!("{:e}", row.min_slack),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Surrogate bits `R̃` and energy `Ẽ` of a policy, with the SCA bound expanded
/// at the policy itself, so `R̃` uses `log2(1 + γ̃)`.
pub fn surrogate_totals(
    policy: &Policy,
    snapshots: &[NetworkSnapshot],
    config: &ScenarioConfig,
) -> Result<(f64, f64)> {
    policy.check(snapshots)?;
    let mut bits = 0.0;
    let mut energy = 0.0;
    for (p, s) in policy.intervals.iter().zip(snapshots) {
        let problem = IntervalProblem::new(s, config)?;
        let (rate, power, _) = problem.surrogate_totals(p);
        bits += rate * config.interval_s;
        energy += power * config.interval_s;
    }
    Ok((bits, energy))
}

/// `F = R̃ - Λ·Ẽ` of a policy.
pub fn dinkelbach_objective(
    policy: &Policy,
    snapshots: &[NetworkSnapshot],
    config: &ScenarioConfig,
    ee: f64,
) -> Result<f64> {
    let (bits, energy) = surrogate_totals(policy, snapshots, config)?;
    Ok(bits - ee * energy)
}

/// Normalized slacks of the surrogate rate floor, charging floor and
/// charging ceiling.
pub fn surrogate_residuals(
    policy: &Policy,
    snapshots: &[NetworkSnapshot],
    config: &ScenarioConfig,
) -> Result<Residuals> {
    policy.check(snapshots)?;
    let mut out = Residuals::default();
    for (p, s) in policy.intervals.iter().zip(snapshots) {
        let problem = IntervalProblem::new(s, config)?;
        let (_, _, per_object) = problem.surrogate_totals(p);
        for (_, rate, charge) in per_object {
            out.merge(&Residuals {
                c1_rate: Some((rate - config.min_rate_bps) / rate_scale(config)),
                c4_charge: Some((charge - config.min_charge_w) / charge_scale(config)),
                c7_surrogate_charge: Some(
                    (config.object_rx_power_w - charge) / ceiling_scale(config),
                ),
                ..Residuals::default()
            });
        }
    }
    Ok(out)
}

/// Even split of the budget over every served link with `ϖ^I = 0.5`; the
/// SINR of this point seeds the first SCA expansion.
fn initial_expansion(problem: &IntervalProblem, opts: &SolverConfig) -> Array3<f64> {
    let snap = problem.snapshot;
    let cfg = problem.config;
    let b = snap.num_rbs();
    let mut gamma = Array3::from_elem(snap.shape(), 1.0);
    for (i, objs) in snap.associations.iter().enumerate() {
        if objs.is_empty() {
            continue;
        }
        let p = cfg.vehicle_power_budget_w / (objs.len() * b) as f64;
        for &o in objs {
            for r in 0..b {
                let g = problem.link_terms(None, (i, o, r)).bounded_sinr(0.5, p);
                gamma[[i, o, r]] = g.max(opts.sinr_floor);
            }
        }
    }
    gamma
}

struct Incumbent {
    policy: Policy,
    bits: f64,
    energy: f64,
}

fn totals_of(
    problems: &[IntervalProblem],
    policies: &[IntervalPolicy],
    interval_s: f64,
) -> (f64, f64) {
    let mut bits = 0.0;
    let mut energy = 0.0;
    for (problem, p) in problems.iter().zip(policies) {
        let (rate, power, _) = problem.surrogate_totals(p);
        bits += rate * interval_s;
        energy += power * interval_s;
    }
    (bits, energy)
}

fn finish(
    status: SolveStatus,
    policy: Policy,
    snapshots: &[NetworkSnapshot],
    config: &ScenarioConfig,
    ee: f64,
    mut report: SolveReport,
) -> Result<SolveReport> {
    let metrics = energy_efficiency(&policy, snapshots, config)?;
    let (bits, energy) = surrogate_totals(&policy, snapshots, config)?;
    report.surrogate_residuals = surrogate_residuals(&policy, snapshots, config)?;
    report.status = status;
    report.metrics = metrics;
    report.surrogate_bits = bits;
    report.surrogate_energy_j = energy;
    report.surrogate_ee = bits / energy;
    report.objective = bits - ee * energy;
    report.policy = policy;
    Ok(report)
}

/// Maximizes the energy efficiency of a realized scenario.
pub fn solve(
    snapshots: &[NetworkSnapshot],
    config: &ScenarioConfig,
    opts: &SolverConfig,
) -> Result<SolveReport> {
    config.validate()?;
    opts.validate()?;
    if snapshots.is_empty() {
        return Err(Error::Config("no intervals to solve".into()));
    }
    let problems = snapshots
        .iter()
        .map(|s| IntervalProblem::new(s, config))
        .collect::<Result<Vec<_>>>()?;

    let mut report = SolveReport {
        status: SolveStatus::NotConverged,
        policy: Policy {
            intervals: Vec::new(),
        },
        metrics: MetricsReport {
            rows: Vec::new(),
            vehicle_power_w: Vec::new(),
            total_energy_j: 0.0,
            total_bits: 0.0,
            energy_efficiency: 0.0,
            residuals: Residuals::default(),
        },
        surrogate_residuals: Residuals::default(),
        surrogate_ee: 0.0,
        objective: 0.0,
        surrogate_bits: 0.0,
        surrogate_energy_j: 0.0,
        trace: Vec::new(),
        dinkelbach_iterations: 0,
        sca_iterations: 0,
        dual_iterations: 0,
        dual_unconverged: 0,
        fallbacks: 0,
        kept_incumbent: false,
    };

    // phase 1
    let mut fallbacks = Vec::with_capacity(problems.len());
    let mut probes = Vec::with_capacity(problems.len());
    let mut infeasible = false;
    for problem in &problems {
        // the probe only seeds the repair, which decides feasibility
        let (probe, _) = problem.feasibility_probe(opts);
        let fallback = problem.fallback_policy(&probe, opts);
        if fallback.is_none() {
            infeasible = true;
        }
        fallbacks.push(fallback.unwrap_or_else(|| probe.clone()));
        probes.push(probe);
    }
    if infeasible {
        return finish(
            SolveStatus::Infeasible,
            Policy { intervals: probes },
            snapshots,
            config,
            0.0,
            report,
        );
    }

    let mut duals: Vec<DualState> = snapshots
        .iter()
        .map(|s| DualState::new(s.shape(), opts.step0))
        .collect();
    let mut gamma: Vec<Array3<f64>> = problems
        .iter()
        .map(|p| initial_expansion(p, opts))
        .collect();
    let mut ee = 0.0;
    let mut incumbent: Option<Incumbent> = None;
    let mut status = SolveStatus::NotConverged;

    for k in 0..opts.max_dinkelbach {
        report.dinkelbach_iterations = k + 1;
        let mut coeffs: Vec<ScaCoefficients> = gamma
            .iter()
            .map(|g| update_coefficients(g, 0))
            .collect::<Result<_>>()?;
        let mut policies: Vec<IntervalPolicy> = Vec::new();
        let mut previous: Vec<IntervalPolicy> = Vec::new();
        for c in 1..=opts.max_sca {
            report.sca_iterations += 1;
            policies.clear();
            let mut next_gamma = Vec::with_capacity(problems.len());
            for (l, problem) in problems.iter().enumerate() {
                let out = problem.inner_dual_solve(
                    ee,
                    &coeffs[l],
                    duals[l].clone(),
                    &fallbacks[l],
                    opts,
                )?;
                report.dual_iterations += out.iterations;
                if !out.converged {
                    report.dual_unconverged += 1;
                }
                report.fallbacks += out.fallback_vehicles.len();
                next_gamma.push(problem.expansion_sinr(&out.policy, &out.candidates, opts));
                duals[l] = out.dual;
                policies.push(out.policy);
            }
            let next: Vec<ScaCoefficients> = next_gamma
                .iter()
                .map(|g| update_coefficients(g, c))
                .collect::<Result<_>>()?;
            // only links in use steer the policy; idle candidates below the
            // water level decay slowly towards zero SINR and are ignored
            let same_assignment = previous.len() == policies.len()
                && previous
                    .iter()
                    .zip(&policies)
                    .all(|(a, b)| a.assignment == b.assignment);
            let change = next
                .iter()
                .zip(&coeffs)
                .zip(&policies)
                .map(|((x, y), p)| x.max_change_on(y, &p.assignment))
                .fold(0.0, f64::max);
            previous = policies.clone();
            gamma = next_gamma;
            coeffs = next;
            if same_assignment && change < opts.tol_sca {
                break;
            }
        }

        let (bits, energy) = totals_of(&problems, &policies, config.interval_s);
        let objective = bits - ee * energy;
        if let Some(inc) = incumbent.as_ref().filter(|_| objective < 0.0) {
            // inexact subproblem did worse than the incumbent at this Λ
            let kept = inc.bits - ee * inc.energy;
            let slack = energy_efficiency(&inc.policy, snapshots, config)?
                .residuals
                .min_slack();
            report.trace.push(TraceRow {
                k,
                ee,
                objective: kept,
                energy: inc.energy,
                min_slack: slack,
            });
            report.kept_incumbent = true;
            if kept.abs() < opts.tol_dinkelbach * inc.energy {
                status = SolveStatus::Converged;
            }
            break;
        }

        let policy = Policy {
            intervals: policies,
        };
        let slack = energy_efficiency(&policy, snapshots, config)?
            .residuals
            .min_slack();
        report.trace.push(TraceRow {
            k,
            ee,
            objective,
            energy,
            min_slack: slack,
        });
        incumbent = Some(Incumbent {
            policy,
            bits,
            energy,
        });
        if objective.abs() < opts.tol_dinkelbach * energy {
            status = SolveStatus::Converged;
            break;
        }
        ee = bits / energy;
    }

    let inc = incumbent.expect("at least one Dinkelbach iteration runs");
    let final_ee = report.trace.last().map_or(ee, |row| row.ee);
    finish(status, inc.policy, snapshots, config, final_ee, report)
}
