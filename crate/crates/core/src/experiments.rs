//! Baseline policy, parameter sweeps and result tables.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{energy_efficiency, IntervalPolicy, MetricsReport, Policy};
use crate::scenario::{generate, Layout, NetworkSnapshot, ScenarioConfig};
use crate::solver::{solve, SolveStatus, SolverConfig};

/// Non-adaptive reference: every RB goes to the vehicle's best-gain object
/// (lowest index on ties), each assigned link radiates
/// `P^T / (|J_i| · B_used)` and both split ratios are 0.5. Feasibility is not
/// enforced.
pub fn baseline_policy(snapshots: &[NetworkSnapshot], config: &ScenarioConfig) -> Policy {
    let intervals = snapshots
        .iter()
        .map(|snap| {
            let mut p = IntervalPolicy::empty(snap.shape());
            let b = snap.num_rbs();
            for (i, objs) in snap.associations.iter().enumerate() {
                if !snap.vehicle_active[i] || objs.is_empty() {
                    continue;
                }
                let power = config.vehicle_power_budget_w / (objs.len() * b) as f64;
                for r in 0..b {
                    let mut best = objs[0];
                    for &o in &objs[1..] {
                        if snap.gain(i, o, r) > snap.gain(i, best, r) {
                            best = o;
                        }
                    }
                    p.assignment[[i, best, r]] = 1.0;
                    p.power[[i, best, r]] = power;
                    p.set_split(i, best, r, 0.5);
                }
            }
            p
        })
        .collect();
    Policy { intervals }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Total objects, split evenly over the vehicles.
    NumObjects,
    Velocity,
    NumRbs,
    MinRate,
    ConversionEfficiency,
    /// Required charging capacity `P^min`.
    ChargingCapacity,
}

impl SweepParameter {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParameter::NumObjects => "num_objects",
            SweepParameter::Velocity => "velocity",
            SweepParameter::NumRbs => "num_rbs",
            SweepParameter::MinRate => "min_rate",
            SweepParameter::ConversionEfficiency => "conversion_efficiency",
            SweepParameter::ChargingCapacity => "charging_capacity",
        }
    }

    /// `base` with the parameter set to `value`.
    pub fn apply(self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let mut cfg = base.clone();
        let count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(Error::Sweep(format!(
                    "{} needs positive integers, got {v}",
                    self.as_str()
                )))
            }
        };
        match self {
            SweepParameter::NumObjects => {
                let total = count(value)?;
                if total % cfg.num_vehicles != 0 {
                    return Err(Error::Sweep(format!(
                        "{total} objects cannot be split evenly over {} vehicles",
                        cfg.num_vehicles
                    )));
                }
                let per = total / cfg.num_vehicles;
                cfg.layout = match cfg.layout {
                    Layout::PerVehicle {
                        spread_m, offset_m, ..
                    } => Layout::PerVehicle {
                        objects_per_vehicle: per,
                        spread_m,
                        offset_m,
                    },
                    Layout::Explicit { .. } => {
                        return Err(Error::Sweep(
                            "num_objects needs a per-vehicle layout".into(),
                        ));
                    }
                };
            }
            SweepParameter::Velocity => cfg.velocity_mps = value,
            SweepParameter::NumRbs => cfg.num_rbs = count(value)?,
            SweepParameter::MinRate => cfg.min_rate_bps = value,
            SweepParameter::ConversionEfficiency => cfg.conversion_efficiency = value,
            SweepParameter::ChargingCapacity => cfg.min_charge_w = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn default_repetitions() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    /// Repetition `k` uses seed `seed_base + k` at every value.
    #[serde(default)]
    pub seed_base: u64,
}

impl SweepSpec {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: SweepSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Sweep("value list is empty".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Sweep("values must be finite".into()));
        }
        let up = self.values.windows(2).all(|w| w[0] < w[1]);
        let down = self.values.windows(2).all(|w| w[0] > w[1]);
        if !(up || down) {
            return Err(Error::Sweep("values must be strictly monotone".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Sweep("repetitions must be at least 1".into()));
        }
        Ok(())
    }
}

/// Headline numbers of one policy on one instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub energy_efficiency: f64,
    /// Mean over served `(interval, object)` pairs of `Σ_r σ P`.
    pub allocated_power_per_object_w: f64,
    /// Network-wide harvested power per interval, averaged over intervals.
    pub charging_w: f64,
}

impl Outcome {
    pub fn from_report(report: &MetricsReport, intervals: usize) -> Self {
        let pairs = report.rows.len().max(1) as f64;
        Self {
            energy_efficiency: report.energy_efficiency,
            allocated_power_per_object_w: report
                .rows
                .iter()
                .map(|r| r.allocated_power_w)
                .sum::<f64>()
                / pairs,
            charging_w: report.rows.iter().map(|r| r.charging_w).sum::<f64>()
                / intervals.max(1) as f64,
        }
    }
}

/// One instance of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub value: f64,
    pub repetition: usize,
    pub seed: u64,
    pub solver_status: SolveStatus,
    /// `None` when the solver found no feasible policy.
    pub solver: Option<Outcome>,
    /// Smallest normalized slack of the solver's policy.
    pub solver_min_slack: f64,
    pub baseline: Option<Outcome>,
    /// Whether the baseline meets every constraint within `FEASIBILITY_TOL`.
    pub baseline_feasible: bool,
}

/// One aggregated line of a result table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sweep_value: f64,
    pub metric: String,
    /// Empty when no repetition contributed.
    pub mean: Option<f64>,
    /// Sample standard deviation; empty below two contributions.
    pub std: Option<f64>,
    pub n: usize,
    pub method: String,
}

pub const METRICS: [&str; 3] = [
    "energy_efficiency",
    "allocated_power_per_object_w",
    "charging_w",
];
pub const METHODS: [&str; 2] = ["solver", "baseline"];
pub const FEASIBLE_FRACTION: &str = "feasible_fraction";
/// Smallest normalized slack still counted as feasible.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub parameter: SweepParameter,
    pub rows: Vec<SweepRow>,
    pub samples: Vec<Sample>,
}

fn metric_of(o: &Outcome, metric: &str) -> f64 {
    match metric {
        "energy_efficiency" => o.energy_efficiency,
        "allocated_power_per_object_w" => o.allocated_power_per_object_w,
        "charging_w" => o.charging_w,
        _ => unreachable!("unknown metric {metric}"),
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (Some(mean), None);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some(var.sqrt()))
}

fn run_sample(
    spec: &SweepSpec,
    base: &ScenarioConfig,
    opts: &SolverConfig,
    value: f64,
    repetition: usize,
) -> Result<Sample> {
    let seed = spec.seed_base.wrapping_add(repetition as u64);
    let cfg = ScenarioConfig {
        rng_seed: seed,
        ..spec.parameter.apply(base, value)?
    };
    let snaps = generate(&cfg)?;
    let report = solve(&snaps, &cfg, opts)?;
    let solver = (report.status != SolveStatus::Infeasible)
        .then(|| Outcome::from_report(&report.metrics, snaps.len()));
    let baseline_report = energy_efficiency(&baseline_policy(&snaps, &cfg), &snaps, &cfg).ok();
    let baseline_feasible = baseline_report
        .as_ref()
        .is_some_and(|m| m.residuals.min_slack() >= -FEASIBILITY_TOL);
    let baseline = baseline_report.map(|m| Outcome::from_report(&m, snaps.len()));
    Ok(Sample {
        value,
        repetition,
        seed,
        solver_status: report.status,
        solver,
        baseline,
        solver_min_slack: report.min_slack(),
        baseline_feasible,
    })
}

/// Solver and baseline on every value × repetition, aggregated per value in
/// the order of `spec.values`. Instances run on all available cores.
pub fn run_sweep(
    spec: &SweepSpec,
    base: &ScenarioConfig,
    opts: &SolverConfig,
) -> Result<SweepTable> {
    spec.validate()?;
    opts.validate()?;
    for &v in &spec.values {
        spec.parameter.apply(base, v)?;
    }
    let jobs: Vec<(f64, usize)> = spec
        .values
        .iter()
        .flat_map(|&v| (0..spec.repetitions).map(move |k| (v, k)))
        .collect();
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(jobs.len());
    let mut results: Vec<Option<Result<Sample>>> = (0..jobs.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunks: Vec<_> = results
            .chunks_mut(jobs.len().div_ceil(workers))
            .zip(jobs.chunks(jobs.len().div_ceil(workers)))
            .map(|(out, work)| {
                scope.spawn(move || {
                    for (slot, &(v, k)) in out.iter_mut().zip(work) {
                        *slot = Some(run_sample(spec, base, opts, v, k));
                    }
                })
            })
            .collect();
        for c in chunks {
            c.join().expect("sweep worker panicked");
        }
    });
    let samples: Vec<Sample> = results
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for &v in &spec.values {
        let at: Vec<&Sample> = samples.iter().filter(|s| s.value == v).collect();
        for method in METHODS {
            let outcomes: Vec<&Outcome> = at
                .iter()
                .filter_map(|s| {
                    if method == "solver" {
                        s.solver.as_ref()
                    } else {
                        s.baseline.as_ref()
                    }
                })
                .collect();
            for metric in METRICS {
                let xs: Vec<f64> = outcomes.iter().map(|o| metric_of(o, metric)).collect();
                let (mean, std) = mean_std(&xs);
                rows.push(SweepRow {
                    sweep_value: v,
                    metric: metric.to_string(),
                    mean,
                    std,
                    n: xs.len(),
                    method: method.to_string(),
                });
            }
        }
        let feasible = at.iter().filter(|s| s.solver.is_some()).count();
        rows.push(SweepRow {
            sweep_value: v,
            metric: FEASIBLE_FRACTION.to_string(),
            mean: Some(feasible as f64 / at.len() as f64),
            std: None,
            n: at.len(),
            method: "solver".to_string(),
        });
    }
    Ok(SweepTable {
        parameter: spec.parameter,
        rows,
        samples,
    })
}

impl SweepTable {
    /// `(sweep_value, mean)` of one series, in sweep order.
    pub fn series(&self, metric: &str, method: &str) -> Vec<(f64, Option<f64>)> {
        self.rows
            .iter()
            .filter(|r| r.metric == metric && r.method == method)
            .map(|r| (r.sweep_value, r.mean))
            .collect()
    }

    /// Values at which no repetition was solved feasibly.
    pub fn infeasible_points(&self) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.metric == FEASIBLE_FRACTION && r.mean == Some(0.0))
            .map(|r| r.sweep_value)
            .collect()
    }

    /// Header `sweep_value,metric,mean,std,n,method`, one line per row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows(&self.rows, out)
    }

    /// Long-format plot data: `series,x,y,err` with one series per
    /// metric and method.
    pub fn write_plot_data<W: Write>(&self, out: W) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::EmptyTable);
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["series", "x", "y", "err"])?;
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        for method in METHODS {
            for metric in METRICS {
                for r in self
                    .rows
                    .iter()
                    .filter(|r| r.metric == metric && r.method == method)
                {
                    w.write_record([
                        format!("{}/{}", metric, method),
                        r.sweep_value.to_string(),
                        opt(r.mean),
                        opt(r.std),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn write_rows<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::EmptyTable);
    }
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a table written by [`SweepTable::write_csv`].
pub fn read_rows<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for row in r.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::energy_efficiency;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            num_vehicles: 2,
            num_rbs: 2,
            num_intervals: 2,
            ..Default::default()
        }
    }

    #[test]
    fn baseline_single_link_uses_budget() {
        let cfg = ScenarioConfig {
            num_vehicles: 1,
            num_rbs: 1,
            num_intervals: 1,
            layout: Layout::PerVehicle {
                objects_per_vehicle: 1,
                spread_m: 5.0,
                offset_m: 3.0,
            },
            ..Default::default()
        };
        let snaps = generate(&cfg).unwrap();
        let p = baseline_policy(&snaps, &cfg);
        assert_eq!(p.intervals[0].assignment[[0, 0, 0]], 1.0);
        assert_eq!(p.intervals[0].power[[0, 0, 0]], cfg.vehicle_power_budget_w);
    }

    #[test]
    fn baseline_splits_are_half() {
        let cfg = small();
        let snaps = generate(&cfg).unwrap();
        let p = baseline_policy(&snaps, &cfg);
        for ip in &p.intervals {
            for ((&s, &i), &e) in ip.assignment.iter().zip(&ip.ps_info).zip(&ip.ps_energy) {
                if s > 0.0 {
                    assert_eq!((i, e), (0.5, 0.5));
                }
            }
        }
    }

    #[test]
    fn baseline_picks_best_gain() {
        let cfg = small();
        let snaps = generate(&cfg).unwrap();
        let p = baseline_policy(&snaps, &cfg);
        for (ip, snap) in p.intervals.iter().zip(&snaps) {
            for (i, objs) in snap.associations.iter().enumerate() {
                for r in 0..snap.num_rbs() {
                    let chosen: Vec<usize> = objs
                        .iter()
                        .copied()
                        .filter(|&o| ip.assignment[[i, o, r]] > 0.0)
                        .collect();
                    assert_eq!(chosen.len(), 1);
                    let best = objs.iter().map(|&o| snap.gain(i, o, r)).fold(0.0, f64::max);
                    assert_eq!(snap.gain(i, chosen[0], r), best);
                }
            }
        }
        assert!(energy_efficiency(&p, &snaps, &cfg).is_ok());
    }

    #[test]
    fn spec_validation() {
        let ok = SweepSpec {
            parameter: SweepParameter::Velocity,
            values: vec![5.0, 10.0],
            repetitions: 1,
            seed_base: 0,
        };
        assert!(ok.validate().is_ok());
        let empty = SweepSpec {
            values: vec![],
            ..ok.clone()
        };
        assert!(matches!(empty.validate(), Err(Error::Sweep(_))));
        let zig = SweepSpec {
            values: vec![5.0, 10.0, 7.0],
            ..ok.clone()
        };
        assert!(zig.validate().is_err());
        let none = SweepSpec {
            repetitions: 0,
            ..ok
        };
        assert!(none.validate().is_err());
    }

    #[test]
    fn spec_from_json_defaults() {
        let spec =
            SweepSpec::from_json_str(r#"{"parameter": "num_rbs", "values": [1, 2, 3]}"#).unwrap();
        assert_eq!(spec.repetitions, 10);
        assert_eq!(spec.seed_base, 0);
        assert!(SweepSpec::from_json_str(r#"{"parameter": "colour", "values": [1]}"#).is_err());
    }

    #[test]
    fn num_objects_must_divide() {
        let base = ScenarioConfig {
            num_vehicles: 3,
            ..Default::default()
        };
        let cfg = SweepParameter::NumObjects.apply(&base, 9.0).unwrap();
        assert!(matches!(
            cfg.layout,
            Layout::PerVehicle {
                objects_per_vehicle: 3,
                ..
            }
        ));
        assert!(SweepParameter::NumObjects.apply(&base, 10.0).is_err());
        assert!(SweepParameter::NumRbs.apply(&base, 2.5).is_err());
    }

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, Some(2.5));
        assert!((s.unwrap() - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[7.0]), (Some(7.0), None));
        assert_eq!(mean_std(&[]), (None, None));
    }

    fn row(v: f64) -> SweepRow {
        SweepRow {
            sweep_value: v,
            metric: "energy_efficiency".into(),
            mean: Some(1.25e8),
            std: None,
            n: 3,
            method: "solver".into(),
        }
    }

    #[test]
    fn one_row_table() {
        let mut buf = Vec::new();
        write_rows(&[row(5.0)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "sweep_value,metric,mean,std,n,method");
    }

    #[test]
    fn empty_table_is_an_error() {
        assert!(matches!(
            write_rows(&[], Vec::new()),
            Err(Error::EmptyTable)
        ));
    }

    #[test]
    fn rows_round_trip() {
        let rows = vec![
            row(5.0),
            SweepRow {
                mean: None,
                n: 0,
                ..row(0.1 + 0.2)
            },
            SweepRow {
                std: Some(1.0 / 3.0),
                ..row(15.0)
            },
        ];
        let mut buf = Vec::new();
        write_rows(&rows, &mut buf).unwrap();
        assert_eq!(read_rows(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn sweep_is_reproducible() {
        let spec = SweepSpec {
            parameter: SweepParameter::NumRbs,
            values: vec![1.0, 2.0],
            repetitions: 2,
            seed_base: 7,
        };
        let emit = || {
            let t = run_sweep(&spec, &small(), &SolverConfig::default()).unwrap();
            let mut buf = Vec::new();
            t.write_csv(&mut buf).unwrap();
            (t, buf)
        };
        let (t1, a) = emit();
        let (_, b) = emit();
        assert_eq!(a, b);
        assert_eq!(read_rows(a.as_slice()).unwrap(), t1.rows);
        assert_eq!(t1.samples.len(), 4);
        assert_eq!(t1.series("energy_efficiency", "solver").len(), 2);
    }
}
