use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use v2x_ee::oracle::{compare_with_solver, write_comparison_csv};
use v2x_ee::{
    baseline_policy, energy_efficiency, generate, run_sweep, Layout, ScenarioConfig, SolveStatus,
    SolverConfig, SweepSpec,
};

const EXIT_INFEASIBLE: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "v2x-ee",
    version,
    about = "Energy-efficient resource allocation for wireless-powered V2X links"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario configuration (JSON). Defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Update multipliers with the literal sign convention.
    #[arg(long)]
    paper_signs: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance; writes report.csv, trace.csv and links.csv.
    Run {
        #[command(flatten)]
        common: Common,
        /// Seed of the instance; required unless the config sets `rng_seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a parameter sweep; writes sweep.csv and plot_data.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Sweep specification (JSON).
        #[arg(long)]
        sweep: PathBuf,
    },
    /// Compare the solver with the exhaustive oracle on small instances;
    /// writes oracle_check.csv.
    OracleCheck {
        #[command(flatten)]
        common: Common,
        /// First seed; instances use consecutive seeds.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        instances: u64,
        /// Grid points per power and per split axis.
        #[arg(long, default_value_t = 16)]
        grid: usize,
    },
    /// Evaluate the fixed baseline policy on one instance; writes baseline.csv.
    Baseline {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load_config(
    path: Option<&Path>,
    seed: Option<u64>,
    fallback: ScenarioConfig,
) -> Result<ScenarioConfig> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(ScenarioConfig::from_json_str_with_seed(&text, seed)
                .with_context(|| format!("parsing {}", p.display()))?)
        }
        None => Ok(ScenarioConfig {
            rng_seed: seed.unwrap_or(fallback.rng_seed),
            ..fallback
        }),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn solver_options(common: &Common) -> SolverConfig {
    SolverConfig {
        paper_signs: common.paper_signs,
        ..SolverConfig::default()
    }
}

fn oracle_defaults() -> ScenarioConfig {
    ScenarioConfig {
        num_vehicles: 2,
        num_rbs: 2,
        num_intervals: 2,
        layout: Layout::PerVehicle {
            objects_per_vehicle: 2,
            spread_m: 20.0,
            offset_m: 3.0,
        },
        ..ScenarioConfig::default()
    }
}

fn execute(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Run { common, seed } => {
            let cfg = load_config(common.config.as_deref(), seed, ScenarioConfig::default())?;
            fs::create_dir_all(&common.out)?;
            let snaps = generate(&cfg)?;
            let report = v2x_ee::solve(&snaps, &cfg, &solver_options(&common))?;
            report.write_summary_csv(create(&common.out, "report.csv")?)?;
            report.write_trace_csv(create(&common.out, "trace.csv")?)?;
            report
                .metrics
                .write_csv(create(&common.out, "links.csv")?)?;
            Ok(match report.status {
                SolveStatus::Converged => 0,
                SolveStatus::NotConverged => EXIT_NOT_CONVERGED,
                SolveStatus::Infeasible => EXIT_INFEASIBLE,
            })
        }
        Command::Sweep { common, sweep } => {
            // repetitions take their seeds from the sweep file
            let cfg = load_config(common.config.as_deref(), Some(0), ScenarioConfig::default())?;
            let text = fs::read_to_string(&sweep)
                .with_context(|| format!("reading {}", sweep.display()))?;
            let spec = SweepSpec::from_json_str(&text)?;
            fs::create_dir_all(&common.out)?;
            let table = run_sweep(&spec, &cfg, &solver_options(&common))?;
            table.write_csv(create(&common.out, "sweep.csv")?)?;
            table.write_plot_data(create(&common.out, "plot_data.csv")?)?;
            for v in table.infeasible_points() {
                eprintln!(
                    "warning: every repetition infeasible at {} = {v}",
                    spec.parameter.as_str()
                );
            }
            Ok(0)
        }
        Command::OracleCheck {
            common,
            seed,
            instances,
            grid,
        } => {
            let cfg = load_config(common.config.as_deref(), Some(seed), oracle_defaults())?;
            let oc = v2x_ee::OracleConfig {
                power_grid_points: grid,
                ps_grid_points: grid,
                ..Default::default()
            };
            fs::create_dir_all(&common.out)?;
            let seeds: Vec<u64> = (seed..seed.saturating_add(instances)).collect();
            let rows = compare_with_solver(&cfg, &seeds, &oc, &solver_options(&common))?;
            write_comparison_csv(&rows, create(&common.out, "oracle_check.csv")?)?;
            Ok(0)
        }
        Command::Baseline { common, seed } => {
            let cfg = load_config(common.config.as_deref(), seed, ScenarioConfig::default())?;
            fs::create_dir_all(&common.out)?;
            let snaps = generate(&cfg)?;
            let report = energy_efficiency(&baseline_policy(&snaps, &cfg), &snaps, &cfg)?;
            report.write_csv(create(&common.out, "baseline.csv")?)?;
            if !report
                .residuals
                .is_feasible(v2x_ee::experiments::FEASIBILITY_TOL)
            {
                eprintln!(
                    "warning: baseline violates constraints (min slack {:e})",
                    report.residuals.min_slack()
                );
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
