//! Energy-efficient resource allocation for wireless-powered
//! vehicle-to-roadside links.
//!
//! Electric vehicles on a two-lane road serve nearby roadside objects that
//! split the received signal between information decoding and energy
//! harvesting. The crate jointly chooses power-splitting ratios, transmit
//! powers and resource-block assignments to maximize delivered bits per joule,
//! using a Dinkelbach outer loop, successive convex approximation of the rate,
//! and a Lagrangian dual inner loop with closed-form primal updates.
//!
//! ```
//! use v2x_ee::{generate, solve, ScenarioConfig, SolverConfig};
//!
//! let config = ScenarioConfig { num_vehicles: 2, num_rbs: 2, num_intervals: 2, ..Default::default() };
//! let snapshots = generate(&config).unwrap();
//! let report = solve(&snapshots, &config, &SolverConfig::default()).unwrap();
//! assert!(report.metrics.energy_efficiency > 0.0);
//! ```

// `!(x > 0.0)` is used on purpose so that NaN fails validation too
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod approx;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod oracle;
pub mod scenario;
pub mod solver;

pub use approx::ScaCoefficients;
pub use error::{Error, Result};
pub use experiments::{baseline_policy, run_sweep, SweepParameter, SweepSpec, SweepTable};
pub use metrics::{energy_efficiency, IntervalPolicy, MetricsReport, Policy, Residuals};
pub use oracle::{oracle_max_ee, oracle_max_transformed, OracleConfig, OracleResult};
pub use scenario::{generate, Layout, NetworkSnapshot, RoadEdge, ScenarioConfig};
pub use solver::{solve, DualState, SolveReport, SolveStatus, SolverConfig};
