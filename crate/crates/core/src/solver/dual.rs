//! Lagrange multipliers of one interval and their projected sub-gradient
//! update.

use ndarray::{Array1, Array2, Array3, Zip};
use serde::{Deserialize, Serialize};

/// Multipliers of one interval, in the units of the Lagrangian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    /// Rate floor, per object.
    pub beta: Array1<f64>,
    /// Split coupling, per `[vehicle, object, rb]`.
    pub delta: Array3<f64>,
    /// RB exclusivity, per `[vehicle, rb]`.
    pub tau: Array2<f64>,
    /// Charging floor, per object.
    pub theta: Array1<f64>,
    /// Transmit budget, per vehicle.
    pub lambda: Array1<f64>,
    /// Charging ceiling, per object.
    pub pi: Array1<f64>,
    pub step0: f64,
    /// Number of steps taken so far.
    pub t: usize,
}

impl DualState {
    /// `δ = 1`, everything else zero.
    pub fn new(shape: (usize, usize, usize), step0: f64) -> Self {
        let (n, m, b) = shape;
        Self {
            beta: Array1::zeros(m),
            delta: Array3::ones(shape),
            tau: Array2::zeros((n, b)),
            theta: Array1::zeros(m),
            lambda: Array1::zeros(n),
            pi: Array1::zeros(m),
            step0,
            t: 0,
        }
    }

    /// Step size of the next update, `ζ0 / √t`.
    pub fn step(&self) -> f64 {
        self.step0 / ((self.t + 1) as f64).sqrt()
    }

    /// Largest change of any multiplier, each divided by its scale.
    pub fn normalized_change(&self, other: &DualState, scales: &DualScales) -> f64 {
        fn diff<'a>(
            a: impl Iterator<Item = &'a f64>,
            b: impl Iterator<Item = &'a f64>,
            s: f64,
        ) -> f64 {
            a.zip(b).map(|(x, y)| (x - y).abs() / s).fold(0.0, f64::max)
        }
        let mut worst = [
            diff(self.beta.iter(), other.beta.iter(), 1.0),
            diff(self.delta.iter(), other.delta.iter(), scales.bandwidth),
            diff(self.tau.iter(), other.tau.iter(), scales.bandwidth),
            diff(self.lambda.iter(), other.lambda.iter(), scales.budget),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        for (o, &c) in scales.charge.iter().enumerate() {
            let c = if c > 0.0 { c } else { 1.0 };
            worst = worst.max((self.theta[o] - other.theta[o]).abs() / c);
            worst = worst.max((self.pi[o] - other.pi[o]).abs() / c);
        }
        worst
    }

    pub fn all_nonnegative(&self) -> bool {
        let ok = |v: &f64| *v >= 0.0;
        self.beta.iter().all(ok)
            && self.delta.iter().all(ok)
            && self.tau.iter().all(ok)
            && self.theta.iter().all(ok)
            && self.lambda.iter().all(ok)
            && self.pi.iter().all(ok)
    }
}

/// Step scale of each multiplier family. `β` is dimensionless and steps
/// unscaled.
#[derive(Debug, Clone, PartialEq)]
pub struct DualScales {
    /// `W`, for `δ` and `τ`.
    pub bandwidth: f64,
    /// `Λ + W / P^T`, for `λ`.
    pub budget: f64,
    /// Budget scale over the object's best gain, for `θ` and `π`.
    pub charge: Array1<f64>,
}

impl DualScales {
    pub fn unit(num_objects: usize) -> Self {
        Self {
            bandwidth: 1.0,
            budget: 1.0,
            charge: Array1::ones(num_objects),
        }
    }
}

/// Normalized constraint slacks at the current primal point, with the same
/// layout as [`DualState`]. Positive means satisfied.
#[derive(Debug, Clone, PartialEq)]
pub struct Slacks {
    pub rate: Array1<f64>,
    pub split: Array3<f64>,
    pub exclusive: Array2<f64>,
    pub charge_floor: Array1<f64>,
    pub budget: Array1<f64>,
    pub charge_ceiling: Array1<f64>,
}

/// One projected sub-gradient step `m ← [m - ζ_t·scale·slack]⁺`, so each
/// multiplier grows while its constraint is violated and decays while it is
/// slack. `paper_signs` flips the sign of the step.
pub fn subgradient_step(
    dual: &DualState,
    slacks: &Slacks,
    scales: &DualScales,
    paper_signs: bool,
) -> DualState {
    let zeta = if paper_signs {
        dual.step()
    } else {
        -dual.step()
    };
    let update = |m: f64, s: f64, scale: f64| (m + zeta * scale * s).max(0.0);
    let w = scales.bandwidth;
    DualState {
        beta: Zip::from(&dual.beta)
            .and(&slacks.rate)
            .map_collect(|&m, &s| update(m, s, 1.0)),
        delta: Zip::from(&dual.delta)
            .and(&slacks.split)
            .map_collect(|&m, &s| update(m, s, w)),
        tau: Zip::from(&dual.tau)
            .and(&slacks.exclusive)
            .map_collect(|&m, &s| update(m, s, w)),
        theta: Zip::from(&dual.theta)
            .and(&slacks.charge_floor)
            .and(&scales.charge)
            .map_collect(|&m, &s, &c| update(m, s, c)),
        lambda: Zip::from(&dual.lambda)
            .and(&slacks.budget)
            .map_collect(|&m, &s| update(m, s, scales.budget)),
        pi: Zip::from(&dual.pi)
            .and(&slacks.charge_ceiling)
            .and(&scales.charge)
            .map_collect(|&m, &s, &c| update(m, s, c)),
        step0: dual.step0,
        t: dual.t + 1,
    }
}
