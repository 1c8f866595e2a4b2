//! Per-link closed-form maximizers of the Lagrangian and the marginal-benefit
//! rule that binarizes the resource-block assignment.

use std::f64::consts::LN_2;

use crate::approx::sca_bound;
use crate::error::{Error, Result};

/// Everything about one `(vehicle, object, rb)` link that the closed forms
/// need, apart from the multipliers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkTerms {
    /// SCA coefficients at the current expansion point.
    pub a: f64,
    pub b: f64,
    pub gain: f64,
    /// `Ĩ + N0·W`.
    pub ambient_w: f64,
    pub processing_noise_w: f64,
    pub bandwidth_hz: f64,
    pub efficiency: f64,
    pub power_cap_w: f64,
}

/// Multipliers seen by one link, in the units the closed forms use.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LinkDuals {
    /// Rate floor of the served object.
    pub beta: f64,
    /// Split coupling of the link.
    pub delta: f64,
    /// RB exclusivity of the vehicle on this RB.
    pub tau: f64,
    /// Charging floor of the served object.
    pub theta: f64,
    /// Transmit budget of the vehicle.
    pub lambda: f64,
    /// Charging ceiling of the served object.
    pub pi: f64,
}

impl LinkTerms {
    /// `γ̃` for a given split and power.
    pub fn bounded_sinr(&self, info: f64, power: f64) -> f64 {
        let signal = info * power * self.gain;
        if signal == 0.0 {
            return 0.0;
        }
        signal / (self.processing_noise_w + info * self.ambient_w)
    }

    /// Information split maximizing `(1+β)W(a·log2 γ̃ + b) - δ·ϖ`, clamped
    /// to `[0, 1]`. A zero `δ` leaves the rate term unopposed, so the ratio
    /// goes to 1.
    pub fn ps_ratio(&self, duals: &LinkDuals) -> f64 {
        let delta = duals.delta;
        if !(delta > 0.0) {
            return if self.a > 0.0 { 1.0 } else { 0.0 };
        }
        let np = self.processing_noise_w;
        let k = self.ambient_w;
        let lnd = LN_2 * delta;
        let xi = k * (1.0 + duals.beta) * 4.0 * LN_2 * self.bandwidth_hz * np * delta * self.a
            + (lnd * np).powi(2);
        if k == 0.0 {
            // the quadratic degenerates to a linear equation
            if np == 0.0 {
                return 0.0;
            }
            let h = (1.0 + duals.beta) * self.bandwidth_hz * self.a / lnd;
            return h.clamp(0.0, 1.0);
        }
        let h = (xi.sqrt() - lnd * np) / (2.0 * k * lnd);
        if h.is_nan() {
            return 0.0;
        }
        h.clamp(0.0, 1.0)
    }

    /// `Θ = Λ + (π - θ - Λη)·g + λ`: marginal cost of transmit power.
    pub fn power_price(&self, duals: &LinkDuals, ee: f64) -> f64 {
        ee + (duals.pi - duals.theta - ee * self.efficiency) * self.gain + duals.lambda
    }

    /// `P* = max{a·W·(1+β) / (ln2·Θ), 0}`, capped at the vehicle budget. A
    /// price at or below `price_floor` returns the cap.
    pub fn power(&self, duals: &LinkDuals, ee: f64, price_floor: f64) -> f64 {
        let price = self.power_price(duals, ee);
        if !(price > price_floor) {
            return self.power_cap_w;
        }
        let p = self.a * self.bandwidth_hz * (1.0 + duals.beta) / (LN_2 * price);
        p.clamp(0.0, self.power_cap_w)
    }

    /// Marginal benefit of giving this RB to the link: the rise of the link's
    /// Lagrangian from `σ = 0` to `σ = 1` at the candidate split and power,
    /// `(1+β)W(a·log2 γ̃ + b) - Θ·P - δ·ϖ + δ - τ`. At an interior stationary
    /// candidate this is
    /// `W·a(1+β)[log2 γ̃ - (Kϖ + 2Np)/(ln2(Kϖ + Np))] + W·b(1+β) + δ - τ`.
    pub fn marginal_benefit(&self, duals: &LinkDuals, ee: f64, info: f64, power: f64) -> f64 {
        let w = self.bandwidth_hz * (1.0 + duals.beta);
        let mut j = w * self.b + duals.delta - duals.tau - duals.delta * info;
        if self.a > 0.0 {
            j += w * self.a * self.bounded_sinr(info, power).log2();
        }
        j -= self.power_price(duals, ee) * power;
        if j.is_nan() {
            f64::NEG_INFINITY
        } else {
            j
        }
    }

    /// `W·(a·log2 γ̃ + b)` for an assigned link.
    pub fn bounded_rate(&self, info: f64, power: f64) -> f64 {
        self.bandwidth_hz * sca_bound(self.a, self.b, self.bounded_sinr(info, power))
    }
}

/// Index into `benefits` of the largest marginal benefit; the first wins ties.
pub fn assign_resource_blocks(vehicle: usize, rb: usize, benefits: &[f64]) -> Result<usize> {
    if benefits.is_empty() {
        return Err(Error::EmptyCandidates { vehicle, rb });
    }
    let mut best = 0;
    for (k, &j) in benefits.iter().enumerate().skip(1) {
        if j > benefits[best] {
            best = k;
        }
    }
    Ok(best)
}
