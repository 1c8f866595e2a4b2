//! Network instances: a two-lane road with electric vehicles, roadside objects
//! placed next to the lanes, and Rayleigh-faded channel gains per interval.
//!
//! Vehicles in lane 0 drive towards +x, vehicles in lane 1 towards -x. The road
//! is a ring of length `road_length_m` by default, so distances along the road
//! are measured the short way round. Every random draw comes from a ChaCha
//! stream keyed by `(interval, vehicle, object)`; growing an instance (more
//! objects or resource blocks) leaves the draws of the existing entities
//! untouched.

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channel gains are never evaluated closer than this.
pub const MIN_DISTANCE_M: f64 = 1.0;

const STREAM_PLACEMENT: u64 = 1 << 62;

/// What happens to a vehicle reaching the end of the road.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoadEdge {
    /// Circular road: vehicles re-enter at the other end.
    #[default]
    Wrap,
    /// Vehicles leave the road and stop transmitting.
    Exit,
}

/// Roadside object placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    /// `objects_per_vehicle` objects scattered uniformly within `spread_m`
    /// (along the road) of each vehicle's starting point, `offset_m` beyond
    /// the outer edge of that vehicle's lane.
    PerVehicle {
        objects_per_vehicle: usize,
        spread_m: f64,
        offset_m: f64,
    },
    /// Absolute `[x, y]` object coordinates in metres.
    Explicit { positions: Vec<[f64; 2]> },
}

impl Default for Layout {
    fn default() -> Self {
        Layout::PerVehicle {
            objects_per_vehicle: 3,
            spread_m: 20.0,
            offset_m: 3.0,
        }
    }
}

/// Physical and constraint parameters of one network instance. SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub num_vehicles: usize,
    pub num_rbs: usize,
    pub num_intervals: usize,
    pub bandwidth_hz: f64,
    pub noise_psd_w_per_hz: f64,
    pub processing_noise_w: f64,
    pub static_vehicle_power_w: f64,
    pub object_rx_power_w: f64,
    pub vehicle_power_budget_w: f64,
    pub min_rate_bps: f64,
    pub min_charge_w: f64,
    pub conversion_efficiency: f64,
    /// Scalar tolerable interference level. `None` uses, per victim link, the
    /// interference received when every other active vehicle transmits its
    /// whole budget on that resource block.
    pub worst_case_interference_w: Option<f64>,
    pub road_length_m: f64,
    pub lane_separation_m: f64,
    pub velocity_mps: f64,
    pub pathloss_exponent: f64,
    pub reference_gain: f64,
    pub interval_s: f64,
    pub road_edge: RoadEdge,
    pub layout: Layout,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            num_vehicles: 4,
            num_rbs: 4,
            num_intervals: 5,
            bandwidth_hz: 1.0e6,
            noise_psd_w_per_hz: 4.0e-21,
            processing_noise_w: 1.0e-10,
            static_vehicle_power_w: 0.1,
            object_rx_power_w: 1.0e-4,
            vehicle_power_budget_w: 0.2,
            min_rate_bps: 0.0,
            min_charge_w: 0.0,
            conversion_efficiency: 0.7,
            worst_case_interference_w: None,
            road_length_m: 1000.0,
            lane_separation_m: 4.0,
            velocity_mps: 5.0,
            pathloss_exponent: 3.0,
            reference_gain: 1.0e-3,
            interval_s: 1.0,
            road_edge: RoadEdge::Wrap,
            layout: Layout::default(),
            rng_seed: 0,
        }
    }
}

impl ScenarioConfig {
    /// Parses a JSON config. Every key except `rng_seed` has a default.
    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::from_json_str_with_seed(text, None)
    }

    /// As [`Self::from_json_str`], with `seed` replacing any `rng_seed` in
    /// the text.
    pub fn from_json_str_with_seed(text: &str, seed: Option<u64>) -> Result<Self> {
        let mut value: serde_json::Value = serde_json::from_str(text)?;
        if let (Some(seed), Some(map)) = (seed, value.as_object_mut()) {
            map.insert("rng_seed".into(), seed.into());
        }
        if value.get("rng_seed").is_none() {
            return Err(Error::Config("`rng_seed` is mandatory".into()));
        }
        let config: Self = serde_json::from_value(value)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.num_vehicles == 0 || self.num_rbs == 0 || self.num_intervals == 0 {
            return fail("num_vehicles, num_rbs and num_intervals must be at least 1");
        }
        if !(self.bandwidth_hz > 0.0) {
            return fail("bandwidth_hz must be positive");
        }
        if !(self.conversion_efficiency > 0.0 && self.conversion_efficiency < 1.0) {
            return fail("conversion_efficiency must lie in (0, 1)");
        }
        if !(self.vehicle_power_budget_w > 0.0) {
            return fail("vehicle_power_budget_w must be positive");
        }
        let non_negative = [
            ("noise_psd_w_per_hz", self.noise_psd_w_per_hz),
            ("processing_noise_w", self.processing_noise_w),
            ("static_vehicle_power_w", self.static_vehicle_power_w),
            ("object_rx_power_w", self.object_rx_power_w),
            ("min_rate_bps", self.min_rate_bps),
            ("min_charge_w", self.min_charge_w),
            ("velocity_mps", self.velocity_mps),
            ("lane_separation_m", self.lane_separation_m),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "{name} must be finite and non-negative"
                )));
            }
        }
        if let Some(i) = self.worst_case_interference_w {
            if !(i >= 0.0) {
                return fail("worst_case_interference_w must be non-negative");
            }
        }
        if !(self.road_length_m > 0.0) {
            return fail("road_length_m must be positive");
        }
        if !(self.pathloss_exponent > 0.0) || !(self.reference_gain > 0.0) {
            return fail("pathloss_exponent and reference_gain must be positive");
        }
        if !(self.interval_s > 0.0) {
            return fail("interval_s must be positive");
        }
        if let Layout::PerVehicle {
            spread_m, offset_m, ..
        } = self.layout
        {
            if !(spread_m >= 0.0) || !(offset_m >= 0.0) {
                return fail("layout spread_m and offset_m must be non-negative");
            }
        }
        Ok(())
    }

    /// Receiver noise power N0·W.
    pub fn thermal_noise_w(&self) -> f64 {
        self.noise_psd_w_per_hz * self.bandwidth_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

/// Topology and channel state of one time interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSnapshot {
    /// 1-based interval index.
    pub interval: usize,
    pub vehicle_positions: Vec<Position>,
    pub vehicle_active: Vec<bool>,
    pub object_positions: Vec<Position>,
    /// Served object indices per vehicle, ascending.
    pub associations: Vec<Vec<usize>>,
    /// `gains[[vehicle, object, rb]]` for every vehicle/object pair; empty
    /// until [`realize_channels`] runs.
    pub gains: Array3<f64>,
}

impl NetworkSnapshot {
    pub fn num_vehicles(&self) -> usize {
        self.vehicle_positions.len()
    }

    pub fn num_objects(&self) -> usize {
        self.object_positions.len()
    }

    pub fn num_rbs(&self) -> usize {
        self.gains.dim().2
    }

    pub fn is_realized(&self) -> bool {
        self.gains.dim() != (0, 0, 0)
    }

    pub fn ensure_realized(&self) -> Result<()> {
        if self.is_realized() {
            Ok(())
        } else {
            Err(Error::ChannelsNotRealized(self.interval))
        }
    }

    /// Policy/tensor shape `(vehicles, objects, rbs)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        self.gains.dim()
    }

    pub fn gain(&self, vehicle: usize, object: usize, rb: usize) -> f64 {
        self.gains[[vehicle, object, rb]]
    }

    /// The vehicle serving `object`, if any.
    pub fn serving_vehicle(&self, object: usize) -> Option<usize> {
        self.associations
            .iter()
            .position(|objs| objs.binary_search(&object).is_ok())
    }

    /// Iterator over `(vehicle, object)` served pairs.
    pub fn served_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.associations
            .iter()
            .enumerate()
            .flat_map(|(i, objs)| objs.iter().map(move |&o| (i, o)))
    }

    pub fn num_served_pairs(&self) -> usize {
        self.associations.iter().map(Vec::len).sum()
    }
}

fn lane_of(vehicle: usize) -> usize {
    vehicle % 2
}

fn lane_direction(vehicle: usize) -> f64 {
    if lane_of(vehicle) == 0 {
        1.0
    } else {
        -1.0
    }
}

fn keyed_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn channel_stream(interval: usize, vehicle: usize, object: usize) -> u64 {
    ((interval as u64) << 42) | ((vehicle as u64) << 21) | object as u64
}

/// Separation along the road, accounting for the ring closure when wrapping.
fn road_dx(a: f64, b: f64, config: &ScenarioConfig) -> f64 {
    let dx = (a - b).abs();
    match config.road_edge {
        RoadEdge::Wrap => dx.min(config.road_length_m - dx).max(0.0),
        RoadEdge::Exit => dx,
    }
}

pub fn distance(a: Position, b: Position, config: &ScenarioConfig) -> f64 {
    let dx = road_dx(a.x, b.x, config);
    let dy = a.y - b.y;
    (dx * dx + dy * dy).sqrt()
}

/// Deterministic log-distance path gain with the 1 m distance floor.
pub fn path_gain(distance_m: f64, config: &ScenarioConfig) -> f64 {
    config.reference_gain
        * distance_m
            .max(MIN_DISTANCE_M)
            .powf(-config.pathloss_exponent)
}

fn associate(
    vehicles: &[Position],
    active: &[bool],
    objects: &[Position],
    config: &ScenarioConfig,
) -> Vec<Vec<usize>> {
    let mut assoc = vec![Vec::new(); vehicles.len()];
    for (o, &obj) in objects.iter().enumerate() {
        let nearest = vehicles
            .iter()
            .enumerate()
            .filter(|(i, _)| active[*i])
            .map(|(i, &v)| (i, distance(v, obj, config)))
            .fold(None::<(usize, f64)>, |best, (i, d)| match best {
                Some((_, bd)) if bd <= d => best,
                _ => Some((i, d)),
            });
        if let Some((i, _)) = nearest {
            assoc[i].push(o);
        }
    }
    assoc
}

fn wrap_x(x: f64, length: f64) -> f64 {
    x.rem_euclid(length)
}

/// Places vehicles and objects for the first interval and associates each
/// object with its nearest vehicle. Gains are left unrealized.
pub fn build_scenario(config: &ScenarioConfig) -> Result<NetworkSnapshot> {
    config.validate()?;
    let n = config.num_vehicles;
    let spacing = config.road_length_m / n as f64;
    let vehicles: Vec<Position> = (0..n)
        .map(|i| Position {
            x: (i as f64 + 0.5) * spacing,
            y: lane_of(i) as f64 * config.lane_separation_m,
        })
        .collect();

    let objects: Vec<Position> = match &config.layout {
        Layout::PerVehicle {
            objects_per_vehicle,
            spread_m,
            offset_m,
        } => {
            let mut objs = Vec::with_capacity(n * objects_per_vehicle);
            for (i, v) in vehicles.iter().enumerate() {
                let y = if lane_of(i) == 0 {
                    -offset_m
                } else {
                    config.lane_separation_m + offset_m
                };
                for k in 0..*objects_per_vehicle {
                    let mut rng = keyed_rng(
                        config.rng_seed,
                        STREAM_PLACEMENT | ((i as u64) << 21) | k as u64,
                    );
                    let u: f64 = rng.random();
                    let x = v.x + spread_m * (2.0 * u - 1.0);
                    let x = match config.road_edge {
                        RoadEdge::Wrap => wrap_x(x, config.road_length_m),
                        RoadEdge::Exit => x.clamp(0.0, config.road_length_m),
                    };
                    objs.push(Position { x, y });
                }
            }
            objs
        }
        Layout::Explicit { positions } => {
            positions.iter().map(|&[x, y]| Position { x, y }).collect()
        }
    };

    let active = vec![true; n];
    let associations = associate(&vehicles, &active, &objects, config);
    if let Some(vehicle) = associations.iter().position(Vec::is_empty) {
        return Err(Error::NoObjects { vehicle });
    }

    Ok(NetworkSnapshot {
        interval: 1,
        vehicle_positions: vehicles,
        vehicle_active: active,
        object_positions: objects,
        associations,
        gains: Array3::zeros((0, 0, 0)),
    })
}

/// Moves every active vehicle one interval along its lane and re-associates
/// objects with their nearest vehicle. Vehicles left without objects simply
/// stay idle for the interval.
pub fn advance_mobility(
    snapshot: &NetworkSnapshot,
    config: &ScenarioConfig,
) -> Result<NetworkSnapshot> {
    if snapshot.interval >= config.num_intervals {
        return Err(Error::IntervalOutOfRange {
            interval: snapshot.interval,
            total: config.num_intervals,
        });
    }
    let step = config.velocity_mps * config.interval_s;
    let mut active = snapshot.vehicle_active.clone();
    let vehicles: Vec<Position> = snapshot
        .vehicle_positions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if !active[i] {
                return *p;
            }
            let x = p.x + lane_direction(i) * step;
            let x = match config.road_edge {
                RoadEdge::Wrap => wrap_x(x, config.road_length_m),
                RoadEdge::Exit => {
                    if !(0.0..config.road_length_m).contains(&x) {
                        active[i] = false;
                    }
                    x
                }
            };
            Position { x, y: p.y }
        })
        .collect();
    let associations = associate(&vehicles, &active, &snapshot.object_positions, config);
    for (i, objs) in associations.iter().enumerate() {
        if objs.is_empty() {
            active[i] = false;
        }
    }
    Ok(NetworkSnapshot {
        interval: snapshot.interval + 1,
        vehicle_positions: vehicles,
        vehicle_active: active,
        object_positions: snapshot.object_positions.clone(),
        associations,
        gains: Array3::zeros((0, 0, 0)),
    })
}

/// Draws the gains of every vehicle/object/RB triple:
/// `reference_gain · d^(-exponent) · h` with `h ~ Exp(1)`.
pub fn realize_channels(
    snapshot: &NetworkSnapshot,
    config: &ScenarioConfig,
    seed: u64,
) -> NetworkSnapshot {
    let (n, m, b) = (
        snapshot.num_vehicles(),
        snapshot.num_objects(),
        config.num_rbs,
    );
    let mut gains = Array3::zeros((n, m, b));
    for i in 0..n {
        for o in 0..m {
            let d = distance(
                snapshot.vehicle_positions[i],
                snapshot.object_positions[o],
                config,
            );
            let mean = path_gain(d, config);
            let mut rng = keyed_rng(seed, channel_stream(snapshot.interval, i, o));
            for r in 0..b {
                let h: f64 = rng.sample(Exp1);
                gains[[i, o, r]] = mean * h.max(f64::MIN_POSITIVE);
            }
        }
    }
    NetworkSnapshot {
        gains,
        ..snapshot.clone()
    }
}

/// Unit-mean fading draws from the same stream layout as [`realize_channels`]
/// (used to check the fading normalisation).
pub fn fading_samples(seed: u64, count: usize) -> Vec<f64> {
    let mut rng = keyed_rng(seed, channel_stream(0, 0, 0));
    (0..count).map(|_| rng.sample::<f64, _>(Exp1)).collect()
}

/// All `num_intervals` realized snapshots of an instance.
pub fn generate(config: &ScenarioConfig) -> Result<Vec<NetworkSnapshot>> {
    let mut snapshot = build_scenario(config)?;
    let mut out = Vec::with_capacity(config.num_intervals);
    loop {
        out.push(realize_channels(&snapshot, config, config.rng_seed));
        if snapshot.interval >= config.num_intervals {
            break;
        }
        snapshot = advance_mobility(&snapshot, config)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ScenarioConfig {
        ScenarioConfig {
            num_vehicles: 1,
            num_rbs: 1,
            num_intervals: 2,
            layout: Layout::PerVehicle {
                objects_per_vehicle: 1,
                spread_m: 10.0,
                offset_m: 3.0,
            },
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn minimal_instance() {
        let snap = realize_channels(&build_scenario(&tiny()).unwrap(), &tiny(), 1);
        assert_eq!(snap.interval, 1);
        assert_eq!(snap.associations, vec![vec![0]]);
        assert_eq!(snap.gains.len(), 1);
        assert!(snap.gains[[0, 0, 0]] > 0.0);
    }

    #[test]
    fn nearest_vehicle_split_is_disjoint() {
        let cfg = ScenarioConfig {
            num_vehicles: 2,
            road_length_m: 400.0,
            layout: Layout::Explicit {
                positions: vec![[90.0, -3.0], [110.0, -3.0], [290.0, 7.0], [310.0, 7.0]],
            },
            ..ScenarioConfig::default()
        };
        let snap = build_scenario(&cfg).unwrap();
        assert_eq!(snap.associations, vec![vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn vehicle_without_objects_is_rejected() {
        let cfg = ScenarioConfig {
            num_vehicles: 2,
            layout: Layout::Explicit {
                positions: vec![[250.0, -3.0]],
            },
            ..ScenarioConfig::default()
        };
        assert!(matches!(
            build_scenario(&cfg),
            Err(Error::NoObjects { vehicle: 1 })
        ));
    }

    #[test]
    fn zero_velocity_keeps_positions() {
        let cfg = ScenarioConfig {
            velocity_mps: 0.0,
            ..tiny()
        };
        let s0 = build_scenario(&cfg).unwrap();
        let s1 = advance_mobility(&s0, &cfg).unwrap();
        assert_eq!(s0.vehicle_positions, s1.vehicle_positions);
        assert_eq!(s1.interval, 2);
    }

    #[test]
    fn kinematics_and_interval_limit() {
        let cfg = ScenarioConfig {
            velocity_mps: 10.0,
            ..tiny()
        };
        let s0 = build_scenario(&cfg).unwrap();
        let s1 = advance_mobility(&s0, &cfg).unwrap();
        assert!((s1.vehicle_positions[0].x - s0.vehicle_positions[0].x - 10.0).abs() < 1e-12);
        assert!(matches!(
            advance_mobility(&s1, &cfg),
            Err(Error::IntervalOutOfRange { .. })
        ));
    }

    #[test]
    fn receding_vehicle_loses_path_gain() {
        // vehicle starts level with the object and drives away from it
        let cfg = ScenarioConfig {
            velocity_mps: 10.0,
            layout: Layout::Explicit {
                positions: vec![[500.0, -3.0]],
            },
            ..tiny()
        };
        let s0 = build_scenario(&cfg).unwrap();
        let s1 = advance_mobility(&s0, &cfg).unwrap();
        let before = path_gain(
            distance(s0.vehicle_positions[0], s0.object_positions[0], &cfg),
            &cfg,
        );
        let after = path_gain(
            distance(s1.vehicle_positions[0], s1.object_positions[0], &cfg),
            &cfg,
        );
        let expected_before = 1e-3 * 3f64.powi(-3);
        let expected_after = 1e-3 * (109f64).sqrt().powi(-3);
        assert!((before - expected_before).abs() < 1e-18);
        assert!((after - expected_after).abs() < 1e-18);
        assert!(after < before);
    }

    #[test]
    fn unit_distance_identity() {
        let cfg = ScenarioConfig::default();
        assert_eq!(path_gain(1.0, &cfg), cfg.reference_gain);
        assert_eq!(path_gain(0.0, &cfg), cfg.reference_gain);
    }

    #[test]
    fn exit_deactivates() {
        let cfg = ScenarioConfig {
            road_edge: RoadEdge::Exit,
            road_length_m: 100.0,
            velocity_mps: 60.0,
            ..tiny()
        };
        let s0 = build_scenario(&cfg).unwrap();
        let s1 = advance_mobility(&s0, &cfg).unwrap();
        assert!(!s1.vehicle_active[0]);
        assert!(s1.associations[0].is_empty());
    }

    #[test]
    fn wrap_keeps_vehicles_on_ring() {
        let cfg = ScenarioConfig {
            road_length_m: 100.0,
            velocity_mps: 60.0,
            ..tiny()
        };
        let s0 = build_scenario(&cfg).unwrap();
        let s1 = advance_mobility(&s0, &cfg).unwrap();
        assert!((s1.vehicle_positions[0].x - 10.0).abs() < 1e-9);
        assert!(s1.vehicle_active[0]);
    }

    #[test]
    fn missing_seed_is_an_error() {
        assert!(ScenarioConfig::from_json_str(r#"{"num_vehicles": 2}"#).is_err());
        let cfg = ScenarioConfig::from_json_str(r#"{"num_vehicles": 2, "rng_seed": 9}"#).unwrap();
        assert_eq!(cfg.num_vehicles, 2);
        assert_eq!(cfg.rng_seed, 9);
    }

    #[test]
    fn invalid_efficiency_rejected() {
        let cfg = ScenarioConfig {
            conversion_efficiency: 1.0,
            ..ScenarioConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
