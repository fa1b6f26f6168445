//! Seeded instance families and the JSON instance format.
//!
//! Randomness comes from ChaCha8 seeded with `seed_from_u64`, and every
//! bounded draw uses [`uniform`], a rejection sampler over `next_u64`, so a
//! seed reproduces the same instance bytes on any platform. Draw order:
//! one CV travel time per destination, then for each destination and each of
//! its passengers the origin followed by the requested arrival.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Destination, Instance, ModelError, Passenger, StationId, Time, TransitTrip};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Every train stops at stations 4, 3, 2, 1.
    Regular,
    /// Two skip-stop families: {4, 2} and {3, 1}.
    Express,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub num_destinations: usize,
    pub per_destination: usize,
    /// Fleet as a fraction of passengers; `None` picks 0.06 (regular) or 0.1 (express).
    pub fleet_fraction: Option<f64>,
    pub cv_capacity: u32,
    pub window: Time,
    pub seed: u64,
    pub variant: Variant,
    /// Overrides the smallest safe horizon.
    pub horizon: Option<Time>,
}

impl GenConfig {
    pub fn new(num_destinations: usize, per_destination: usize, window: Time, seed: u64) -> Self {
        GenConfig {
            num_destinations,
            per_destination,
            fleet_fraction: None,
            cv_capacity: 5,
            window,
            seed,
            variant: Variant::Regular,
            horizon: None,
        }
    }

    pub fn express(mut self) -> Self {
        self.variant = Variant::Express;
        self
    }

    pub fn fleet_fraction(&self) -> f64 {
        self.fleet_fraction.unwrap_or(match self.variant {
            Variant::Regular => 0.06,
            Variant::Express => 0.1,
        })
    }
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("generated instance is infeasible: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Uniform integer in `[lo, hi]` by rejection, free of modulo bias.
pub fn uniform(rng: &mut impl RngCore, lo: i64, hi: i64) -> i64 {
    assert!(lo <= hi, "empty range");
    let span = (hi - lo) as u64 + 1;
    if span == 0 {
        return lo.wrapping_add(rng.next_u64() as i64);
    }
    let zone = u64::MAX - (u64::MAX % span + 1) % span;
    loop {
        let x = rng.next_u64();
        if x <= zone {
            return lo + (x % span) as i64;
        }
    }
}

fn regular_trips() -> Vec<TransitTrip> {
    (0..8)
        .map(|k| {
            let t4 = 30 * k as Time;
            TransitTrip {
                id: k,
                departures: (1..=4)
                    .map(|s: StationId| (s, t4 + (4 - s as Time) * 10))
                    .collect(),
                terminal_arrival: t4 + 40,
            }
        })
        .collect()
}

fn express_trips() -> Vec<TransitTrip> {
    let mut trips = Vec::new();
    for k in 0..7 {
        let t4 = 30 * k as Time;
        trips.push(TransitTrip {
            id: trips.len(),
            departures: BTreeMap::from([(4, t4), (2, t4 + 10)]),
            terminal_arrival: t4 + 20,
        });
    }
    for k in 0..7 {
        let t3 = 20 + 30 * k as Time;
        trips.push(TransitTrip {
            id: trips.len(),
            departures: BTreeMap::from([(3, t3), (1, t3 + 10)]),
            terminal_arrival: t3 + 15,
        });
    }
    trips
}

pub fn generate(config: &GenConfig) -> Result<Instance, GenError> {
    if config.num_destinations == 0 || config.per_destination == 0 {
        return Err(GenError::Config(
            "need at least one destination and passenger".into(),
        ));
    }
    let fraction = config.fleet_fraction();
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(GenError::Config(format!(
            "fleet fraction {fraction} outside (0,1]"
        )));
    }
    if config.cv_capacity == 0 || config.window < 0 {
        return Err(GenError::Config(
            "capacity must be positive, window non-negative".into(),
        ));
    }
    let n = config.num_destinations * config.per_destination;
    let fleet = (fraction * n as f64).round() as u32;
    if fleet == 0 {
        return Err(GenError::Config(format!("fleet rounds to zero for n={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let destinations: Vec<Destination> = (0..config.num_destinations)
        .map(|d| {
            let base = uniform(&mut rng, 10, 20);
            Destination::new(d, base + 1, 1, base)
        })
        .collect();
    let mut passengers = Vec::with_capacity(n);
    for d in 0..config.num_destinations {
        for _ in 0..config.per_destination {
            let origin = uniform(&mut rng, 1, 4) as StationId;
            let requested_arrival = uniform(&mut rng, 90, 210);
            passengers.push(Passenger {
                id: passengers.len(),
                origin,
                destination: d,
                requested_arrival,
            });
        }
    }
    let max_round = destinations
        .iter()
        .map(Destination::round_trip)
        .max()
        .unwrap_or(0);
    let trips = match config.variant {
        Variant::Regular => regular_trips(),
        Variant::Express => express_trips(),
    };
    let last_train = trips.iter().map(|c| c.terminal_arrival).max().unwrap_or(0);
    let horizon = config
        .horizon
        .unwrap_or((210 + config.window + max_round + 1).max(last_train));
    let instance = Instance {
        trips,
        destinations,
        passengers,
        fleet_size: fleet,
        cv_capacity: config.cv_capacity,
        window: config.window,
        horizon,
    };
    instance.check()?;
    ensure_reachable(&instance)?;
    Ok(instance)
}

/// Every passenger needs a train reaching the terminal by their latest departure.
fn ensure_reachable(instance: &Instance) -> Result<(), GenError> {
    for p in &instance.passengers {
        let dest = &instance.destinations[p.destination];
        let latest = p.requested_arrival + instance.window - dest.to_time;
        let earliest_train = instance.earliest_arrival_serving(p.origin);
        if earliest_train.map_or(true, |a| a > latest) {
            return Err(GenError::Infeasible(format!(
                "passenger {} cannot reach the terminal before {latest}",
                p.id
            )));
        }
    }
    Ok(())
}

/// Bounds for the small random instances used to cross-check the exact solvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TinyConfig {
    pub max_destinations: usize,
    pub max_passengers: usize,
    pub max_fleet: u32,
    pub max_capacity: u32,
    pub windows: (Time, Time),
    /// Largest idle gap between planted CV trips.
    pub slack: Time,
}

impl Default for TinyConfig {
    fn default() -> Self {
        TinyConfig {
            max_destinations: 3,
            max_passengers: 12,
            max_fleet: 2,
            max_capacity: 3,
            windows: (1, 2),
            slack: 3,
        }
    }
}

/// A small two-station instance, feasible by construction: passengers are
/// derived from a planted schedule that respects the fleet size.
pub fn generate_tiny(seed: u64, config: &TinyConfig) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = uniform(&mut rng, 1, config.max_destinations as i64) as usize;
    let n = uniform(&mut rng, 1, config.max_passengers as i64) as usize;
    let fleet = uniform(&mut rng, 1, config.max_fleet as i64) as u32;
    let capacity = uniform(
        &mut rng,
        2.min(config.max_capacity as i64),
        config.max_capacity as i64,
    ) as u32;
    let window = uniform(&mut rng, config.windows.0, config.windows.1);
    let num_trips = uniform(&mut rng, 2, 3) as usize;
    let mut trips = Vec::new();
    let mut t2 = uniform(&mut rng, 0, 1);
    for id in 0..num_trips {
        trips.push(TransitTrip {
            id,
            departures: BTreeMap::from([(2, t2), (1, t2 + 1)]),
            terminal_arrival: t2 + 2,
        });
        t2 += uniform(&mut rng, 2, 4);
    }
    let destinations: Vec<Destination> = (0..k)
        .map(|d| {
            Destination::new(
                d,
                uniform(&mut rng, 1, 3),
                uniform(&mut rng, 0, 1),
                uniform(&mut rng, 1, 3),
            )
        })
        .collect();
    let mut free_at = vec![trips[0].terminal_arrival; fleet as usize];
    let mut passengers = Vec::with_capacity(n);
    let mut last_back = 0;
    while passengers.len() < n {
        let v = uniform(&mut rng, 0, fleet as i64 - 1) as usize;
        let d = uniform(&mut rng, 0, k as i64 - 1) as usize;
        let t = free_at[v] + uniform(&mut rng, 0, config.slack);
        let size = uniform(
            &mut rng,
            1,
            (capacity as usize).min(n - passengers.len()) as i64,
        );
        for _ in 0..size {
            let requested_arrival =
                t + destinations[d].to_time + uniform(&mut rng, -window, window);
            passengers.push(Passenger {
                id: passengers.len(),
                origin: uniform(&mut rng, 1, 2) as StationId,
                destination: d,
                requested_arrival,
            });
        }
        free_at[v] = t + destinations[d].round_trip();
        last_back = last_back.max(free_at[v]);
    }
    let last_arrival = trips.iter().map(|c| c.terminal_arrival).max().unwrap_or(0);
    Instance {
        trips,
        destinations,
        passengers,
        fleet_size: fleet,
        cv_capacity: capacity,
        window,
        horizon: (last_back + uniform(&mut rng, 0, 2)).max(last_arrival),
    }
}

#[derive(Debug, Error)]
pub enum InstanceIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Invalid { path: PathBuf, source: ModelError },
}

pub fn instance_to_json(instance: &Instance) -> String {
    let mut s = serde_json::to_string_pretty(instance).expect("instance serializes");
    s.push('\n');
    s
}

pub fn instance_from_json(text: &str, path: &Path) -> Result<Instance, InstanceIoError> {
    let instance: Instance = serde_json::from_str(text).map_err(|e| InstanceIoError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    instance
        .check()
        .map_err(|source| InstanceIoError::Invalid {
            path: path.to_path_buf(),
            source,
        })?;
    Ok(instance)
}

pub fn write_instance(instance: &Instance, path: impl AsRef<Path>) -> Result<(), InstanceIoError> {
    let path = path.as_ref();
    fs::write(path, instance_to_json(instance)).map_err(|source| InstanceIoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<Instance, InstanceIoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| InstanceIoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    instance_from_json(&text, path)
}
