//! Problem data for last-mile scheduling with single-destination CV trips,
//! plus the objective and the train-selection rules every solver shares.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Integer time on the unit grid.
pub type Time = i64;
/// Boarding station label. Station `0` is never used; the terminal is implicit.
pub type StationId = u32;
/// Exact objective value.
pub type Value = Ratio<i64>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("{kind} id {id} does not match its position {index}")]
    IdMismatch {
        kind: &'static str,
        id: usize,
        index: usize,
    },
    #[error("unknown {kind} id {id}")]
    UnknownId { kind: &'static str, id: usize },
    #[error("trip {trip}: {reason}")]
    BadTrip { trip: usize, reason: String },
    #[error("destination {destination}: {reason}")]
    BadDestination { destination: usize, reason: String },
    #[error("passenger {passenger}: {reason}")]
    BadPassenger { passenger: usize, reason: String },
    #[error("instance: {0}")]
    BadInstance(String),
    #[error("trip {trip} does not serve station {station}")]
    TripMissesOrigin { trip: usize, station: StationId },
    #[error("trip {trip} reaches the terminal at {arrival}, after departure {depart}")]
    TripTooLate {
        trip: usize,
        arrival: Time,
        depart: Time,
    },
    #[error("unreachable departure time {depart} for passenger {passenger}")]
    UnreachableDeparture { passenger: usize, depart: Time },
}

/// Weight on total travel time; `1 - alpha` weighs the number of CV trips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Alpha(Ratio<i64>);

impl Alpha {
    pub const ZERO: Alpha = Alpha(Ratio::new_raw(0, 1));
    pub const ONE: Alpha = Alpha(Ratio::new_raw(1, 1));

    pub fn new(numer: i64, denom: i64) -> Option<Alpha> {
        if denom == 0 {
            return None;
        }
        let r = Ratio::new(numer, denom);
        (r >= Ratio::zero() && r <= Ratio::from_integer(1)).then_some(Alpha(r))
    }

    /// Nearest simple fraction to `x` (exact for decimal grids like 0.1 steps).
    pub fn from_f64(x: f64) -> Option<Alpha> {
        if !(0.0..=1.0).contains(&x) {
            return None;
        }
        let r = Ratio::<i64>::approximate_float(x)?;
        Alpha::new(*r.numer(), *r.denom())
    }

    pub fn ratio(self) -> Ratio<i64> {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0.to_f64().unwrap_or(0.0)
    }

    /// `alpha * travel + (1 - alpha) * trips`, exactly.
    pub fn combine(self, travel: i64, trips: i64) -> Value {
        self.0 * travel + (Ratio::from_integer(1) - self.0) * trips
    }
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_f64())
    }
}

impl FromStr for Alpha {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some((n, d)) = s.split_once('/') {
            let n: i64 = n.trim().parse().map_err(|e| format!("{e}"))?;
            let d: i64 = d.trim().parse().map_err(|e| format!("{e}"))?;
            return Alpha::new(n, d).ok_or_else(|| format!("alpha {s} outside [0,1]"));
        }
        let x: f64 = s
            .trim()
            .parse()
            .map_err(|e| format!("bad alpha {s:?}: {e}"))?;
        Alpha::from_f64(x).ok_or_else(|| format!("alpha {s} outside [0,1]"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitTrip {
    pub id: usize,
    /// Departure time per served station. Unserved stations are absent.
    pub departures: BTreeMap<StationId, Time>,
    pub terminal_arrival: Time,
}

impl TransitTrip {
    pub fn departure(&self, station: StationId) -> Option<Time> {
        self.departures.get(&station).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Destination {
    pub id: usize,
    /// Terminal to destination, boarding included.
    #[serde(rename = "to")]
    pub to_time: Time,
    #[serde(rename = "stop")]
    pub stop_time: Time,
    #[serde(rename = "back")]
    pub back_time: Time,
    /// Departure-dependent `(to, back)` travel times.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_table: Option<BTreeMap<Time, (Time, Time)>>,
}

impl Destination {
    pub fn new(id: usize, to_time: Time, stop_time: Time, back_time: Time) -> Self {
        Destination {
            id,
            to_time,
            stop_time,
            back_time,
            time_table: None,
        }
    }

    pub fn to_time_at(&self, depart: Time) -> Time {
        match &self.time_table {
            Some(table) => table.get(&depart).map_or(self.to_time, |e| e.0),
            None => self.to_time,
        }
    }

    pub fn back_time_at(&self, depart: Time) -> Time {
        match &self.time_table {
            Some(table) => table.get(&depart).map_or(self.back_time, |e| e.1),
            None => self.back_time,
        }
    }

    /// CV round trip for a departure at `depart`.
    pub fn round_trip_at(&self, depart: Time) -> Time {
        self.to_time_at(depart) + self.stop_time + self.back_time_at(depart)
    }

    pub fn round_trip(&self) -> Time {
        self.to_time + self.stop_time + self.back_time
    }

    pub fn is_time_dependent(&self) -> bool {
        self.time_table.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passenger {
    pub id: usize,
    pub origin: StationId,
    #[serde(rename = "dest")]
    pub destination: usize,
    #[serde(rename = "arrival")]
    pub requested_arrival: Time,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub trips: Vec<TransitTrip>,
    pub destinations: Vec<Destination>,
    pub passengers: Vec<Passenger>,
    pub fleet_size: u32,
    pub cv_capacity: u32,
    pub window: Time,
    pub horizon: Time,
}

impl Instance {
    /// Checks the structural invariants. Ids must equal positions.
    pub fn check(&self) -> Result<(), ModelError> {
        if self.cv_capacity == 0 {
            return Err(ModelError::BadInstance(
                "cv_capacity must be positive".into(),
            ));
        }
        if self.horizon <= 0 {
            return Err(ModelError::BadInstance("horizon must be positive".into()));
        }
        if self.window < 0 {
            return Err(ModelError::BadInstance(
                "window must be non-negative".into(),
            ));
        }
        for (index, trip) in self.trips.iter().enumerate() {
            if trip.id != index {
                return Err(ModelError::IdMismatch {
                    kind: "trip",
                    id: trip.id,
                    index,
                });
            }
            let bad = |reason: String| ModelError::BadTrip {
                trip: index,
                reason,
            };
            if trip.departures.is_empty() {
                return Err(bad("serves no station".into()));
            }
            if trip.terminal_arrival < 0 || trip.terminal_arrival > self.horizon {
                return Err(bad(format!(
                    "terminal arrival {} outside [0, {}]",
                    trip.terminal_arrival, self.horizon
                )));
            }
            if let Some((s, t)) = trip
                .departures
                .iter()
                .find(|(_, &t)| t < 0 || t >= trip.terminal_arrival)
            {
                return Err(bad(format!(
                    "departure {t} at station {s} not before terminal arrival"
                )));
            }
        }
        for (index, dest) in self.destinations.iter().enumerate() {
            if dest.id != index {
                return Err(ModelError::IdMismatch {
                    kind: "destination",
                    id: dest.id,
                    index,
                });
            }
            let bad = |reason: String| ModelError::BadDestination {
                destination: index,
                reason,
            };
            if dest.to_time < 0 || dest.stop_time < 0 || dest.back_time < 0 {
                return Err(bad("negative travel component".into()));
            }
            if dest.round_trip() < 1 {
                return Err(bad("round trip must be at least 1".into()));
            }
            if let Some(table) = &dest.time_table {
                for t in 1..=self.horizon {
                    match table.get(&t) {
                        None => return Err(bad(format!("time table misses t={t}"))),
                        Some(&(to, back))
                            if to < 0 || back < 0 || to + dest.stop_time + back < 1 =>
                        {
                            return Err(bad(format!("bad time table entry at t={t}")))
                        }
                        _ => {}
                    }
                }
            }
        }
        for (index, p) in self.passengers.iter().enumerate() {
            if p.id != index {
                return Err(ModelError::IdMismatch {
                    kind: "passenger",
                    id: p.id,
                    index,
                });
            }
            let bad = |reason: String| ModelError::BadPassenger {
                passenger: index,
                reason,
            };
            if p.destination >= self.destinations.len() {
                return Err(bad(format!("unknown destination {}", p.destination)));
            }
            if !self
                .trips
                .iter()
                .any(|c| c.departures.contains_key(&p.origin))
            {
                return Err(bad(format!("origin {} served by no trip", p.origin)));
            }
            let dest = &self.destinations[p.destination];
            if !(1..=self.horizon).any(|t| t + dest.round_trip_at(t) <= self.horizon) {
                return Err(bad("no round trip fits in the horizon".into()));
            }
        }
        Ok(())
    }

    pub fn num_passengers(&self) -> usize {
        self.passengers.len()
    }

    pub fn num_destinations(&self) -> usize {
        self.destinations.len()
    }

    /// Passengers bound for `dest`, in id order.
    pub fn passengers_for(&self, dest: usize) -> Vec<usize> {
        self.passengers
            .iter()
            .filter(|p| p.destination == dest)
            .map(|p| p.id)
            .collect()
    }

    /// Passengers bound for `dest`, ordered by requested arrival then id.
    pub fn sorted_passengers_for(&self, dest: usize) -> Vec<usize> {
        let mut js = self.passengers_for(dest);
        js.sort_by_key(|&j| (self.passengers[j].requested_arrival, j));
        js
    }

    /// Earliest terminal arrival among trips serving `station`.
    pub fn earliest_arrival_serving(&self, station: StationId) -> Option<Time> {
        self.trips
            .iter()
            .filter(|c| c.departures.contains_key(&station))
            .map(|c| c.terminal_arrival)
            .min()
    }

    pub fn passenger(&self, j: usize) -> Result<&Passenger, ModelError> {
        self.passengers.get(j).ok_or(ModelError::UnknownId {
            kind: "passenger",
            id: j,
        })
    }

    pub fn trip(&self, c: usize) -> Result<&TransitTrip, ModelError> {
        self.trips.get(c).ok_or(ModelError::UnknownId {
            kind: "trip",
            id: c,
        })
    }

    pub fn destination(&self, d: usize) -> Result<&Destination, ModelError> {
        self.destinations.get(d).ok_or(ModelError::UnknownId {
            kind: "destination",
            id: d,
        })
    }
}

/// One passenger's seat on a CV trip together with the train that brings them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Boarding {
    pub passenger: usize,
    pub trip: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupTrip {
    pub destination: usize,
    pub depart: Time,
    pub members: Vec<Boarding>,
}

impl GroupTrip {
    pub fn train_of(&self, passenger: usize) -> Option<usize> {
        self.members
            .iter()
            .find(|b| b.passenger == passenger)
            .map(|b| b.trip)
    }

    /// Builds a group whose members ride the latest usable train.
    pub fn with_best_trips(
        instance: &Instance,
        destination: usize,
        depart: Time,
        passengers: &[usize],
    ) -> Result<GroupTrip, ModelError> {
        let members = passengers
            .iter()
            .map(|&j| best_trip(instance, j, depart).map(|trip| Boarding { passenger: j, trip }))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(GroupTrip {
            destination,
            depart,
            members,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub groups: Vec<GroupTrip>,
    pub objective_travel: i64,
    pub objective_trips: i64,
}

impl Schedule {
    pub fn empty() -> Schedule {
        Schedule {
            groups: Vec::new(),
            objective_travel: 0,
            objective_trips: 0,
        }
    }

    /// Assembles a schedule and derives both objective terms from the groups.
    pub fn from_groups(
        instance: &Instance,
        groups: Vec<GroupTrip>,
    ) -> Result<Schedule, ModelError> {
        let mut travel = 0;
        for g in &groups {
            for b in &g.members {
                travel += travel_time(instance, b.passenger, g.depart, b.trip)?;
            }
        }
        let trips = groups.len() as i64;
        Ok(Schedule {
            groups,
            objective_travel: travel,
            objective_trips: trips,
        })
    }

    /// Orders groups by (destination, departure, first member) for stable output.
    pub fn canonicalize(&mut self) {
        for g in &mut self.groups {
            g.members.sort();
        }
        self.groups.sort_by(|a, b| {
            (a.destination, a.depart, &a.members).cmp(&(b.destination, b.depart, &b.members))
        });
    }
}

/// `alpha * sum(w_j) + (1 - alpha) * number_of_trips`.
pub fn objective(schedule: &Schedule, alpha: Alpha) -> Value {
    alpha.combine(schedule.objective_travel, schedule.objective_trips)
}

/// Travel time of `passenger` riding `trip` and a CV leaving at `depart`.
pub fn travel_time(
    instance: &Instance,
    passenger: usize,
    depart: Time,
    trip: usize,
) -> Result<Time, ModelError> {
    let p = instance.passenger(passenger)?;
    let c = instance.trip(trip)?;
    let dest = instance.destination(p.destination)?;
    let boarded = c.departure(p.origin).ok_or(ModelError::TripMissesOrigin {
        trip,
        station: p.origin,
    })?;
    if c.terminal_arrival > depart {
        return Err(ModelError::TripTooLate {
            trip,
            arrival: c.terminal_arrival,
            depart,
        });
    }
    Ok(depart + dest.to_time_at(depart) - boarded)
}

/// Latest-leaving trip from the passenger's origin that reaches the terminal
/// by `depart`; ties go to the lowest trip id.
pub fn best_trip(instance: &Instance, passenger: usize, depart: Time) -> Result<usize, ModelError> {
    let p = instance.passenger(passenger)?;
    let mut best: Option<(Time, usize)> = None;
    for c in &instance.trips {
        if c.terminal_arrival > depart {
            continue;
        }
        if let Some(t) = c.departure(p.origin) {
            if best.map_or(true, |(bt, _)| t > bt) {
                best = Some((t, c.id));
            }
        }
    }
    best.map(|(_, c)| c)
        .ok_or(ModelError::UnreachableDeparture { passenger, depart })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::example1;

    #[test]
    fn travel_time_matches_diagram_labels() {
        let inst = example1();
        assert_eq!(travel_time(&inst, 0, 2, 0).unwrap(), 4);
        assert_eq!(travel_time(&inst, 4, 7, 1).unwrap(), 5);
    }

    #[test]
    fn zero_length_journey() {
        let mut inst = example1();
        inst.destinations[0].to_time = 0;
        inst.trips.push(TransitTrip {
            id: 2,
            departures: BTreeMap::from([(2, 4)]),
            terminal_arrival: 4,
        });
        inst.passengers[0].origin = 2;
        assert_eq!(travel_time(&inst, 0, 4, 2).unwrap(), 0);
    }

    #[test]
    fn travel_time_errors() {
        let inst = example1();
        assert!(matches!(
            travel_time(&inst, 0, 3, 1),
            Err(ModelError::TripTooLate { .. })
        ));
        let mut inst = example1();
        inst.trips[1].departures.clear();
        inst.trips[1].departures.insert(2, 4);
        assert!(matches!(
            travel_time(&inst, 0, 7, 1),
            Err(ModelError::TripMissesOrigin { .. })
        ));
    }

    #[test]
    fn best_trip_picks_latest_usable_train() {
        let inst = example1();
        assert_eq!(best_trip(&inst, 3, 6).unwrap(), 1);
        assert_eq!(best_trip(&inst, 0, 2).unwrap(), 0);
        assert_eq!(best_trip(&inst, 0, 5).unwrap(), 0);
        assert!(matches!(
            best_trip(&inst, 0, 1),
            Err(ModelError::UnreachableDeparture { .. })
        ));
    }

    #[test]
    fn best_trip_ties_go_to_lowest_id() {
        let mut inst = example1();
        inst.trips.push(TransitTrip {
            id: 2,
            departures: BTreeMap::from([(1, 4)]),
            terminal_arrival: 5,
        });
        assert_eq!(best_trip(&inst, 0, 6).unwrap(), 1);
    }

    #[test]
    fn objective_of_example_path() {
        let inst = example1();
        let groups = vec![
            GroupTrip::with_best_trips(&inst, 0, 3, &[0, 1]).unwrap(),
            GroupTrip::with_best_trips(&inst, 0, 5, &[2, 3]).unwrap(),
            GroupTrip::with_best_trips(&inst, 0, 7, &[4]).unwrap(),
        ];
        let s = Schedule::from_groups(&inst, groups).unwrap();
        assert_eq!((s.objective_travel, s.objective_trips), (29, 3));
        for (n, d) in [(0, 1), (1, 2), (1, 1), (3, 10)] {
            let a = Alpha::new(n, d).unwrap();
            let expected = a.ratio() * 29 + (Ratio::from_integer(1) - a.ratio()) * 3;
            assert_eq!(objective(&s, a), expected);
        }
        assert_eq!(
            objective(&Schedule::empty(), Alpha::from_f64(0.3).unwrap()),
            Value::zero()
        );
    }

    #[test]
    fn alpha_parsing() {
        assert_eq!("0.1".parse::<Alpha>().unwrap(), Alpha::new(1, 10).unwrap());
        assert_eq!("1/2".parse::<Alpha>().unwrap(), Alpha::new(1, 2).unwrap());
        assert!("1.5".parse::<Alpha>().is_err());
        assert!("x".parse::<Alpha>().is_err());
    }

    #[test]
    fn check_rejects_bad_ids_and_origins() {
        let mut inst = example1();
        inst.passengers[1].id = 7;
        assert!(matches!(inst.check(), Err(ModelError::IdMismatch { .. })));
        let mut inst = example1();
        inst.passengers[0].origin = 9;
        assert!(matches!(inst.check(), Err(ModelError::BadPassenger { .. })));
        let mut inst = example1();
        inst.trips[0].terminal_arrival = 0;
        assert!(inst.check().is_err());
        assert!(example1().check().is_ok());
    }
}
