//! Independent feasibility checker for schedules.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::model::{travel_time, Instance, ModelError, Schedule, Time};

/// One violated constraint, tagged by kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// Passenger covered zero or several times.
    Coverage {
        passenger: usize,
        count: usize,
    },
    EmptyGroup {
        group: usize,
    },
    Capacity {
        group: usize,
        size: usize,
        capacity: u32,
    },
    MixedDestination {
        group: usize,
        passenger: usize,
    },
    TimeWindow {
        passenger: usize,
        arrival: Time,
        requested: Time,
    },
    /// Train misses the origin or reaches the terminal after the CV leaves.
    TrainOrder {
        passenger: usize,
        trip: usize,
    },
    /// CV not back at the terminal by the end of the horizon.
    Horizon {
        group: usize,
        back: Time,
    },
    Fleet {
        t: Time,
        active: u32,
        fleet: u32,
    },
    TravelMismatch {
        stored: i64,
        actual: i64,
    },
    TripsMismatch {
        stored: i64,
        actual: i64,
    },
}

impl Violation {
    pub fn tag(&self) -> &'static str {
        match self {
            Violation::Coverage { .. } => "coverage",
            Violation::EmptyGroup { .. } => "empty-group",
            Violation::Capacity { .. } => "capacity",
            Violation::MixedDestination { .. } => "destination",
            Violation::TimeWindow { .. } => "time-window",
            Violation::TrainOrder { .. } => "train-order",
            Violation::Horizon { .. } => "horizon",
            Violation::Fleet { .. } => "fleet",
            Violation::TravelMismatch { .. } | Violation::TripsMismatch { .. } => "objective",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Coverage { passenger, count } => {
                write!(f, "passenger {passenger} covered {count} times")
            }
            Violation::EmptyGroup { group } => write!(f, "group {group} is empty"),
            Violation::Capacity {
                group,
                size,
                capacity,
            } => {
                write!(
                    f,
                    "group {group} carries {size} passengers > capacity {capacity}"
                )
            }
            Violation::MixedDestination { group, passenger } => {
                write!(f, "passenger {passenger} in group {group} goes elsewhere")
            }
            Violation::TimeWindow {
                passenger,
                arrival,
                requested,
            } => write!(
                f,
                "passenger {passenger} arrives at {arrival}, requested {requested}"
            ),
            Violation::TrainOrder { passenger, trip } => {
                write!(f, "passenger {passenger} cannot use trip {trip}")
            }
            Violation::Horizon { group, back } => {
                write!(f, "group {group} returns at {back}, after the horizon")
            }
            Violation::Fleet { t, active, fleet } => {
                write!(
                    f,
                    "CV capacity exceeded at t={t}: {active} active > {fleet}"
                )
            }
            Violation::TravelMismatch { stored, actual } => {
                write!(f, "stored travel {stored} differs from recomputed {actual}")
            }
            Violation::TripsMismatch { stored, actual } => {
                write!(f, "stored trips {stored} differs from recomputed {actual}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn fleet_violations(&self) -> impl Iterator<Item = &Violation> {
        self.violations
            .iter()
            .filter(|v| matches!(v, Violation::Fleet { .. }))
    }
}

/// Active CVs per time: a trip leaving at `t` for a round trip of `tau`
/// occupies `[t, t + tau - 1]`.
pub fn active_vehicles(instance: &Instance, schedule: &Schedule) -> BTreeMap<Time, u32> {
    let mut delta: BTreeMap<Time, i64> = BTreeMap::new();
    for g in &schedule.groups {
        let tau = instance.destinations[g.destination].round_trip_at(g.depart);
        *delta.entry(g.depart).or_default() += 1;
        *delta.entry(g.depart + tau).or_default() -= 1;
    }
    let mut out = BTreeMap::new();
    let mut running = 0i64;
    let mut prev: Option<Time> = None;
    for (&t, &d) in &delta {
        if let Some(p) = prev {
            for s in p..t {
                if running > 0 {
                    out.insert(s, running as u32);
                }
            }
        }
        running += d;
        prev = Some(t);
    }
    out
}

/// Lists every violated constraint. Unknown ids are structural errors.
pub fn validate(instance: &Instance, schedule: &Schedule) -> Result<ValidationReport, ModelError> {
    let mut v = Vec::new();
    let mut seen = vec![0usize; instance.num_passengers()];
    let mut travel = 0i64;
    for (gi, g) in schedule.groups.iter().enumerate() {
        let dest = instance.destination(g.destination)?;
        for b in &g.members {
            instance.passenger(b.passenger)?;
            instance.trip(b.trip)?;
        }
        if g.members.is_empty() {
            v.push(Violation::EmptyGroup { group: gi });
        }
        if g.members.len() > instance.cv_capacity as usize {
            v.push(Violation::Capacity {
                group: gi,
                size: g.members.len(),
                capacity: instance.cv_capacity,
            });
        }
        let back = g.depart + dest.round_trip_at(g.depart);
        if back > instance.horizon || g.depart < 0 {
            v.push(Violation::Horizon { group: gi, back });
        }
        for b in &g.members {
            let p = &instance.passengers[b.passenger];
            seen[b.passenger] += 1;
            if p.destination != g.destination {
                v.push(Violation::MixedDestination {
                    group: gi,
                    passenger: b.passenger,
                });
            }
            let arrival = g.depart + dest.to_time_at(g.depart);
            if (arrival - p.requested_arrival).abs() > instance.window {
                v.push(Violation::TimeWindow {
                    passenger: b.passenger,
                    arrival,
                    requested: p.requested_arrival,
                });
            }
            match travel_time(instance, b.passenger, g.depart, b.trip) {
                Ok(w) if w >= 0 => travel += w,
                _ => v.push(Violation::TrainOrder {
                    passenger: b.passenger,
                    trip: b.trip,
                }),
            }
        }
    }
    for (j, &count) in seen.iter().enumerate() {
        if count != 1 {
            v.push(Violation::Coverage {
                passenger: j,
                count,
            });
        }
    }
    for (t, active) in active_vehicles(instance, schedule) {
        if active > instance.fleet_size {
            v.push(Violation::Fleet {
                t,
                active,
                fleet: instance.fleet_size,
            });
        }
    }
    let has_train_error = v.iter().any(|x| matches!(x, Violation::TrainOrder { .. }));
    if !has_train_error && travel != schedule.objective_travel {
        v.push(Violation::TravelMismatch {
            stored: schedule.objective_travel,
            actual: travel,
        });
    }
    if schedule.objective_trips != schedule.groups.len() as i64 {
        v.push(Violation::TripsMismatch {
            stored: schedule.objective_trips,
            actual: schedule.groups.len() as i64,
        });
    }
    Ok(ValidationReport { violations: v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{example1, example1_path_p1, example1_path_p2};
    use crate::model::{Boarding, GroupTrip};

    #[test]
    fn p_prime_overloads_the_fleet_at_t4() {
        let inst = example1();
        let report = validate(&inst, &example1_path_p1(&inst)).unwrap();
        let fleet: Vec<_> = report.fleet_violations().cloned().collect();
        assert!(fleet.contains(&Violation::Fleet {
            t: 4,
            active: 3,
            fleet: 2
        }));
        assert!(report.violations.iter().all(|v| v.tag() == "fleet"));
    }

    #[test]
    fn p_double_prime_is_feasible() {
        let inst = example1();
        let s = example1_path_p2(&inst);
        let report = validate(&inst, &s).unwrap();
        assert!(report.is_feasible(), "{report:?}");
        let active = active_vehicles(&inst, &s);
        let counts: Vec<u32> = (0..=10)
            .map(|t| active.get(&t).copied().unwrap_or(0))
            .collect();
        assert_eq!(counts, vec![0, 0, 0, 1, 1, 2, 2, 2, 2, 1, 1]);
    }

    #[test]
    fn oversized_group_flags_capacity() {
        let inst = example1();
        let g = GroupTrip::with_best_trips(&inst, 0, 4, &[0, 1, 2, 3]).unwrap();
        let last = GroupTrip::with_best_trips(&inst, 0, 7, &[4]).unwrap();
        let s = Schedule::from_groups(&inst, vec![g, last]).unwrap();
        let report = validate(&inst, &s).unwrap();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::Capacity { size: 4, .. })));
    }

    #[test]
    fn coverage_window_and_train_checks() {
        let inst = example1();
        let s = Schedule {
            groups: vec![GroupTrip {
                destination: 0,
                depart: 3,
                members: vec![
                    Boarding {
                        passenger: 0,
                        trip: 1,
                    },
                    Boarding {
                        passenger: 4,
                        trip: 0,
                    },
                ],
            }],
            objective_travel: 0,
            objective_trips: 1,
        };
        let tags: Vec<_> = validate(&inst, &s)
            .unwrap()
            .violations
            .iter()
            .map(|v| v.tag())
            .collect();
        assert!(tags.contains(&"coverage"));
        assert!(tags.contains(&"time-window"));
        assert!(tags.contains(&"train-order"));
    }

    #[test]
    fn unknown_ids_are_structural_errors() {
        let inst = example1();
        let mut s = example1_path_p2(&inst);
        s.groups[0].members[0].passenger = 99;
        assert!(validate(&inst, &s).is_err());
        let mut s = example1_path_p2(&inst);
        s.groups[0].destination = 3;
        assert!(validate(&inst, &s).is_err());
    }

    #[test]
    fn stored_objective_must_match() {
        let inst = example1();
        let mut s = example1_path_p2(&inst);
        s.objective_travel += 1;
        let report = validate(&inst, &s).unwrap();
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].tag(), "objective");
    }
}
