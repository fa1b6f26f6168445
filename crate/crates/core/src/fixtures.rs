//! The five-passenger, single-destination worked example used throughout the
//! tests: `tau' = 2, tau_hat = 0, tau'' = 2`, `Tw = 1`, `m = 2`, `vcap = 3`,
//! requested arrivals 5, 6, 6, 7, 9, trains reaching the terminal at 2 and 6
//! after leaving the shared origin at 0 and 4.

use std::collections::BTreeMap;

use crate::model::{Destination, GroupTrip, Instance, Passenger, Schedule, TransitTrip};

pub fn example1() -> Instance {
    let trips = [(0, 2), (4, 6)]
        .iter()
        .enumerate()
        .map(|(id, &(dep, arr))| TransitTrip {
            id,
            departures: BTreeMap::from([(1, dep)]),
            terminal_arrival: arr,
        })
        .collect();
    let passengers = [5, 6, 6, 7, 9]
        .iter()
        .enumerate()
        .map(|(id, &r)| Passenger {
            id,
            origin: 1,
            destination: 0,
            requested_arrival: r,
        })
        .collect();
    Instance {
        trips,
        destinations: vec![Destination::new(0, 2, 0, 2)],
        passengers,
        fleet_size: 2,
        cv_capacity: 3,
        window: 1,
        horizon: 12,
    }
}

fn schedule(instance: &Instance, groups: &[(&[usize], i64)]) -> Schedule {
    let groups = groups
        .iter()
        .map(|(members, t)| GroupTrip::with_best_trips(instance, 0, *t, members).expect("fixture"))
        .collect();
    Schedule::from_groups(instance, groups).expect("fixture")
}

/// Everyone alone, leaving at 2, 3, 3, 6, 6. Overloads the fleet.
pub fn example1_path_p1(instance: &Instance) -> Schedule {
    schedule(
        instance,
        &[(&[0], 2), (&[1], 3), (&[2], 3), (&[3], 6), (&[4], 6)],
    )
}

/// Groups {1,2}@3, {3,4}@5, {5}@7. Feasible.
pub fn example1_path_p2(instance: &Instance) -> Schedule {
    schedule(instance, &[(&[0, 1], 3), (&[2, 3], 5), (&[4], 7)])
}
