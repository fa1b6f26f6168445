//! Exhaustive reference solvers.
//!
//! Both solvers list, per destination, every partition of its passengers into
//! CV groups together with every vector of shared departure times, then pick
//! one option per destination minimizing the objective subject to the fleet
//! limit. The contiguous solver only considers runs of the arrival-sorted
//! passenger list; the unrestricted one considers all set partitions.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::model::{Alpha, Boarding, GroupTrip, Instance, ModelError, Schedule, Time, Value};

pub const DEFAULT_BUDGET: u64 = 10_000_000;
pub const UNRESTRICTED_LIMIT: usize = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("{count} candidate groupings exceed the budget of {budget}")]
    BudgetExceeded { count: u64, budget: u64 },
    #[error("destination {destination} has {passengers} passengers, limit is {limit}")]
    TooLarge {
        destination: usize,
        passengers: usize,
        limit: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleSolution {
    pub schedule: Schedule,
    pub value: Value,
}

/// Train choice with the shortest travel for a CV leaving at `t`, if any.
fn ride(instance: &Instance, j: usize, t: Time) -> Option<(usize, i64)> {
    let p = &instance.passengers[j];
    let dest = &instance.destinations[p.destination];
    instance
        .trips
        .iter()
        .filter(|c| c.terminal_arrival <= t)
        .filter_map(|c| {
            c.departures
                .get(&p.origin)
                .map(|&dep| (c.id, t + dest.to_time_at(t) - dep))
        })
        .min_by_key(|&(id, w)| (w, id))
}

/// Departure times every member of `group` can share.
pub fn group_times(instance: &Instance, group: &[usize]) -> Vec<Time> {
    let dest = &instance.destinations[instance.passengers[group[0]].destination];
    (1..=instance.horizon)
        .filter(|&t| t + dest.round_trip_at(t) <= instance.horizon)
        .filter(|&t| {
            group.iter().all(|&j| {
                let r = instance.passengers[j].requested_arrival;
                (t + dest.to_time_at(t) - r).abs() <= instance.window
                    && ride(instance, j, t).is_some()
            })
        })
        .collect()
}

/// One group of a candidate partition and its admissible departures,
/// cheapest first.
#[derive(Debug, Clone)]
struct GroupOptions {
    members: Vec<usize>,
    /// `(cost, departure, travel)`
    times: Vec<(Value, Time, i64)>,
}

#[derive(Debug, Clone)]
struct Candidate {
    floor: Value,
    groups: Vec<GroupOptions>,
}

/// Every set partition of `order` into blocks of at most `vcap`.
fn partitions(order: &[usize], vcap: usize) -> Vec<Vec<Vec<usize>>> {
    fn rec(
        order: &[usize],
        at: usize,
        vcap: usize,
        cur: &mut Vec<Vec<usize>>,
        out: &mut Vec<Vec<Vec<usize>>>,
    ) {
        if at == order.len() {
            out.push(cur.clone());
            return;
        }
        for g in 0..cur.len() {
            if cur[g].len() < vcap {
                cur[g].push(order[at]);
                rec(order, at + 1, vcap, cur, out);
                cur[g].pop();
            }
        }
        cur.push(vec![order[at]]);
        rec(order, at + 1, vcap, cur, out);
        cur.pop();
    }
    let mut out = Vec::new();
    rec(order, 0, vcap, &mut Vec::new(), &mut out);
    out
}

fn group_options(instance: &Instance, alpha: Alpha, members: Vec<usize>) -> GroupOptions {
    let mut times: Vec<(Value, Time, i64)> = group_times(instance, &members)
        .into_iter()
        .map(|t| {
            let travel: i64 = members
                .iter()
                .map(|&j| ride(instance, j, t).expect("admissible").1)
                .sum();
            (alpha.combine(travel, 1), t, travel)
        })
        .collect();
    times.sort();
    GroupOptions { members, times }
}

fn candidate(groups: Vec<GroupOptions>) -> Candidate {
    let floor = groups.iter().map(|g| g.times[0].0).sum();
    Candidate { floor, groups }
}

/// Contiguous candidates, counted by a suffix recursion before any are built
/// so oversized destinations are refused cheaply.
fn contiguous_candidates(
    instance: &Instance,
    alpha: Alpha,
    destination: usize,
    budget: u64,
) -> (Option<Vec<Candidate>>, u64) {
    let order = instance.sorted_passengers_for(destination);
    let n = order.len();
    let vcap = instance.cv_capacity as usize;
    // runs[i][len - 1]: the run of `len` passengers starting at position i
    let runs: Vec<Vec<GroupOptions>> = (0..n)
        .map(|i| {
            (1..=vcap.min(n - i))
                .map(|len| group_options(instance, alpha, order[i..i + len].to_vec()))
                .collect()
        })
        .collect();
    let mut count = vec![0u64; n + 1];
    count[n] = 1;
    for i in (0..n).rev() {
        count[i] = runs[i].iter().enumerate().fold(0u64, |acc, (l, g)| {
            acc.saturating_add((g.times.len() as u64).saturating_mul(count[i + l + 1]))
        });
    }
    if count[0] > budget {
        return (None, count[0]);
    }
    fn rec(
        runs: &[Vec<GroupOptions>],
        count: &[u64],
        at: usize,
        cur: &mut Vec<GroupOptions>,
        out: &mut Vec<Candidate>,
    ) {
        if at == runs.len() {
            out.push(candidate(cur.clone()));
            return;
        }
        for (l, g) in runs[at].iter().enumerate() {
            if g.times.is_empty() || count[at + l + 1] == 0 {
                continue;
            }
            cur.push(g.clone());
            rec(runs, count, at + l + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(&runs, &count, 0, &mut Vec::new(), &mut out);
    sort_candidates(&mut out);
    (Some(out), count[0])
}

fn sort_candidates(out: &mut [Candidate]) {
    out.sort_by(|a, b| {
        a.floor.cmp(&b.floor).then_with(|| {
            let ka = a.groups.iter().map(|g| &g.members);
            let kb = b.groups.iter().map(|g| &g.members);
            ka.cmp(kb)
        })
    });
}

fn all_candidates(instance: &Instance, alpha: Alpha, destination: usize) -> (Vec<Candidate>, u64) {
    let order = instance.sorted_passengers_for(destination);
    let mut out = Vec::new();
    let mut count = 0u64;
    for partition in partitions(&order, instance.cv_capacity as usize) {
        let groups: Vec<GroupOptions> = partition
            .into_iter()
            .map(|members| group_options(instance, alpha, members))
            .collect();
        let vectors = groups
            .iter()
            .map(|g| g.times.len() as u64)
            .fold(1u64, |a, b| a.saturating_mul(b));
        count = count.saturating_add(vectors);
        if vectors > 0 {
            out.push(candidate(groups));
        }
    }
    sort_candidates(&mut out);
    (out, count)
}

/// Per-destination admission test on `(members, departure)` groups.
pub type ChoiceFilter<'f> = &'f dyn Fn(usize, &[(Vec<usize>, Time)]) -> bool;

struct Search<'a> {
    instance: &'a Instance,
    filter: Option<ChoiceFilter<'a>>,
    candidates: &'a [Vec<Candidate>],
    /// Lower bound on the cost of destinations `d..`.
    floor: Vec<Value>,
    occupancy: Vec<u32>,
    fleet: u32,
    picked: Vec<(usize, Vec<usize>)>,
    best: Option<(Value, Vec<(usize, Vec<usize>)>)>,
}

impl Search<'_> {
    fn beaten(&self, bound: Value) -> bool {
        self.best.as_ref().is_some_and(|(b, _)| bound >= *b)
    }

    fn destination(&mut self, d: usize, value: Value) {
        if d == self.candidates.len() {
            if !self.beaten(value) {
                self.best = Some((value, self.picked.clone()));
            }
            return;
        }
        for k in 0..self.candidates[d].len() {
            let c = &self.candidates[d][k];
            if self.beaten(value + c.floor + self.floor[d + 1]) {
                break;
            }
            self.picked.push((k, Vec::with_capacity(c.groups.len())));
            self.group(d, k, 0, value);
            self.picked.pop();
        }
    }

    fn group(&mut self, d: usize, k: usize, g: usize, value: Value) {
        let candidates = self.candidates;
        let c = &candidates[d][k];
        if g == c.groups.len() {
            if let Some(f) = self.filter {
                let times = &self.picked.last().expect("open destination").1;
                let chosen: Vec<(Vec<usize>, Time)> = c
                    .groups
                    .iter()
                    .zip(times)
                    .map(|(x, &i)| (x.members.clone(), x.times[i].1))
                    .collect();
                if !f(d, &chosen) {
                    return;
                }
            }
            self.destination(d + 1, value);
            return;
        }
        let rest: Value = c.groups[g + 1..].iter().map(|x| x.times[0].0).sum();
        for (i, &(cost, t, _)) in c.groups[g].times.iter().enumerate() {
            if self.beaten(value + cost + rest + self.floor[d + 1]) {
                break;
            }
            let end = t + self.instance.destinations[d].round_trip_at(t) - 1;
            if (t..=end).any(|s| self.occupancy[s as usize] >= self.fleet) {
                continue;
            }
            for s in t..=end {
                self.occupancy[s as usize] += 1;
            }
            self.picked.last_mut().expect("open destination").1.push(i);
            self.group(d, k, g + 1, value + cost);
            self.picked.last_mut().expect("open destination").1.pop();
            for s in t..=end {
                self.occupancy[s as usize] -= 1;
            }
        }
    }
}
fn solve(
    instance: &Instance,
    alpha: Alpha,
    contiguous: bool,
    budget: u64,
    filter: Option<ChoiceFilter<'_>>,
) -> Result<Option<OracleSolution>, OracleError> {
    let k = instance.num_destinations();
    let mut candidates = Vec::with_capacity(k);
    let mut count = 0u64;
    for d in 0..k {
        let (c, n) = if contiguous {
            contiguous_candidates(instance, alpha, d, budget.saturating_sub(count))
        } else {
            let (c, n) = all_candidates(instance, alpha, d);
            (Some(c), n)
        };
        count = count.saturating_add(n);
        match c {
            Some(c) if count <= budget => candidates.push(c),
            _ => return Err(OracleError::BudgetExceeded { count, budget }),
        }
    }
    if count > budget {
        return Err(OracleError::BudgetExceeded { count, budget });
    }
    let mut floor = vec![Value::zero(); k + 1];
    for d in (0..k).rev() {
        let Some(c) = candidates[d].first() else {
            return Ok(None);
        };
        floor[d] = floor[d + 1] + c.floor;
    }
    let mut search = Search {
        instance,
        filter,
        candidates: &candidates,
        floor,
        occupancy: vec![0; instance.horizon.max(0) as usize + 2],
        fleet: instance.fleet_size,
        picked: Vec::new(),
        best: None,
    };
    search.destination(0, Value::zero());
    let Some((value, picked)) = search.best else {
        return Ok(None);
    };
    let mut groups = Vec::new();
    for (d, (k, times)) in picked.iter().enumerate() {
        for (g, &i) in candidates[d][*k].groups.iter().zip(times) {
            let t = g.times[i].1;
            groups.push(GroupTrip {
                destination: d,
                depart: t,
                members: g
                    .members
                    .iter()
                    .map(|&j| Boarding {
                        passenger: j,
                        trip: ride(instance, j, t).expect("admissible").0,
                    })
                    .collect(),
            });
        }
    }
    let mut schedule = Schedule::from_groups(instance, groups)?;
    schedule.canonicalize();
    Ok(Some(OracleSolution { schedule, value }))
}

/// Exact optimum over contiguous groupings; `None` when infeasible.
pub fn solve_contiguous(
    instance: &Instance,
    alpha: Alpha,
    budget: u64,
) -> Result<Option<OracleSolution>, OracleError> {
    solve(instance, alpha, true, budget, None)
}

/// Contiguous optimum restricted to per-destination choices accepted by `filter`.
pub fn solve_contiguous_filtered(
    instance: &Instance,
    alpha: Alpha,
    budget: u64,
    filter: ChoiceFilter<'_>,
) -> Result<Option<OracleSolution>, OracleError> {
    solve(instance, alpha, true, budget, Some(filter))
}

/// Exact optimum over all groupings; `None` when infeasible.
pub fn solve_unrestricted(
    instance: &Instance,
    alpha: Alpha,
) -> Result<Option<OracleSolution>, OracleError> {
    for d in 0..instance.num_destinations() {
        let passengers = instance.passengers_for(d).len();
        if passengers > UNRESTRICTED_LIMIT {
            return Err(OracleError::TooLarge {
                destination: d,
                passengers,
                limit: UNRESTRICTED_LIMIT,
            });
        }
    }
    solve(instance, alpha, false, u64::MAX, None)
}

/// Ordered partitions of `n` into parts of size at most `vcap`.
pub fn phi(n: usize, vcap: usize) -> BigUint {
    let mut f = vec![BigUint::zero(); n + 1];
    f[0] = BigUint::one();
    for k in 1..=n {
        for i in 1..=vcap.min(k) {
            let prev = f[k - i].clone();
            f[k] += prev;
        }
    }
    f[n].clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dd;
    use crate::fixtures::example1;
    use crate::instgen::{generate_tiny, TinyConfig};
    use crate::validate::validate;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn value(v: i64) -> Value {
        Value::from_integer(v)
    }

    #[test]
    fn example_optima() {
        let inst = example1();
        let s = solve_contiguous(&inst, Alpha::ONE, DEFAULT_BUDGET)
            .unwrap()
            .unwrap();
        assert_eq!(s.value, value(22));
        assert!(validate(&inst, &s.schedule).unwrap().is_feasible());
        let s = solve_contiguous(&inst, Alpha::ZERO, DEFAULT_BUDGET)
            .unwrap()
            .unwrap();
        assert_eq!(s.value, value(2));
        assert_eq!(s.schedule.objective_trips, 2);
        let u = solve_unrestricted(&inst, Alpha::ONE).unwrap().unwrap();
        assert_eq!(u.value, value(22));
    }

    #[test]
    fn witness_is_deterministic() {
        let inst = example1();
        let a = solve_contiguous(&inst, Alpha::new(1, 2).unwrap(), DEFAULT_BUDGET).unwrap();
        let b = solve_contiguous(&inst, Alpha::new(1, 2).unwrap(), DEFAULT_BUDGET).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn no_fleet_is_infeasible() {
        let mut inst = example1();
        inst.fleet_size = 0;
        assert_eq!(
            solve_contiguous(&inst, Alpha::ONE, DEFAULT_BUDGET).unwrap(),
            None
        );
        assert_eq!(solve_unrestricted(&inst, Alpha::ONE).unwrap(), None);
    }

    #[test]
    fn refusals() {
        let inst = example1();
        assert!(matches!(
            solve_contiguous(&inst, Alpha::ONE, 10),
            Err(OracleError::BudgetExceeded {
                count: 524,
                budget: 10
            })
        ));
        let mut big = example1();
        for id in 5..11 {
            let mut p = big.passengers[0].clone();
            p.id = id;
            big.passengers.push(p);
        }
        assert!(matches!(
            solve_unrestricted(&big, Alpha::ONE),
            Err(OracleError::TooLarge { .. })
        ));
    }

    #[test]
    fn single_passenger_agrees() {
        let mut inst = example1();
        inst.passengers.truncate(1);
        let c = solve_contiguous(&inst, Alpha::ONE, DEFAULT_BUDGET).unwrap();
        let u = solve_unrestricted(&inst, Alpha::ONE).unwrap();
        assert_eq!(c, u);
        assert_eq!(c.unwrap().value, value(4));
    }

    #[test]
    fn phi_values() {
        assert_eq!(phi(0, 3), BigUint::one());
        assert_eq!(phi(1, 2), BigUint::from(1u32));
        assert_eq!(phi(2, 2), BigUint::from(2u32));
        assert_eq!(phi(5, 2), BigUint::from(8u32));
        let (mut a, mut b) = (BigUint::zero(), BigUint::one());
        for n in 0..60 {
            // b is Fibonacci F(n + 1)
            assert_eq!(phi(n, 2), b);
            let next = &a + &b;
            a = b;
            b = next;
        }
    }

    #[test]
    fn one_time_per_group_diagram_counts_phi() {
        for n in 1..=9 {
            for vcap in 1..=4u32 {
                let mut inst = example1();
                inst.window = 0;
                inst.cv_capacity = vcap;
                inst.passengers = (0..n)
                    .map(|id| crate::model::Passenger {
                        id,
                        origin: 1,
                        destination: 0,
                        requested_arrival: 6,
                    })
                    .collect();
                let d = dd::build(&inst, 0, Alpha::ONE).unwrap();
                assert_eq!(d.count_paths(), phi(n, vcap as usize), "n={n} vcap={vcap}");
            }
        }
    }

    #[test]
    fn contiguous_equals_unrestricted_on_tiny_instances() {
        let cfg = TinyConfig::default();
        let mut compared = 0;
        for seed in 0..100 {
            let inst = generate_tiny(seed, &cfg);
            if (0..inst.num_destinations())
                .any(|d| inst.passengers_for(d).len() > UNRESTRICTED_LIMIT)
            {
                continue;
            }
            compared += 1;
            let alpha = Alpha::new((seed % 3) as i64, 2).unwrap();
            let c = solve_contiguous(&inst, alpha, u64::MAX).unwrap();
            let u = solve_unrestricted(&inst, alpha).unwrap();
            assert_eq!(
                c.as_ref().map(|s| s.value),
                u.as_ref().map(|s| s.value),
                "seed {seed}"
            );
            if let Some(s) = c {
                assert!(
                    validate(&inst, &s.schedule).unwrap().is_feasible(),
                    "seed {seed}"
                );
                assert_eq!(crate::model::objective(&s.schedule, alpha), s.value);
            }
        }
        assert!(compared >= 90, "{compared}");
    }

    #[test]
    fn optimum_beats_random_feasible_schedules() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = TinyConfig::default();
        let mut feasible = 0;
        for seed in 0..30 {
            let inst = generate_tiny(seed, &cfg);
            let alpha = Alpha::new(1, 3).unwrap();
            let Some(best) = solve_contiguous(&inst, alpha, u64::MAX).unwrap() else {
                continue;
            };
            for _ in 0..50 {
                let mut groups = Vec::new();
                for d in 0..inst.num_destinations() {
                    let mut order = inst.passengers_for(d);
                    order.shuffle(&mut rng);
                    while !order.is_empty() {
                        let size = rng.gen_range(1..=order.len().min(inst.cv_capacity as usize));
                        let g: Vec<usize> = order.drain(..size).collect();
                        let times = group_times(&inst, &g);
                        if times.is_empty() {
                            continue;
                        }
                        let t = times[rng.gen_range(0..times.len())];
                        groups.push(GroupTrip::with_best_trips(&inst, d, t, &g).unwrap());
                    }
                }
                let Ok(s) = Schedule::from_groups(&inst, groups) else {
                    continue;
                };
                if validate(&inst, &s).unwrap().is_feasible() {
                    feasible += 1;
                    assert!(best.value <= crate::model::objective(&s, alpha));
                }
            }
        }
        assert!(
            feasible >= 100,
            "only {feasible} random schedules were feasible"
        );
    }
}
