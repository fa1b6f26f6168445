//! Per-destination decision diagrams.
//!
//! Layer `i` (1-based) decides passenger `i` of the destination's list sorted
//! by requested arrival. A node's state counts the passengers already opened
//! into the current group but not yet closed. A zero-arc adds the passenger to
//! that open group; a one-arc closes the group `{i - state, ..., i}` at a
//! concrete CV departure time. Every root-to-terminal path is therefore a
//! contiguous partition of the passengers together with departure times.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::fmt::Write as _;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::model::{best_trip, travel_time, Alpha, Instance, ModelError, Time, Value};

pub type NodeId = usize;
pub type ArcId = usize;

/// Default guard for the exhaustive partition check.
pub const ENUMERATION_LIMIT: usize = 15;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DdError {
    #[error("infeasible passenger {passenger}: no admissible CV departure time")]
    InfeasiblePassenger { passenger: usize },
    #[error("destination {destination} has no time table")]
    NoTimeTable { destination: usize },
    #[error("refusing to enumerate {passengers} passengers (limit {limit})")]
    EnumerationRefused { passengers: usize, limit: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DdNode {
    pub layer: usize,
    pub state: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneArc {
    pub start: Time,
    /// Summed travel time of the group's passengers.
    pub travel: i64,
    pub cost: f64,
    pub round_trip: Time,
}

impl OneArc {
    /// Last time unit the CV is away from the terminal.
    pub fn busy_until(&self) -> Time {
        self.start + self.round_trip - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArcKind {
    Zero,
    One(OneArc),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdArc {
    pub id: ArcId,
    pub from: NodeId,
    pub to: NodeId,
    pub kind: ArcKind,
}

impl DdArc {
    pub fn one(&self) -> Option<&OneArc> {
        match &self.kind {
            ArcKind::One(o) => Some(o),
            ArcKind::Zero => None,
        }
    }
}

/// A closed group on a path.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnGroup {
    pub members: Vec<usize>,
    pub depart: Time,
    pub travel: i64,
    pub round_trip: Time,
}

/// A root-to-terminal path, as a master-problem column.
#[derive(Debug, Clone, PartialEq)]
pub struct PathColumn {
    pub destination: usize,
    pub arcs: Vec<ArcId>,
    pub groups: Vec<ColumnGroup>,
    pub cost: f64,
    pub travel: i64,
    pub trips: i64,
    /// Number of this path's CVs away from the terminal at each time.
    pub occupancy: BTreeMap<Time, u32>,
}

impl PathColumn {
    pub fn exact_cost(&self, alpha: Alpha) -> Value {
        alpha.combine(self.travel, self.trips)
    }

    pub fn occupancy_at(&self, t: Time) -> u32 {
        self.occupancy.get(&t).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub struct DecisionDiagram {
    pub destination: usize,
    pub alpha: Alpha,
    pub capacity: usize,
    passengers: Vec<usize>,
    admissible: Vec<Vec<Time>>,
    nodes: Vec<DdNode>,
    arcs: Vec<DdArc>,
    out_arcs: Vec<Vec<ArcId>>,
    in_arcs: Vec<Vec<ArcId>>,
    root: NodeId,
    terminal: NodeId,
}

/// Earliest and latest CV departures letting `passenger` arrive within their
/// window, or `None` when the window is empty. The latest departure is also
/// clipped so the CV is back by the horizon.
pub fn departure_window(instance: &Instance, passenger: usize) -> Option<(Time, Time)> {
    let p = &instance.passengers[passenger];
    let dest = &instance.destinations[p.destination];
    let first_train = instance.earliest_arrival_serving(p.origin)?;
    let earliest = (p.requested_arrival - instance.window - dest.to_time).max(first_train);
    let latest = (p.requested_arrival + instance.window - dest.to_time)
        .min(instance.horizon - dest.round_trip());
    (earliest <= latest).then_some((earliest, latest))
}

/// Departure times admissible for `passenger` under departure-dependent travel times.
pub fn admissible_times(instance: &Instance, passenger: usize) -> Vec<Time> {
    let p = &instance.passengers[passenger];
    let dest = &instance.destinations[p.destination];
    let Some(first_train) = instance.earliest_arrival_serving(p.origin) else {
        return Vec::new();
    };
    (first_train.max(1)..=instance.horizon)
        .filter(|&t| {
            let arrival = t + dest.to_time_at(t);
            (arrival - p.requested_arrival).abs() <= instance.window
                && t + dest.round_trip_at(t) <= instance.horizon
        })
        .collect()
}

/// Cost of one CV trip carrying `members` and leaving at `depart`.
pub fn group_cost(
    instance: &Instance,
    members: &[usize],
    depart: Time,
    alpha: Alpha,
) -> Result<(i64, f64), ModelError> {
    let mut travel = 0;
    for &j in members {
        let c = best_trip(instance, j, depart)?;
        travel += travel_time(instance, j, depart, c)?;
    }
    let a = alpha.as_f64();
    Ok((travel, a * travel as f64 + (1.0 - a)))
}

fn intersect(a: &[Time], b: &[Time]) -> Vec<Time> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

/// Builds the diagram for `destination` with static CV travel times.
pub fn build(
    instance: &Instance,
    destination: usize,
    alpha: Alpha,
) -> Result<DecisionDiagram, DdError> {
    instance.destination(destination)?;
    let passengers = instance.sorted_passengers_for(destination);
    let mut admissible = Vec::with_capacity(passengers.len());
    for &j in &passengers {
        let (lo, hi) =
            departure_window(instance, j).ok_or(DdError::InfeasiblePassenger { passenger: j })?;
        admissible.push((lo..=hi).collect());
    }
    construct(instance, destination, alpha, passengers, admissible)
}

/// Builds the diagram using the destination's departure-dependent time table.
pub fn build_time_dependent(
    instance: &Instance,
    destination: usize,
    alpha: Alpha,
) -> Result<DecisionDiagram, DdError> {
    if !instance.destination(destination)?.is_time_dependent() {
        return Err(DdError::NoTimeTable { destination });
    }
    let passengers = instance.sorted_passengers_for(destination);
    let mut admissible = Vec::with_capacity(passengers.len());
    for &j in &passengers {
        let times = admissible_times(instance, j);
        if times.is_empty() {
            return Err(DdError::InfeasiblePassenger { passenger: j });
        }
        admissible.push(times);
    }
    construct(instance, destination, alpha, passengers, admissible)
}

/// One diagram per destination, time-dependent where a table is present.
pub fn build_all(instance: &Instance, alpha: Alpha) -> Result<Vec<DecisionDiagram>, DdError> {
    (0..instance.num_destinations())
        .map(|d| {
            if instance.destinations[d].is_time_dependent() {
                build_time_dependent(instance, d, alpha)
            } else {
                build(instance, d, alpha)
            }
        })
        .collect()
}

fn construct(
    instance: &Instance,
    destination: usize,
    alpha: Alpha,
    passengers: Vec<usize>,
    admissible: Vec<Vec<Time>>,
) -> Result<DecisionDiagram, DdError> {
    let n = passengers.len();
    let vcap = instance.cv_capacity as usize;
    let dest = &instance.destinations[destination];
    let mut nodes = vec![DdNode { layer: 1, state: 0 }];
    let mut arcs: Vec<DdArc> = Vec::new();
    // index[(layer - 1) * vcap + state]
    let mut index: Vec<Option<NodeId>> = vec![None; (n + 1) * vcap];
    index[0] = Some(0);
    for i in 1..=n {
        let zero_node = nodes.len();
        nodes.push(DdNode {
            layer: i + 1,
            state: 0,
        });
        index[i * vcap] = Some(zero_node);
        for k in 0..vcap.min(i) {
            let Some(u) = index[(i - 1) * vcap + k] else {
                continue;
            };
            let first = i - 1 - k;
            let common = admissible[first..i]
                .iter()
                .skip(1)
                .fold(admissible[first].clone(), |acc, times| {
                    intersect(&acc, times)
                });
            if k + 1 < vcap && i < n && !intersect(&common, &admissible[i]).is_empty() {
                let v = nodes.len();
                nodes.push(DdNode {
                    layer: i + 1,
                    state: k + 1,
                });
                index[i * vcap + k + 1] = Some(v);
                arcs.push(DdArc {
                    id: arcs.len(),
                    from: u,
                    to: v,
                    kind: ArcKind::Zero,
                });
            }
            let members = &passengers[first..i];
            for &t in &common {
                let (travel, cost) = group_cost(instance, members, t, alpha)?;
                arcs.push(DdArc {
                    id: arcs.len(),
                    from: u,
                    to: zero_node,
                    kind: ArcKind::One(OneArc {
                        start: t,
                        travel,
                        cost,
                        round_trip: dest.round_trip_at(t),
                    }),
                });
            }
        }
    }
    let terminal = index[n * vcap].expect("terminal node");
    Ok(prune(DecisionDiagram {
        destination,
        alpha,
        capacity: vcap,
        passengers,
        admissible,
        nodes,
        arcs,
        out_arcs: Vec::new(),
        in_arcs: Vec::new(),
        root: 0,
        terminal,
    }))
}

/// Drops nodes and arcs on no root-to-terminal path, renumbering in creation order.
fn prune(mut dd: DecisionDiagram) -> DecisionDiagram {
    let n_nodes = dd.nodes.len();
    let mut forward = vec![false; n_nodes];
    forward[dd.root] = true;
    for a in &dd.arcs {
        if forward[a.from] {
            forward[a.to] = true;
        }
    }
    let mut backward = vec![false; n_nodes];
    backward[dd.terminal] = true;
    for a in dd.arcs.iter().rev() {
        if backward[a.to] {
            backward[a.from] = true;
        }
    }
    let mut remap = vec![usize::MAX; n_nodes];
    let mut nodes = Vec::new();
    for (id, node) in dd.nodes.iter().enumerate() {
        if forward[id] && backward[id] {
            remap[id] = nodes.len();
            nodes.push(*node);
        }
    }
    let mut arcs = Vec::new();
    for a in &dd.arcs {
        if remap[a.from] != usize::MAX && remap[a.to] != usize::MAX {
            arcs.push(DdArc {
                id: arcs.len(),
                from: remap[a.from],
                to: remap[a.to],
                kind: a.kind,
            });
        }
    }
    dd.root = remap[dd.root];
    dd.terminal = remap[dd.terminal];
    dd.nodes = nodes;
    dd.arcs = arcs;
    dd.reindex();
    dd
}

impl DecisionDiagram {
    fn reindex(&mut self) {
        self.out_arcs = vec![Vec::new(); self.nodes.len()];
        self.in_arcs = vec![Vec::new(); self.nodes.len()];
        for a in &self.arcs {
            self.out_arcs[a.from].push(a.id);
            self.in_arcs[a.to].push(a.id);
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.len()
    }

    pub fn nodes(&self) -> &[DdNode] {
        &self.nodes
    }

    pub fn arcs(&self) -> &[DdArc] {
        &self.arcs
    }

    pub fn arc(&self, id: ArcId) -> &DdArc {
        &self.arcs[id]
    }

    pub fn node(&self, id: NodeId) -> DdNode {
        self.nodes[id]
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn terminal(&self) -> NodeId {
        self.terminal
    }

    pub fn out_arcs(&self, node: NodeId) -> &[ArcId] {
        &self.out_arcs[node]
    }

    pub fn in_arcs(&self, node: NodeId) -> &[ArcId] {
        &self.in_arcs[node]
    }

    /// Passenger ids in layer order.
    pub fn passengers(&self) -> &[usize] {
        &self.passengers
    }

    /// Admissible departure times per passenger, in layer order.
    pub fn admissible(&self) -> &[Vec<Time>] {
        &self.admissible
    }

    pub fn one_arcs(&self) -> impl Iterator<Item = (&DdArc, &OneArc)> {
        self.arcs.iter().filter_map(|a| a.one().map(|o| (a, o)))
    }

    /// Passengers closed by arc `id` (empty for zero-arcs).
    pub fn group_of(&self, id: ArcId) -> &[usize] {
        let a = &self.arcs[id];
        if a.one().is_none() {
            return &[];
        }
        let u = self.nodes[a.from];
        &self.passengers[u.layer - 1 - u.state..u.layer]
    }

    /// Arc costs as lengths (zero on zero-arcs).
    pub fn cost_lengths(&self) -> Vec<f64> {
        self.arcs
            .iter()
            .map(|a| a.one().map_or(0.0, |o| o.cost))
            .collect()
    }

    pub fn count_paths(&self) -> BigUint {
        let mut count = vec![BigUint::zero(); self.nodes.len()];
        count[self.root] = BigUint::one();
        for a in &self.arcs {
            let c = count[a.from].clone();
            count[a.to] += c;
        }
        count[self.terminal].clone()
    }

    /// Materializes the column for a root-to-terminal arc sequence.
    pub fn column(&self, arcs: Vec<ArcId>) -> PathColumn {
        let mut groups = Vec::new();
        let mut occupancy = BTreeMap::new();
        let (mut cost, mut travel) = (0.0, 0);
        for &id in &arcs {
            if let Some(o) = self.arcs[id].one() {
                groups.push(ColumnGroup {
                    members: self.group_of(id).to_vec(),
                    depart: o.start,
                    travel: o.travel,
                    round_trip: o.round_trip,
                });
                cost += o.cost;
                travel += o.travel;
                for t in o.start..=o.busy_until() {
                    *occupancy.entry(t).or_insert(0) += 1;
                }
            }
        }
        PathColumn {
            destination: self.destination,
            trips: groups.len() as i64,
            arcs,
            groups,
            cost,
            travel,
            occupancy,
        }
    }

    /// Minimum-length path to the terminal from every node.
    fn distances_to_terminal(&self, lengths: &[f64]) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.nodes.len()];
        dist[self.terminal] = 0.0;
        for a in self.arcs.iter().rev() {
            let via = lengths[a.id] + dist[a.to];
            if via < dist[a.from] {
                dist[a.from] = via;
            }
        }
        dist
    }

    /// Shortest root-to-terminal path; ties go to the lexicographically
    /// smallest arc-id sequence.
    pub fn shortest_path(&self, lengths: &[f64]) -> (PathColumn, f64) {
        assert_eq!(lengths.len(), self.arcs.len(), "one length per arc");
        let dist = self.distances_to_terminal(lengths);
        let mut path = Vec::new();
        let mut u = self.root;
        while u != self.terminal {
            let next = self.out_arcs[u]
                .iter()
                .copied()
                .find(|&a| lengths[a] + dist[self.arcs[a].to] == dist[u])
                .expect("connected diagram");
            path.push(next);
            u = self.arcs[next].to;
        }
        (self.column(path), dist[self.root])
    }

    /// Paths in nondecreasing length order, lazily.
    pub fn paths_by_length<'a>(&'a self, lengths: &'a [f64]) -> PathEnumerator<'a> {
        assert_eq!(lengths.len(), self.arcs.len(), "one length per arc");
        let to_go = self.distances_to_terminal(lengths);
        let mut heap = BinaryHeap::new();
        heap.push(Reverse(Partial {
            bound: to_go[self.root],
            so_far: 0.0,
            node: self.root,
            arcs: Vec::new(),
        }));
        PathEnumerator {
            dd: self,
            lengths,
            to_go,
            heap,
        }
    }

    /// The `k` shortest paths (fewer if the diagram has fewer).
    pub fn k_shortest_paths(&self, lengths: &[f64], k: usize) -> Vec<(PathColumn, f64)> {
        self.paths_by_length(lengths).take(k).collect()
    }

    /// Finds the arc sequence realizing `groups` (as layer positions and departure times).
    pub fn find_path(&self, groups: &[(usize, usize, Time)]) -> Option<Vec<ArcId>> {
        let mut path = Vec::new();
        let mut u = self.root;
        for &(first, last, t) in groups {
            if self.nodes[u].layer != first + 1 || self.nodes[u].state != 0 {
                return None;
            }
            for _ in first..last {
                let z = self.out_arcs[u]
                    .iter()
                    .copied()
                    .find(|&a| self.arcs[a].one().is_none())?;
                path.push(z);
                u = self.arcs[z].to;
            }
            let one = self.out_arcs[u]
                .iter()
                .copied()
                .find(|&a| self.arcs[a].one().is_some_and(|o| o.start == t))?;
            path.push(one);
            u = self.arcs[one].to;
        }
        (u == self.terminal).then_some(path)
    }

    /// Graphviz rendering; one-arcs are labeled `(t, travel)`.
    pub fn to_dot(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "digraph dd_{} {{", self.destination);
        for (id, n) in self.nodes.iter().enumerate() {
            let _ = writeln!(s, "  n{id} [label=\"u_{}^{}\"];", n.layer, n.state);
        }
        for a in &self.arcs {
            match a.one() {
                Some(o) => {
                    let _ = writeln!(
                        s,
                        "  n{} -> n{} [label=\"({},{})\"];",
                        a.from, a.to, o.start, o.travel
                    );
                }
                None => {
                    let _ = writeln!(s, "  n{} -> n{} [style=dashed];", a.from, a.to);
                }
            }
        }
        s.push_str("}\n");
        s
    }
}

#[derive(Debug, Clone)]
struct Partial {
    bound: f64,
    so_far: f64,
    node: NodeId,
    arcs: Vec<ArcId>,
}

impl PartialEq for Partial {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Partial {}

impl PartialOrd for Partial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Partial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| self.arcs.cmp(&other.arcs))
    }
}

/// Best-first enumeration with the exact distance-to-terminal as heuristic.
pub struct PathEnumerator<'a> {
    dd: &'a DecisionDiagram,
    lengths: &'a [f64],
    to_go: Vec<f64>,
    heap: BinaryHeap<Reverse<Partial>>,
}

impl Iterator for PathEnumerator<'_> {
    type Item = (PathColumn, f64);

    fn next(&mut self) -> Option<Self::Item> {
        while let Some(Reverse(p)) = self.heap.pop() {
            if p.node == self.dd.terminal {
                return Some((self.dd.column(p.arcs), p.so_far));
            }
            for &a in &self.dd.out_arcs[p.node] {
                let to = self.dd.arcs[a].to;
                let so_far = p.so_far + self.lengths[a];
                let mut arcs = p.arcs.clone();
                arcs.push(a);
                self.heap.push(Reverse(Partial {
                    bound: so_far + self.to_go[to],
                    so_far,
                    node: to,
                    arcs,
                }));
            }
        }
        None
    }
}

/// A contiguous group that the diagram fails to offer at time `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissingGroup {
    pub partition: Vec<Vec<usize>>,
    pub group: Vec<usize>,
    pub t: Time,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PropertyReport {
    /// Structural faults breaking the one-group-per-passenger property.
    pub partition_faults: Vec<String>,
    /// One-arcs whose start time misses a member's window.
    pub window_faults: Vec<String>,
    /// Feasible contiguous groupings with no matching path.
    pub missing: Vec<MissingGroup>,
}

impl PropertyReport {
    pub fn holds(&self) -> bool {
        self.partition_faults.is_empty() && self.window_faults.is_empty() && self.missing.is_empty()
    }
}

/// Independent scan of the departure times a set of passengers can share.
fn shared_times(instance: &Instance, members: &[usize]) -> Vec<Time> {
    let dest = &instance.destinations[instance.passengers[members[0]].destination];
    (1..=instance.horizon)
        .filter(|&t| {
            t + dest.round_trip_at(t) <= instance.horizon
                && members.iter().all(|&j| {
                    let p = &instance.passengers[j];
                    (t + dest.to_time_at(t) - p.requested_arrival).abs() <= instance.window
                        && best_trip(instance, j, t).is_ok()
                })
        })
        .collect()
}

/// Checks the partition, window and completeness properties of `dd`.
pub fn check_properties(
    instance: &Instance,
    dd: &DecisionDiagram,
    limit: usize,
) -> Result<PropertyReport, DdError> {
    let n = dd.passengers.len();
    if n > limit {
        return Err(DdError::EnumerationRefused {
            passengers: n,
            limit,
        });
    }
    let mut report = PropertyReport::default();
    let vcap = instance.cv_capacity as usize;
    let dest = &instance.destinations[dd.destination];
    let mut fault = |msg: String| report.partition_faults.push(msg);

    let root = dd.nodes[dd.root];
    let term = dd.nodes[dd.terminal];
    if root != (DdNode { layer: 1, state: 0 })
        || term
            != (DdNode {
                layer: n + 1,
                state: 0,
            })
    {
        fault(format!("root {root:?} / terminal {term:?} misplaced"));
    }
    for (id, node) in dd.nodes.iter().enumerate() {
        if (node.layer == 1 || node.layer == n + 1) && id != dd.root && id != dd.terminal {
            fault(format!("extra node {node:?} in an end layer"));
        }
        if node.state >= vcap || node.state + 1 > node.layer {
            fault(format!("node {node:?} has impossible state"));
        }
        if id != dd.root && dd.in_arcs[id].is_empty()
            || id != dd.terminal && dd.out_arcs[id].is_empty()
        {
            fault(format!("node {node:?} lies on no path"));
        }
    }
    for a in &dd.arcs {
        let (u, v) = (dd.nodes[a.from], dd.nodes[a.to]);
        if u.layer + 1 != v.layer {
            fault(format!("arc {} skips layers", a.id));
        }
        match a.one() {
            None if v.state != u.state + 1 => fault(format!("zero-arc {} breaks state", a.id)),
            Some(_) if v.state != 0 => fault(format!("one-arc {} does not close", a.id)),
            _ => {}
        }
    }
    for (a, o) in dd.one_arcs() {
        for &j in dd.group_of(a.id) {
            let p = &instance.passengers[j];
            let arrival = o.start + dest.to_time_at(o.start);
            if p.destination != dd.destination
                || (arrival - p.requested_arrival).abs() > instance.window
            {
                report.window_faults.push(format!(
                    "arc {} start {} misses passenger {j}",
                    a.id, o.start
                ));
            }
        }
    }

    let order = &dd.passengers;
    let mut partition: Vec<(usize, usize)> = Vec::new();
    enumerate_contiguous(order, 0, vcap, &mut partition, &mut |groups| {
        let spans: Vec<(usize, usize, Vec<Time>)> = groups
            .iter()
            .map(|&(a, b)| (a, b, shared_times(instance, &order[a..=b])))
            .collect();
        if spans.iter().any(|(_, _, ts)| ts.is_empty()) {
            return;
        }
        let named: Vec<Vec<usize>> = groups.iter().map(|&(a, b)| order[a..=b].to_vec()).collect();
        let mut u = dd.root;
        for (gi, (a, b, ts)) in spans.iter().enumerate() {
            let mut v = Some(u);
            for _ in *a..*b {
                v = v.and_then(|x| {
                    dd.out_arcs[x]
                        .iter()
                        .find(|&&z| dd.arcs[z].one().is_none())
                        .map(|&z| dd.arcs[z].to)
                });
            }
            let mut next = None;
            for &t in ts {
                let hit = v.and_then(|x| {
                    dd.out_arcs[x]
                        .iter()
                        .find(|&&z| dd.arcs[z].one().is_some_and(|o| o.start == t))
                });
                match hit {
                    Some(&z) => next = Some(dd.arcs[z].to),
                    None => report.missing.push(MissingGroup {
                        partition: named.clone(),
                        group: named[gi].clone(),
                        t,
                    }),
                }
            }
            match next {
                Some(x) => u = x,
                None => return,
            }
        }
    });
    Ok(report)
}

/// Calls `visit` with every partition of `order[start..]` into runs of at most `vcap`.
fn enumerate_contiguous(
    order: &[usize],
    start: usize,
    vcap: usize,
    partition: &mut Vec<(usize, usize)>,
    visit: &mut dyn FnMut(&[(usize, usize)]),
) {
    if start == order.len() {
        visit(partition);
        return;
    }
    for len in 1..=vcap.min(order.len() - start) {
        partition.push((start, start + len - 1));
        enumerate_contiguous(order, start + len, vcap, partition, visit);
        partition.pop();
    }
}

/// Brute-force count of contiguous partitions times shared departure vectors.
pub fn count_groupings(instance: &Instance, destination: usize) -> BigUint {
    let order = instance.sorted_passengers_for(destination);
    let n = order.len();
    let vcap = instance.cv_capacity as usize;
    let mut ways: HashMap<usize, BigUint> = HashMap::new();
    ways.insert(n, BigUint::one());
    for start in (0..n).rev() {
        let mut total = BigUint::zero();
        for len in 1..=vcap.min(n - start) {
            let times = shared_times(instance, &order[start..start + len]).len();
            total += ways[&(start + len)].clone() * BigUint::from(times);
        }
        ways.insert(start, total);
    }
    ways.remove(&0).unwrap_or_else(BigUint::one)
}
