//! Branch-and-price over decision-diagram path columns.
//!
//! The restricted master has one convexity row per destination and one fleet
//! row per time unit. Pricing runs a shortest path on each destination's
//! diagram with arc lengths adjusted by the fleet duals. Branching fixes the
//! most fractional column out (child one) or in (child two).

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::dd::{self, ArcId, DdError, DecisionDiagram, PathColumn};
use crate::lp::{LpError, LpSolution, LpStatus, LpTableau, Sense, TOL_OPT};
use crate::model::{objective, Alpha, GroupTrip, Instance, Schedule, Time, Value};
use crate::validate::validate;

const TOL_INT: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BpError {
    #[error(transparent)]
    Dd(#[from] DdError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("column generation did not converge within {rounds} rounds")]
    RoundLimit { rounds: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NodeOrder {
    #[default]
    BestBound,
    DepthFirst,
}

#[derive(Debug, Clone)]
pub struct Limits {
    pub time_limit: Option<Duration>,
    pub node_limit: Option<usize>,
    pub root_only: bool,
    pub node_order: NodeOrder,
    pub max_rounds: usize,
    /// Cap on each incumbent search.
    pub heuristic_time: Duration,
    /// Record every processed node.
    pub trace: bool,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            time_limit: Some(Duration::from_secs(600)),
            node_limit: None,
            root_only: false,
            node_order: NodeOrder::BestBound,
            max_rounds: 10_000,
            heuristic_time: Duration::from_secs(1),
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    TimeLimit,
    NodeLimit,
    RootOnly,
    Infeasible,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::TimeLimit => "time_limit",
            SolveStatus::NodeLimit => "node_limit",
            SolveStatus::RootOnly => "root_only",
            SolveStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone)]
pub enum MasterColumn {
    Dummy { destination: usize },
    Path(PathColumn),
}

impl MasterColumn {
    pub fn destination(&self) -> usize {
        match self {
            MasterColumn::Dummy { destination } => *destination,
            MasterColumn::Path(p) => p.destination,
        }
    }

    pub fn path(&self) -> Option<&PathColumn> {
        match self {
            MasterColumn::Path(p) => Some(p),
            MasterColumn::Dummy { .. } => None,
        }
    }
}

/// The restricted master problem and its column pool.
pub struct MasterState<'a> {
    pub instance: &'a Instance,
    pub alpha: Alpha,
    pub diagrams: Vec<DecisionDiagram>,
    pub columns: Vec<MasterColumn>,
    pub lp: LpTableau,
    pub big_m: f64,
    pool: HashMap<(usize, Vec<ArcId>), usize>,
}

/// Per-destination pricing outcome.
#[derive(Debug, Clone)]
pub struct Priced {
    pub destination: usize,
    /// Best admissible path, when its reduced cost is negative.
    pub column: Option<PathColumn>,
    pub length: f64,
    pub reduced_cost: f64,
    /// Valid lower bound on the reduced cost of every allowed path.
    pub reduced_floor: f64,
}

#[derive(Debug, Clone)]
pub struct PricingResult {
    pub per_destination: Vec<Priced>,
}

impl PricingResult {
    pub fn improving(&self) -> bool {
        self.per_destination.iter().any(|p| p.column.is_some())
    }
}

#[derive(Debug, Clone)]
pub struct RootResult {
    pub lp_bound: f64,
    pub columns_generated: usize,
    pub rounds: usize,
    pub needs_dummies: bool,
}

/// Branching decisions of a search node, as pool column ids.
#[derive(Debug, Clone, Default)]
pub struct SearchNode {
    pub bound: f64,
    pub fixed_out: Vec<usize>,
    pub fixed_in: Vec<usize>,
    pub depth: usize,
    id: usize,
}

#[derive(Debug, Clone)]
pub struct NodeTrace {
    pub fixed_out: Vec<PathColumn>,
    pub fixed_in: Vec<PathColumn>,
    /// Post-pricing LP value; `None` when the node LP was infeasible.
    pub lp_value: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub schedule: Option<Schedule>,
    pub objective: Option<Value>,
    pub lower_bound: f64,
    pub upper_bound: Option<f64>,
    pub gap_percent: Option<f64>,
    pub root_bound: f64,
    pub nodes: usize,
    pub columns: usize,
    pub rounds: usize,
    pub wall_time: Duration,
    pub status: SolveStatus,
    pub trace: Vec<NodeTrace>,
}

pub fn value_f64(v: Value) -> f64 {
    *v.numer() as f64 / *v.denom() as f64
}

/// `(UB - LB) / LB * 100`; zero when both vanish.
pub fn gap_percent(upper: f64, lower: f64) -> Option<f64> {
    if lower > 0.0 {
        Some(((upper - lower) / lower * 100.0).max(0.0))
    } else if upper <= 1e-9 {
        Some(0.0)
    } else {
        None
    }
}

enum NodeLp {
    Infeasible,
    Solved {
        solution: LpSolution,
        bound: f64,
        rounds: usize,
    },
    Stopped {
        bound: f64,
        rounds: usize,
    },
}

impl<'a> MasterState<'a> {
    pub fn init(instance: &'a Instance, alpha: Alpha) -> Result<Self, BpError> {
        let diagrams = dd::build_all(instance, alpha)?;
        Ok(Self::with_diagrams(instance, alpha, diagrams))
    }

    pub fn with_diagrams(
        instance: &'a Instance,
        alpha: Alpha,
        diagrams: Vec<DecisionDiagram>,
    ) -> Self {
        let k = instance.num_destinations();
        let n = instance.num_passengers() as f64;
        let a = alpha.as_f64();
        let big_m = a * n * instance.horizon as f64 + (1.0 - a) * n + 1.0;
        let mut lp = LpTableau::new();
        for _ in 0..k {
            lp.add_row(Sense::Eq, 1.0);
        }
        for _ in 1..=instance.horizon {
            lp.add_row(Sense::Le, instance.fleet_size as f64);
        }
        let mut columns = Vec::with_capacity(k);
        for d in 0..k {
            lp.add_column(big_m, &[(d, 1.0)], f64::INFINITY)
                .expect("convexity row");
            columns.push(MasterColumn::Dummy { destination: d });
        }
        MasterState {
            instance,
            alpha,
            diagrams,
            columns,
            lp,
            big_m,
            pool: HashMap::new(),
        }
    }

    fn fleet_row(&self, t: Time) -> usize {
        self.instance.num_destinations() + (t - 1) as usize
    }

    pub fn num_real_columns(&self) -> usize {
        self.columns.len() - self.instance.num_destinations()
    }

    pub fn column_id(&self, destination: usize, arcs: &[ArcId]) -> Option<usize> {
        self.pool.get(&(destination, arcs.to_vec())).copied()
    }

    /// Adds a path to the pool; `None` if already present.
    pub fn add_column(&mut self, column: PathColumn) -> Option<usize> {
        let key = (column.destination, column.arcs.clone());
        if self.pool.contains_key(&key) {
            return None;
        }
        let mut entries = vec![(column.destination, 1.0)];
        for (&t, &h) in &column.occupancy {
            entries.push((self.fleet_row(t), h as f64));
        }
        let cost = value_f64(column.exact_cost(self.alpha));
        let id = self
            .lp
            .add_column(cost, &entries, f64::INFINITY)
            .expect("rows exist");
        debug_assert_eq!(id, self.columns.len());
        self.columns.push(MasterColumn::Path(column));
        self.pool.insert(key, id);
        Some(id)
    }

    fn duals_split(&self, duals: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let k = self.instance.num_destinations();
        let mu = duals[..k].to_vec();
        // prefix[t] = sum of fleet duals over 1..=t
        let mut prefix = vec![0.0; self.instance.horizon as usize + 1];
        for t in 1..=self.instance.horizon as usize {
            prefix[t] = prefix[t - 1] + duals[k + t - 1];
        }
        (mu, prefix)
    }

    /// Arc lengths `eta(a) - sum of fleet duals over the arc's busy interval`.
    pub fn adjusted_lengths(&self, destination: usize, duals: &[f64]) -> Vec<f64> {
        let (_, prefix) = self.duals_split(duals);
        adjusted(&self.diagrams[destination], &prefix)
    }

    /// Shortest adjusted path per destination, skipping out-fixed paths and
    /// destinations with an in-fixed column.
    pub fn price(&self, duals: &[f64], node: &SearchNode) -> PricingResult {
        let (mu, prefix) = self.duals_split(duals);
        let mut forbidden: Vec<HashSet<&[ArcId]>> = vec![HashSet::new(); self.diagrams.len()];
        for &c in &node.fixed_out {
            if let Some(p) = self.columns[c].path() {
                forbidden[p.destination].insert(&p.arcs);
            }
        }
        let fixed_in: HashMap<usize, usize> = node
            .fixed_in
            .iter()
            .map(|&c| (self.columns[c].destination(), c))
            .collect();
        let per_destination = self
            .diagrams
            .par_iter()
            .enumerate()
            .map(|(d, dd)| {
                if let Some(&c) = fixed_in.get(&d) {
                    let rc = self.lp.reduced_cost(c, duals);
                    return Priced {
                        destination: d,
                        column: None,
                        length: rc + mu[d],
                        reduced_cost: rc,
                        reduced_floor: rc,
                    };
                }
                let lengths = adjusted(dd, &prefix);
                let found = if forbidden[d].is_empty() {
                    Some(dd.shortest_path(&lengths))
                } else {
                    dd.paths_by_length(&lengths)
                        .take_while(|(_, len)| len - mu[d] < -TOL_OPT)
                        .find(|(col, _)| !forbidden[d].contains(col.arcs.as_slice()))
                };
                match found {
                    Some((col, len)) => {
                        let rc = len - mu[d];
                        Priced {
                            destination: d,
                            column: (rc < -TOL_OPT).then_some(col),
                            length: len,
                            reduced_cost: rc,
                            reduced_floor: rc.min(0.0),
                        }
                    }
                    None => Priced {
                        destination: d,
                        column: None,
                        length: f64::INFINITY,
                        reduced_cost: f64::INFINITY,
                        reduced_floor: -TOL_OPT,
                    },
                }
            })
            .collect();
        PricingResult { per_destination }
    }

    fn apply(&mut self, node: &SearchNode) -> Result<(), BpError> {
        self.lp.unfix_all();
        for &c in &node.fixed_out {
            self.lp.fix_column(c, 0.0)?;
        }
        for &c in &node.fixed_in {
            self.lp.fix_column(c, 1.0)?;
        }
        Ok(())
    }

    /// `b . y` plus the per-destination reduced-cost floors.
    fn lagrangian(&self, duals: &[f64], priced: &PricingResult) -> f64 {
        let k = self.instance.num_destinations();
        let by: f64 = duals[..k].iter().sum::<f64>()
            + self.instance.fleet_size as f64 * duals[k..].iter().sum::<f64>();
        by + priced
            .per_destination
            .iter()
            .map(|p| p.reduced_floor)
            .sum::<f64>()
    }

    fn column_generation(
        &mut self,
        node: &SearchNode,
        max_rounds: usize,
        deadline: Option<Instant>,
        cutoff: f64,
    ) -> Result<NodeLp, BpError> {
        self.apply(node)?;
        let mut bound = node.bound;
        for round in 1..=max_rounds {
            let solution = self.lp.solve()?;
            if solution.status == LpStatus::Infeasible {
                return Ok(NodeLp::Infeasible);
            }
            let priced = self.price(&solution.duals, node);
            bound = bound.max(self.lagrangian(&solution.duals, &priced));
            let mut added = 0;
            for p in priced.per_destination {
                if let Some(col) = p.column {
                    if self.add_column(col).is_some() {
                        added += 1;
                    }
                }
            }
            if added == 0 {
                return Ok(NodeLp::Solved {
                    bound: bound.max(solution.objective),
                    solution,
                    rounds: round,
                });
            }
            if bound >= cutoff - TOL_OPT || deadline.is_some_and(|d| Instant::now() >= d) {
                return Ok(NodeLp::Stopped {
                    bound,
                    rounds: round,
                });
            }
        }
        Err(BpError::RoundLimit { rounds: max_rounds })
    }

    /// Column generation at the root without fixings.
    pub fn solve_root(&mut self, max_rounds: usize) -> Result<(RootResult, LpSolution), BpError> {
        let before = self.num_real_columns();
        match self.column_generation(&SearchNode::default(), max_rounds, None, f64::INFINITY)? {
            NodeLp::Solved {
                solution, rounds, ..
            } => {
                let needs_dummies = self.dummies_used(&solution.primal);
                Ok((
                    RootResult {
                        lp_bound: solution.objective,
                        columns_generated: self.num_real_columns() - before,
                        rounds,
                        needs_dummies,
                    },
                    solution,
                ))
            }
            _ => unreachable!("root LP with dummies is feasible"),
        }
    }

    fn dummies_used(&self, primal: &[f64]) -> bool {
        (0..self.instance.num_destinations()).any(|d| primal[d] > TOL_INT)
    }

    /// Real columns at a fractional level.
    fn most_fractional(&self, primal: &[f64]) -> Option<usize> {
        let k = self.instance.num_destinations();
        (k..primal.len())
            .filter(|&c| primal[c] > TOL_INT && primal[c] < 1.0 - TOL_INT)
            .min_by(|&a, &b| {
                (primal[a] - 0.5)
                    .abs()
                    .total_cmp(&(primal[b] - 0.5).abs())
                    .then(a.cmp(&b))
            })
    }

    /// Schedule of one chosen column per destination.
    pub fn schedule_from_columns(&self, chosen: &[usize]) -> Option<Schedule> {
        let mut groups = Vec::new();
        for &c in chosen {
            let p = self.columns[c].path()?;
            for g in &p.groups {
                groups.push(
                    GroupTrip::with_best_trips(self.instance, p.destination, g.depart, &g.members)
                        .ok()?,
                );
            }
        }
        self.finish(groups)
    }

    fn finish(&self, groups: Vec<GroupTrip>) -> Option<Schedule> {
        let mut s = Schedule::from_groups(self.instance, groups).ok()?;
        s.canonicalize();
        validate(self.instance, &s).ok()?.is_feasible().then_some(s)
    }

    fn integral_schedule(&self, primal: &[f64]) -> Option<Schedule> {
        let chosen: Vec<usize> = (0..primal.len()).filter(|&c| primal[c] > 0.5).collect();
        if chosen.len() != self.instance.num_destinations() || self.dummies_used(primal) {
            return None;
        }
        self.schedule_from_columns(&chosen)
    }

    /// Price-and-dive from `node`: fixes the largest fractional column to one
    /// and re-prices until integral, trying the rounding heuristic on the way.
    /// A failed fix becomes a zero fix; a level that keeps failing is
    /// abandoned and its parent's fix flipped. Returns the best schedule seen.
    fn dive(
        &mut self,
        node: &SearchNode,
        max_rounds: usize,
        deadline: Option<Instant>,
        step_time: Duration,
    ) -> Result<Option<Schedule>, BpError> {
        const RETRIES: usize = 2;
        let k = self.instance.num_destinations();
        let alpha = self.alpha;
        let mut node = node.clone();
        // (fixed_out length when the level began, retries used), one per fix-in
        let mut levels: Vec<(usize, usize)> = Vec::new();
        let mut pending: Option<(usize, usize)> = None;
        let mut failures = 0;
        let mut best: Option<(Schedule, Value)> = None;
        let keep = |s: Schedule, best: &mut Option<(Schedule, Value)>| {
            let v = objective(&s, alpha);
            if best.as_ref().is_none_or(|(_, b)| v < *b) {
                *best = Some((s, v));
            }
        };
        'dive: loop {
            match self.column_generation(&node, max_rounds, deadline, f64::INFINITY)? {
                NodeLp::Solved { solution, .. } if solution.objective < self.big_m - TOL_OPT => {
                    if let Some(s) = self.integral_schedule(&solution.primal) {
                        keep(s, &mut best);
                        break;
                    }
                    if let Some(s) = self.primal_heuristic(&solution.primal, step_time) {
                        keep(s, &mut best);
                    }
                    let primal = &solution.primal;
                    let Some(c) = (k..primal.len())
                        .filter(|&c| primal[c] > TOL_INT && primal[c] < 1.0 - TOL_INT)
                        .max_by(|&a, &b| primal[a].total_cmp(&primal[b]).then(b.cmp(&a)))
                    else {
                        break;
                    };
                    levels.push(pending.take().unwrap_or((node.fixed_out.len(), 0)));
                    node.fixed_in.push(c);
                }
                NodeLp::Stopped { .. } => break,
                _ => {
                    failures += 1;
                    if failures > 4 * k {
                        break;
                    }
                    if let Some((out_len, _)) = pending.take() {
                        node.fixed_out.truncate(out_len);
                    }
                    loop {
                        let Some((out_len, tries)) = levels.pop() else {
                            break 'dive;
                        };
                        let last = node.fixed_in.pop().expect("one fix per level");
                        if tries < RETRIES {
                            node.fixed_out.push(last);
                            pending = Some((out_len, tries + 1));
                            break;
                        }
                        node.fixed_out.truncate(out_len);
                    }
                }
            }
        }
        Ok(best.map(|(s, _)| s))
    }

    /// Fixes the groups of each destination's largest column and chooses
    /// departure times by a small 0-1 search.
    pub fn primal_heuristic(&self, primal: &[f64], time_cap: Duration) -> Option<Schedule> {
        let k = self.instance.num_destinations();
        let mut picked = vec![None::<usize>; k];
        for c in k..primal.len() {
            let d = self.columns[c].destination();
            if picked[d].map_or(true, |b| primal[c] > primal[b]) {
                picked[d] = Some(c);
            }
        }
        if self
            .diagrams
            .iter()
            .zip(&picked)
            .any(|(dd, p)| p.is_none() && !dd.passengers().is_empty())
        {
            return None;
        }
        let mut lp = LpTableau::new();
        let mut vars: Vec<(usize, usize, Time)> = Vec::new();
        let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
        let mut fleet_rows: HashMap<Time, usize> = HashMap::new();
        for (d, c) in picked.iter().enumerate() {
            let Some(c) = c else { continue };
            let dd = &self.diagrams[d];
            let pos: HashMap<usize, usize> = dd
                .passengers()
                .iter()
                .enumerate()
                .map(|(i, &j)| (j, i))
                .collect();
            for g in &self.columns[*c].path()?.groups {
                let times = g
                    .members
                    .iter()
                    .map(|j| dd.admissible()[pos[j]].clone())
                    .reduce(|a, b| a.into_iter().filter(|t| b.contains(t)).collect())?;
                let row = lp.add_row(Sense::Eq, 1.0);
                groups.push((d, g.members.clone()));
                for t in times {
                    let dest = &self.instance.destinations[d];
                    for s in t..t + dest.round_trip_at(t) {
                        fleet_rows.entry(s).or_insert(usize::MAX);
                    }
                    vars.push((row, groups.len() - 1, t));
                }
            }
        }
        let mut ts: Vec<Time> = fleet_rows.keys().copied().collect();
        ts.sort();
        for t in ts {
            let r = lp.add_row(Sense::Le, self.instance.fleet_size as f64);
            fleet_rows.insert(t, r);
        }
        for &(row, g, t) in &vars {
            let (d, members) = &groups[g];
            let (_, cost) = dd::group_cost(self.instance, members, t, self.alpha).ok()?;
            let travel = dd::group_cost(self.instance, members, t, Alpha::ONE)
                .ok()?
                .0;
            let exact = value_f64(self.alpha.combine(travel, 1));
            debug_assert!((exact - cost).abs() < 1e-6);
            let mut entries = vec![(row, 1.0)];
            let dest = &self.instance.destinations[*d];
            for s in t..t + dest.round_trip_at(t) {
                entries.push((fleet_rows[&s], 1.0));
            }
            lp.add_column(exact, &entries, f64::INFINITY).ok()?;
        }
        if vars.is_empty() {
            return self.finish(Vec::new());
        }
        let binaries: Vec<usize> = (0..vars.len()).collect();
        let (_, x) = dfs_binary(&mut lp, &binaries, Instant::now() + time_cap)?;
        let mut out = Vec::new();
        for (v, &(_, g, t)) in vars.iter().enumerate() {
            if x[v] > 0.5 {
                let (d, members) = &groups[g];
                out.push(GroupTrip::with_best_trips(self.instance, *d, t, members).ok()?);
            }
        }
        self.finish(out)
    }

    /// Depth-first search for an integer solution over the current columns.
    pub fn restricted_ip(&self, time_cap: Duration) -> Option<Schedule> {
        let k = self.instance.num_destinations();
        let mut lp = self.lp.clone();
        for d in 0..k {
            if lp.is_fixed(d).is_none() {
                lp.fix_column(d, 0.0).ok()?;
            }
        }
        let binaries: Vec<usize> = (k..self.columns.len()).collect();
        let (_, x) = dfs_binary(&mut lp, &binaries, Instant::now() + time_cap)?;
        let chosen: Vec<usize> = binaries.iter().copied().filter(|&c| x[c] > 0.5).collect();
        self.schedule_from_columns(&chosen)
    }
}

fn adjusted(dd: &DecisionDiagram, prefix: &[f64]) -> Vec<f64> {
    dd.arcs()
        .iter()
        .map(|a| match a.one() {
            Some(o) => o.cost - (prefix[o.busy_until() as usize] - prefix[o.start as usize - 1]),
            None => 0.0,
        })
        .collect()
}

/// Depth-first 0-1 branch-and-bound over `binaries` with LP bounds.
fn dfs_binary(
    lp: &mut LpTableau,
    binaries: &[usize],
    deadline: Instant,
) -> Option<(f64, Vec<f64>)> {
    fn go(
        lp: &mut LpTableau,
        binaries: &[usize],
        deadline: Instant,
        best: &mut Option<(f64, Vec<f64>)>,
    ) {
        if Instant::now() >= deadline {
            return;
        }
        let Ok(sol) = lp.solve() else { return };
        if sol.status != LpStatus::Optimal {
            return;
        }
        if best
            .as_ref()
            .is_some_and(|(b, _)| sol.objective >= b - TOL_OPT)
        {
            return;
        }
        let pick = binaries
            .iter()
            .copied()
            .filter(|&j| lp.is_fixed(j).is_none())
            .filter(|&j| sol.primal[j] > TOL_INT && sol.primal[j] < 1.0 - TOL_INT)
            .max_by(|&a, &b| sol.primal[a].total_cmp(&sol.primal[b]).then(b.cmp(&a)));
        let Some(j) = pick else {
            *best = Some((sol.objective, sol.primal));
            return;
        };
        for v in [1.0, 0.0] {
            lp.fix_column(j, v).expect("unfixed");
            go(lp, binaries, deadline, best);
            lp.unfix_column(j).expect("known");
        }
    }
    let mut best = None;
    go(lp, binaries, deadline, &mut best);
    best
}

#[derive(Debug, Clone)]
struct Queued(SearchNode, NodeOrder);

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    // max-heap: the node to expand next compares greatest
    fn cmp(&self, other: &Self) -> Ordering {
        match self.1 {
            NodeOrder::BestBound => Reverse(self.0.bound)
                .partial_cmp(&Reverse(other.0.bound))
                .unwrap_or(Ordering::Equal)
                .then(Reverse(self.0.id).cmp(&Reverse(other.0.id))),
            NodeOrder::DepthFirst => self.0.id.cmp(&other.0.id),
        }
    }
}

/// Solves the instance to optimality or until a limit is hit.
fn dive_deadline(deadline: Option<Instant>, heuristic_time: Duration) -> Option<Instant> {
    let cap = Instant::now() + heuristic_time * 10;
    Some(deadline.map_or(cap, |d| d.min(cap)))
}

pub fn branch_and_price(
    instance: &Instance,
    alpha: Alpha,
    limits: &Limits,
) -> Result<SolveResult, BpError> {
    let start = Instant::now();
    let deadline = limits.time_limit.map(|t| start + t);
    let mut master = match MasterState::init(instance, alpha) {
        Ok(m) => m,
        Err(BpError::Dd(DdError::InfeasiblePassenger { .. })) => {
            return Ok(infeasible_result(start));
        }
        Err(e) => return Err(e),
    };
    let mut incumbent: Option<(Schedule, Value)> = None;
    let mut trace = Vec::new();
    let mut queue = BinaryHeap::new();
    let mut next_id = 1;
    queue.push(Queued(SearchNode::default(), limits.node_order));
    let mut nodes = 0;
    let mut rounds = 0;
    let mut root_bound = f64::NEG_INFINITY;
    let mut status = SolveStatus::Optimal;
    // bound of a node that was interrupted before finishing
    let mut open_bound = f64::INFINITY;
    let upper = |inc: &Option<(Schedule, Value)>| {
        inc.as_ref().map_or(f64::INFINITY, |(_, v)| value_f64(*v))
    };

    while let Some(Queued(node, _)) = queue.pop() {
        if node.bound >= upper(&incumbent) - TOL_OPT {
            continue;
        }
        if limits.node_limit.is_some_and(|l| nodes >= l) {
            status = SolveStatus::NodeLimit;
            queue.push(Queued(node, limits.node_order));
            break;
        }
        if deadline.is_some_and(|d| Instant::now() >= d) {
            status = SolveStatus::TimeLimit;
            queue.push(Queued(node, limits.node_order));
            break;
        }
        nodes += 1;
        let is_root = nodes == 1;
        let outcome =
            master.column_generation(&node, limits.max_rounds, deadline, upper(&incumbent))?;
        let (solution, bound) = match outcome {
            NodeLp::Infeasible => {
                if limits.trace {
                    trace.push(node_trace(&master, &node, None));
                }
                continue;
            }
            NodeLp::Stopped { bound, rounds: r } => {
                rounds += r;
                if is_root {
                    root_bound = bound;
                }
                if bound < upper(&incumbent) - TOL_OPT {
                    // interrupted by the clock
                    open_bound = open_bound.min(bound);
                    status = SolveStatus::TimeLimit;
                    if is_root && incumbent.is_none() {
                        if let Some(s) = master.restricted_ip(limits.heuristic_time) {
                            let v = objective(&s, alpha);
                            incumbent = Some((s, v));
                        }
                    }
                    break;
                }
                continue;
            }
            NodeLp::Solved {
                solution,
                bound,
                rounds: r,
            } => {
                rounds += r;
                (solution, bound)
            }
        };
        if limits.trace {
            trace.push(node_trace(&master, &node, Some(solution.objective)));
        }
        if is_root {
            root_bound = bound;
        }
        if solution.objective >= master.big_m - TOL_OPT {
            // only dummies fit under these fixings
            continue;
        }
        if bound >= upper(&incumbent) - TOL_OPT {
            continue;
        }
        if let Some(s) = master.integral_schedule(&solution.primal) {
            let v = objective(&s, alpha);
            if value_f64(v) < upper(&incumbent) - TOL_OPT {
                incumbent = Some((s, v));
            }
            continue;
        }
        let mut found = master.primal_heuristic(&solution.primal, limits.heuristic_time);
        if found.is_none() && incumbent.is_none() {
            found = master.restricted_ip(limits.heuristic_time);
        }
        if let Some(s) = found {
            let v = objective(&s, alpha);
            if value_f64(v) < upper(&incumbent) - TOL_OPT {
                incumbent = Some((s, v));
            }
        }
        if is_root && gap_percent(upper(&incumbent), bound).is_none_or(|g| g > 0.5) {
            if let Some(s) = master.dive(
                &node,
                limits.max_rounds,
                dive_deadline(deadline, limits.heuristic_time),
                limits.heuristic_time / 10,
            )? {
                let v = objective(&s, alpha);
                if value_f64(v) < upper(&incumbent) - TOL_OPT {
                    incumbent = Some((s, v));
                }
            }
        }
        if bound >= upper(&incumbent) - TOL_OPT {
            continue;
        }
        if limits.root_only {
            status = SolveStatus::RootOnly;
            open_bound = bound;
            break;
        }
        let Some(c) = master.most_fractional(&solution.primal) else {
            // dummies fractional only with all real columns integral cannot happen below big-M
            continue;
        };
        let mut out = node.clone();
        out.fixed_out.push(c);
        out.bound = bound;
        out.depth += 1;
        out.id = next_id;
        let mut inn = node.clone();
        inn.fixed_in.push(c);
        inn.bound = bound;
        inn.depth += 1;
        inn.id = next_id + 1;
        next_id += 2;
        queue.push(Queued(out, limits.node_order));
        queue.push(Queued(inn, limits.node_order));
    }

    let up = upper(&incumbent);
    let remaining = queue
        .iter()
        .map(|Queued(n, _)| n.bound)
        .fold(open_bound, f64::min);
    let lower_bound = if status == SolveStatus::Optimal {
        up
    } else {
        remaining.min(up)
    };
    let status = if status == SolveStatus::Optimal && incumbent.is_none() {
        SolveStatus::Infeasible
    } else {
        status
    };
    let lower_bound = if lower_bound.is_finite() {
        lower_bound
    } else {
        root_bound.max(0.0)
    };
    let (schedule, obj) = match incumbent {
        Some((s, v)) => (Some(s), Some(v)),
        None => (None, None),
    };
    Ok(SolveResult {
        upper_bound: obj.map(value_f64),
        gap_percent: obj.and_then(|v| gap_percent(value_f64(v), lower_bound)),
        schedule,
        objective: obj,
        lower_bound,
        root_bound,
        nodes,
        columns: master.num_real_columns(),
        rounds,
        wall_time: start.elapsed(),
        status,
        trace,
    })
}

fn infeasible_result(start: Instant) -> SolveResult {
    SolveResult {
        schedule: None,
        objective: None,
        lower_bound: f64::INFINITY,
        upper_bound: None,
        gap_percent: None,
        root_bound: f64::INFINITY,
        nodes: 0,
        columns: 0,
        rounds: 0,
        wall_time: start.elapsed(),
        status: SolveStatus::Infeasible,
        trace: Vec::new(),
    }
}

fn node_trace(master: &MasterState, node: &SearchNode, lp_value: Option<f64>) -> NodeTrace {
    let paths = |ids: &[usize]| {
        ids.iter()
            .filter_map(|&c| master.columns[c].path().cloned())
            .collect()
    };
    NodeTrace {
        fixed_out: paths(&node.fixed_out),
        fixed_in: paths(&node.fixed_in),
        lp_value,
    }
}
