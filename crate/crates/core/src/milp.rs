//! Monolithic models in LP-file form, plus the plumbing to check and import
//! variable assignments against them.
//!
//! Naming is fixed so exported files diff cleanly:
//!
//! * time-indexed IP: `x_j_c` (trip `c` serves the origin of `j`), `z_j_t`
//!   and `nB_d_t` for `t` in `1..=t_max`, `nT_t` for `t` in `0..=t_max`,
//!   `w_j`; rows `ip2_j`, `ip3_j`, `ip4_j`, `ip5l_j`, `ip5u_j`, `ip6_t`,
//!   `ip7_d_t`, `ip8_d_t`, `ip9a_j_c_t`, `ip14`.
//! * arc-flow NF: `y_d_a` per diagram arc; rows `src_d`, `snk_d`,
//!   `flow_d_u` for interior nodes, `cap_t` for `t` in `0..t_max`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use num_traits::{ToPrimitive, Zero};
use thiserror::Error;

use crate::dd::{ArcKind, DecisionDiagram};
use crate::model::{Alpha, Boarding, GroupTrip, Instance, ModelError, Schedule, Time, Value};
use crate::validate::{validate, ValidationReport};

const MAX_LINE: usize = 200;
const INTEGRALITY_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum MilpError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("variable `{name}` has fractional value {value}")]
    Fractional { name: String, value: f64 },
    #[error("inconsistent assignment: {0}")]
    Inconsistent(String),
    #[error("expected {expected} diagrams, got {got}")]
    DiagramCount { expected: usize, got: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Ip,
    Nf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Binary,
    Integer,
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    /// Lower bound is always zero.
    pub upper: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

impl RowSense {
    fn symbol(self) -> &'static str {
        match self {
            RowSense::Le => "<=",
            RowSense::Ge => ">=",
            RowSense::Eq => "=",
        }
    }

    fn holds(self, lhs: i64, rhs: i64) -> bool {
        match self {
            RowSense::Le => lhs <= rhs,
            RowSense::Ge => lhs >= rhs,
            RowSense::Eq => lhs == rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub name: String,
    pub terms: Vec<(usize, i64)>,
    pub sense: RowSense,
    pub rhs: i64,
}

/// A violated row or bound under some assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Residual {
    pub name: String,
    pub lhs: i64,
    pub rhs: i64,
    pub sense: &'static str,
}

/// Integer values by variable name; absent names read as zero.
pub type Assignment = BTreeMap<String, i64>;

#[derive(Debug, Clone)]
pub struct MilpModel {
    pub kind: ModelKind,
    pub variables: Vec<Variable>,
    pub rows: Vec<Row>,
    pub objective: Vec<(usize, Value)>,
    index: HashMap<String, usize>,
}

impl MilpModel {
    fn new(kind: ModelKind) -> Self {
        MilpModel {
            kind,
            variables: Vec::new(),
            rows: Vec::new(),
            objective: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn var(&mut self, name: String, kind: VarKind) -> usize {
        let id = self.variables.len();
        let prev = self.index.insert(name.clone(), id);
        debug_assert!(prev.is_none(), "duplicate variable {name}");
        self.variables.push(Variable {
            name,
            kind,
            upper: None,
        });
        id
    }

    fn row(&mut self, name: String, terms: Vec<(usize, i64)>, sense: RowSense, rhs: i64) {
        let mut merged: BTreeMap<usize, i64> = BTreeMap::new();
        for (v, a) in terms {
            *merged.entry(v).or_default() += a;
        }
        let terms = merged.into_iter().filter(|&(_, a)| a != 0).collect();
        self.rows.push(Row {
            name,
            terms,
            sense,
            rhs,
        });
    }

    fn cost(&mut self, var: usize, c: Value) {
        if !c.is_zero() {
            self.objective.push((var, c));
        }
    }

    pub fn variable(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn row_by_name(&self, name: &str) -> Option<&Row> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn count_prefix(&self, prefix: &str) -> usize {
        self.variables
            .iter()
            .filter(|v| v.name.starts_with(prefix))
            .count()
    }

    fn values(&self, assignment: &Assignment) -> Result<Vec<i64>, MilpError> {
        let mut x = vec![0i64; self.variables.len()];
        for (name, &v) in assignment {
            let id = self
                .variable(name)
                .ok_or_else(|| MilpError::UnknownVariable(name.clone()))?;
            x[id] = v;
        }
        Ok(x)
    }

    /// Every violated row and bound, in model order.
    pub fn residuals(&self, assignment: &Assignment) -> Result<Vec<Residual>, MilpError> {
        let x = self.values(assignment)?;
        let mut out = Vec::new();
        for (v, &val) in self.variables.iter().zip(&x) {
            let upper = match v.kind {
                VarKind::Binary => Some(v.upper.unwrap_or(1).min(1)),
                _ => v.upper,
            };
            if val < 0 {
                out.push(Residual {
                    name: v.name.clone(),
                    lhs: val,
                    rhs: 0,
                    sense: ">=",
                });
            }
            if let Some(u) = upper.filter(|&u| val > u) {
                out.push(Residual {
                    name: v.name.clone(),
                    lhs: val,
                    rhs: u,
                    sense: "<=",
                });
            }
        }
        for r in &self.rows {
            let lhs: i64 = r.terms.iter().map(|&(v, a)| a * x[v]).sum();
            if !r.sense.holds(lhs, r.rhs) {
                out.push(Residual {
                    name: r.name.clone(),
                    lhs,
                    rhs: r.rhs,
                    sense: r.sense.symbol(),
                });
            }
        }
        Ok(out)
    }

    pub fn objective_value(&self, assignment: &Assignment) -> Result<Value, MilpError> {
        let x = self.values(assignment)?;
        Ok(self
            .objective
            .iter()
            .fold(Value::zero(), |acc, (v, c)| acc + *c * Value::from(x[*v])))
    }

    pub fn write_lp(&self, out: &mut impl Write) -> io::Result<()> {
        let mut text = String::new();
        let title = match self.kind {
            ModelKind::Ip => "time-indexed model",
            ModelKind::Nf => "arc-flow model",
        };
        let _ = writeln!(text, "\\ {title}");
        text.push_str("Minimize\n");
        let mut obj: Vec<String> = self
            .objective
            .iter()
            .map(|(v, c)| term(&format_value(*c), &self.variables[*v].name))
            .collect();
        if obj.is_empty() {
            obj.push(format!("0 {}", self.variables[0].name));
        }
        wrap(&mut text, " obj:", &obj, "");
        text.push_str("Subject To\n");
        for r in &self.rows {
            let mut terms: Vec<String> = r
                .terms
                .iter()
                .map(|&(v, a)| term(&a.to_string(), &self.variables[v].name))
                .collect();
            if terms.is_empty() {
                terms.push(format!("0 {}", self.variables[0].name));
            }
            let tail = format!("{} {}", r.sense.symbol(), r.rhs);
            wrap(&mut text, &format!(" {}:", r.name), &terms, &tail);
        }
        text.push_str("Bounds\n");
        for v in &self.variables {
            match (v.kind, v.upper) {
                (VarKind::Binary, Some(u))
                | (VarKind::Integer, Some(u))
                | (VarKind::Continuous, Some(u)) => {
                    let _ = writeln!(text, " 0 <= {} <= {u}", v.name);
                }
                (VarKind::Integer, None) | (VarKind::Continuous, None) => {
                    let _ = writeln!(text, " {} >= 0", v.name);
                }
                (VarKind::Binary, None) => {}
            }
        }
        for (header, kind) in [
            ("Binaries", VarKind::Binary),
            ("Generals", VarKind::Integer),
        ] {
            let names: Vec<String> = self
                .variables
                .iter()
                .filter(|v| v.kind == kind)
                .map(|v| v.name.clone())
                .collect();
            if !names.is_empty() {
                let _ = writeln!(text, "{header}");
                wrap(&mut text, "", &names, "");
            }
        }
        text.push_str("End\n");
        out.write_all(text.as_bytes())
    }

    pub fn write_lp_file(&self, path: impl AsRef<Path>) -> Result<(), MilpError> {
        let mut f = io::BufWriter::new(std::fs::File::create(path)?);
        self.write_lp(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn to_lp_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_lp(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("ascii")
    }
}

fn term(coef: &str, name: &str) -> String {
    match coef {
        "1" => format!("+ {name}"),
        "-1" => format!("- {name}"),
        c if c.starts_with('-') => format!("- {} {name}", &c[1..]),
        c => format!("+ {c} {name}"),
    }
}

fn format_value(v: Value) -> String {
    if v.is_integer() {
        v.to_integer().to_string()
    } else {
        format!("{}", v.to_f64().unwrap_or(f64::NAN))
    }
}

fn wrap(text: &mut String, head: &str, terms: &[String], tail: &str) {
    let mut line = head.to_string();
    for (i, t) in terms.iter().enumerate() {
        let t = if i == 0 {
            t.strip_prefix("+ ").unwrap_or(t)
        } else {
            t
        };
        if line.len() + t.len() + 1 > MAX_LINE && !line.trim().is_empty() {
            text.push_str(&line);
            text.push('\n');
            line = String::from("   ");
        }
        if !line.is_empty() {
            line.push(' ');
        }
        line.push_str(t);
    }
    if !tail.is_empty() {
        if line.len() + tail.len() + 1 > MAX_LINE {
            text.push_str(&line);
            text.push('\n');
            line = String::from("  ");
        }
        line.push(' ');
        line.push_str(tail);
    }
    text.push_str(&line);
    text.push('\n');
}

fn alpha_parts(alpha: Alpha) -> (Value, Value) {
    let a = alpha.ratio();
    (a, Value::from(1) - a)
}

/// Time-indexed model over departures `1..=t_max`, `t_max` being the horizon.
/// Departures whose CV could not be back by the horizon get `nB_d_t <= 0`.
pub fn build_ip(instance: &Instance, alpha: Alpha) -> Result<MilpModel, MilpError> {
    instance.check()?;
    let tmax = instance.horizon;
    let times: Vec<Time> = (1..=tmax).collect();
    let vcap = instance.cv_capacity as i64;
    let (a, b) = alpha_parts(alpha);
    let mut m = MilpModel::new(ModelKind::Ip);

    let mut x: Vec<Vec<(usize, usize, Time)>> = Vec::new();
    let mut z: Vec<Vec<usize>> = Vec::new();
    let mut w = Vec::new();
    for p in &instance.passengers {
        let mut xs = Vec::new();
        for c in &instance.trips {
            if let Some(dep) = c.departure(p.origin) {
                xs.push((
                    m.var(format!("x_{}_{}", p.id, c.id), VarKind::Binary),
                    c.id,
                    dep,
                ));
            }
        }
        x.push(xs);
        z.push(
            times
                .iter()
                .map(|t| m.var(format!("z_{}_{t}", p.id), VarKind::Binary))
                .collect(),
        );
        w.push(m.var(format!("w_{}", p.id), VarKind::Continuous));
    }
    let mut nb: Vec<Vec<usize>> = Vec::new();
    for d in &instance.destinations {
        let mut row = Vec::new();
        for &t in &times {
            let v = m.var(format!("nB_{}_{t}", d.id), VarKind::Integer);
            if t + d.round_trip_at(t) > tmax {
                m.variables[v].upper = Some(0);
            }
            row.push(v);
        }
        nb.push(row);
    }
    let nt: Vec<usize> = (0..=tmax)
        .map(|t| m.var(format!("nT_{t}"), VarKind::Continuous))
        .collect();

    for j in 0..instance.num_passengers() {
        m.cost(w[j], a);
    }
    for row in &nb {
        for &v in row {
            m.cost(v, b);
        }
    }

    for p in &instance.passengers {
        let j = p.id;
        let d = &instance.destinations[p.destination];
        let mut terms = vec![(w[j], 1)];
        for (k, &t) in times.iter().enumerate() {
            terms.push((z[j][k], -(t + d.to_time_at(t))));
        }
        for &(v, _, dep) in &x[j] {
            terms.push((v, dep));
        }
        m.row(format!("ip2_{j}"), terms, RowSense::Eq, 0);
    }
    for j in 0..instance.num_passengers() {
        m.row(
            format!("ip3_{j}"),
            z[j].iter().map(|&v| (v, 1)).collect(),
            RowSense::Eq,
            1,
        );
    }
    for j in 0..instance.num_passengers() {
        m.row(
            format!("ip4_{j}"),
            x[j].iter().map(|&(v, _, _)| (v, 1)).collect(),
            RowSense::Eq,
            1,
        );
    }
    for p in &instance.passengers {
        let j = p.id;
        let d = &instance.destinations[p.destination];
        let terms: Vec<(usize, i64)> = times
            .iter()
            .enumerate()
            .map(|(k, &t)| (z[j][k], t + d.to_time_at(t)))
            .collect();
        m.row(
            format!("ip5l_{j}"),
            terms.clone(),
            RowSense::Ge,
            p.requested_arrival - instance.window,
        );
        m.row(
            format!("ip5u_{j}"),
            terms,
            RowSense::Le,
            p.requested_arrival + instance.window,
        );
    }
    for (k, &t) in times.iter().enumerate() {
        let mut terms = vec![(nt[t as usize], 1), (nt[t as usize - 1], -1)];
        for (di, d) in instance.destinations.iter().enumerate() {
            for (s, &ts) in times.iter().enumerate().take(k) {
                if ts + d.round_trip_at(ts) == t {
                    terms.push((nb[di][s], -1));
                }
            }
            terms.push((nb[di][k], 1));
        }
        m.row(format!("ip6_{t}"), terms, RowSense::Eq, 0);
    }
    for d in &instance.destinations {
        let members = instance.passengers_for(d.id);
        for (k, &t) in times.iter().enumerate() {
            let mut terms: Vec<(usize, i64)> = members.iter().map(|&j| (z[j][k], 1)).collect();
            terms.push((nb[d.id][k], -vcap));
            m.row(format!("ip7_{}_{t}", d.id), terms.clone(), RowSense::Le, 0);
            m.row(format!("ip8_{}_{t}", d.id), terms, RowSense::Ge, 1 - vcap);
        }
    }
    for j in 0..instance.num_passengers() {
        for &(v, c, _) in &x[j] {
            let arrival = instance.trips[c].terminal_arrival;
            for (k, &t) in times.iter().enumerate() {
                if arrival > t {
                    m.row(
                        format!("ip9a_{j}_{c}_{t}"),
                        vec![(v, 1), (z[j][k], 1)],
                        RowSense::Le,
                        1,
                    );
                }
            }
        }
    }
    m.row(
        "ip14".into(),
        vec![(nt[0], 1)],
        RowSense::Eq,
        instance.fleet_size as i64,
    );
    Ok(m)
}

/// Arc-flow model over one diagram per destination. A one-arc leaving at `s`
/// holds a CV over `[s, s + round_trip)`. Destinations without passengers
/// have a one-node diagram and contribute no rows.
pub fn build_nf(
    diagrams: &[DecisionDiagram],
    instance: &Instance,
    alpha: Alpha,
) -> Result<MilpModel, MilpError> {
    if diagrams.len() != instance.num_destinations() {
        return Err(MilpError::DiagramCount {
            expected: instance.num_destinations(),
            got: diagrams.len(),
        });
    }
    let mut m = MilpModel::new(ModelKind::Nf);
    let mut y: Vec<Vec<usize>> = Vec::new();
    for dd in diagrams {
        let d = dd.destination;
        let vars: Vec<usize> = dd
            .arcs()
            .iter()
            .map(|a| m.var(format!("y_{d}_{}", a.id), VarKind::Binary))
            .collect();
        for a in dd.arcs() {
            if let ArcKind::One(o) = a.kind {
                m.cost(vars[a.id], alpha.combine(o.travel, 1));
            }
        }
        y.push(vars);
    }
    for (dd, vars) in diagrams.iter().zip(&y) {
        let d = dd.destination;
        let out = |u: usize| {
            dd.out_arcs(u)
                .iter()
                .map(|&a| (vars[a], 1))
                .collect::<Vec<_>>()
        };
        let inc = |u: usize| {
            dd.in_arcs(u)
                .iter()
                .map(|&a| (vars[a], 1))
                .collect::<Vec<_>>()
        };
        if dd.root() == dd.terminal() {
            continue;
        }
        m.row(format!("src_{d}"), out(dd.root()), RowSense::Eq, 1);
        m.row(format!("snk_{d}"), inc(dd.terminal()), RowSense::Eq, 1);
        for u in 0..dd.num_nodes() {
            if u == dd.root() || u == dd.terminal() {
                continue;
            }
            let mut terms = out(u);
            terms.extend(inc(u).into_iter().map(|(v, _)| (v, -1)));
            m.row(format!("flow_{d}_{u}"), terms, RowSense::Eq, 0);
        }
    }
    let mut cap: BTreeMap<Time, Vec<(usize, i64)>> =
        (0..instance.horizon).map(|t| (t, Vec::new())).collect();
    for (dd, vars) in diagrams.iter().zip(&y) {
        for (a, o) in dd.one_arcs() {
            for t in o.start..=o.busy_until() {
                cap.entry(t).or_default().push((vars[a.id], 1));
            }
        }
    }
    for (t, terms) in cap {
        m.row(
            format!("cap_{t}"),
            terms,
            RowSense::Le,
            instance.fleet_size as i64,
        );
    }
    Ok(m)
}

pub fn export_ip(
    instance: &Instance,
    alpha: Alpha,
    path: impl AsRef<Path>,
) -> Result<MilpModel, MilpError> {
    let m = build_ip(instance, alpha)?;
    m.write_lp_file(path)?;
    Ok(m)
}

pub fn export_nf(
    diagrams: &[DecisionDiagram],
    instance: &Instance,
    alpha: Alpha,
    path: impl AsRef<Path>,
) -> Result<MilpModel, MilpError> {
    let m = build_nf(diagrams, instance, alpha)?;
    m.write_lp_file(path)?;
    Ok(m)
}

/// IP values for a schedule. Groups sharing a destination and departure are
/// packed into as few CVs as the capacity allows, the only form the
/// no-empty-CV rows accept.
pub fn ip_assignment(instance: &Instance, schedule: &Schedule) -> Result<Assignment, MilpError> {
    let mut a = Assignment::new();
    let mut boarders: BTreeMap<(usize, Time), i64> = BTreeMap::new();
    for g in &schedule.groups {
        for b in &g.members {
            let travel = crate::model::travel_time(instance, b.passenger, g.depart, b.trip)?;
            a.insert(format!("x_{}_{}", b.passenger, b.trip), 1);
            a.insert(format!("z_{}_{}", b.passenger, g.depart), 1);
            a.insert(format!("w_{}", b.passenger), travel);
        }
        *boarders.entry((g.destination, g.depart)).or_default() += g.members.len() as i64;
    }
    let vcap = instance.cv_capacity as i64;
    let mut delta: BTreeMap<Time, i64> = BTreeMap::new();
    for (&(d, t), &k) in &boarders {
        let cvs = (k + vcap - 1) / vcap;
        a.insert(format!("nB_{d}_{t}"), cvs);
        *delta.entry(t).or_default() -= cvs;
        *delta
            .entry(t + instance.destinations[d].round_trip_at(t))
            .or_default() += cvs;
    }
    let mut parked = instance.fleet_size as i64;
    for t in 0..=instance.horizon {
        parked += delta.get(&t).copied().unwrap_or(0);
        a.insert(format!("nT_{t}"), parked);
    }
    a.retain(|_, v| *v != 0);
    Ok(a)
}

/// NF values for a schedule whose groups are contiguous runs in each
/// destination's request order.
pub fn nf_assignment(
    diagrams: &[DecisionDiagram],
    schedule: &Schedule,
) -> Result<Assignment, MilpError> {
    let mut a = Assignment::new();
    for dd in diagrams {
        let d = dd.destination;
        let pos: HashMap<usize, usize> = dd
            .passengers()
            .iter()
            .enumerate()
            .map(|(i, &j)| (j, i))
            .collect();
        let mut runs = Vec::new();
        for g in schedule.groups.iter().filter(|g| g.destination == d) {
            let mut ps: Vec<usize> = g
                .members
                .iter()
                .map(|b| {
                    pos.get(&b.passenger).copied().ok_or_else(|| {
                        MilpError::Inconsistent(format!(
                            "passenger {} not in diagram {d}",
                            b.passenger
                        ))
                    })
                })
                .collect::<Result<_, _>>()?;
            ps.sort_unstable();
            if ps.is_empty() || ps[ps.len() - 1] - ps[0] + 1 != ps.len() {
                return Err(MilpError::Inconsistent(format!(
                    "group leaving at {} for destination {d} is not contiguous",
                    g.depart
                )));
            }
            runs.push((ps[0], ps[ps.len() - 1], g.depart));
        }
        runs.sort_unstable();
        let path = dd.find_path(&runs).ok_or_else(|| {
            MilpError::Inconsistent(format!("no path in diagram {d} for the schedule"))
        })?;
        for arc in path {
            a.insert(format!("y_{d}_{arc}"), 1);
        }
    }
    Ok(a)
}

/// Reads `name value` lines; `#` starts a comment.
pub fn parse_solution(text: &str) -> Result<BTreeMap<String, f64>, MilpError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let (Some(name), Some(value), None) = (it.next(), it.next(), it.next()) else {
            return Err(MilpError::Parse {
                line: i + 1,
                message: format!("expected `name value`, got `{line}`"),
            });
        };
        let value: f64 = value.parse().map_err(|_| MilpError::Parse {
            line: i + 1,
            message: format!("bad number `{value}`"),
        })?;
        if !value.is_finite() {
            return Err(MilpError::Parse {
                line: i + 1,
                message: format!("non-finite value for `{name}`"),
            });
        }
        out.insert(name.to_string(), value);
    }
    Ok(out)
}

/// Rounds every value, rejecting anything further than `1e-6` from an integer.
pub fn integral_assignment(
    model: &MilpModel,
    values: &BTreeMap<String, f64>,
) -> Result<Assignment, MilpError> {
    let mut out = Assignment::new();
    for (name, &v) in values {
        if model.variable(name).is_none() {
            return Err(MilpError::UnknownVariable(name.clone()));
        }
        let r = v.round();
        if (v - r).abs() > INTEGRALITY_TOL {
            return Err(MilpError::Fractional {
                name: name.clone(),
                value: v,
            });
        }
        if r != 0.0 {
            out.insert(name.clone(), r as i64);
        }
    }
    Ok(out)
}

fn split_name(name: &str) -> Option<(&str, Vec<i64>)> {
    let mut it = name.split('_');
    let head = it.next()?;
    let rest = it.map(|s| s.parse().ok()).collect::<Option<Vec<i64>>>()?;
    Some((head, rest))
}

fn ip_schedule(instance: &Instance, a: &Assignment) -> Result<Schedule, MilpError> {
    let n = instance.num_passengers();
    let mut depart: Vec<Option<Time>> = vec![None; n];
    let mut trip: Vec<Option<usize>> = vec![None; n];
    for (name, &v) in a {
        let Some((head, idx)) = split_name(name) else {
            continue;
        };
        if v == 0 {
            continue;
        }
        let slot = match head {
            "z" => &mut depart,
            "x" => {
                let j = idx[0] as usize;
                if trip[j].replace(idx[1] as usize).is_some() {
                    return Err(MilpError::Inconsistent(format!(
                        "passenger {j} rides two trains"
                    )));
                }
                continue;
            }
            _ => continue,
        };
        let j = idx[0] as usize;
        if slot[j].replace(idx[1]).is_some() {
            return Err(MilpError::Inconsistent(format!(
                "passenger {j} leaves the terminal twice"
            )));
        }
    }
    let mut by_slot: BTreeMap<(usize, Time), Vec<usize>> = BTreeMap::new();
    for j in 0..n {
        let t = depart[j]
            .ok_or_else(|| MilpError::Inconsistent(format!("passenger {j} has no CV departure")))?;
        if trip[j].is_none() {
            return Err(MilpError::Inconsistent(format!(
                "passenger {j} has no train"
            )));
        }
        by_slot
            .entry((instance.passengers[j].destination, t))
            .or_default()
            .push(j);
    }
    let vcap = instance.cv_capacity as usize;
    let mut groups = Vec::new();
    for ((d, t), members) in by_slot {
        for chunk in members.chunks(vcap.max(1)) {
            groups.push(GroupTrip {
                destination: d,
                depart: t,
                members: chunk
                    .iter()
                    .map(|&j| Boarding {
                        passenger: j,
                        trip: trip[j].expect("checked"),
                    })
                    .collect(),
            });
        }
    }
    Ok(Schedule::from_groups(instance, groups)?)
}

fn nf_schedule(
    diagrams: &[DecisionDiagram],
    instance: &Instance,
    a: &Assignment,
) -> Result<Schedule, MilpError> {
    let mut groups = Vec::new();
    for dd in diagrams {
        let d = dd.destination;
        let on = |arc: usize| a.get(&format!("y_{d}_{arc}")).copied().unwrap_or(0) != 0;
        let used = dd.arcs().iter().filter(|arc| on(arc.id)).count();
        let mut u = dd.root();
        let mut steps = 0;
        let mut open = Vec::new();
        while u != dd.terminal() {
            let next: Vec<usize> = dd.out_arcs(u).iter().copied().filter(|&x| on(x)).collect();
            if next.len() != 1 {
                return Err(MilpError::Inconsistent(format!(
                    "diagram {d}: {} chosen arcs leave node {u}",
                    next.len()
                )));
            }
            let arc = dd.arc(next[0]);
            open.push(dd.passengers()[dd.node(u).layer - 1]);
            if let ArcKind::One(o) = arc.kind {
                let members = std::mem::take(&mut open);
                groups.push(
                    GroupTrip::with_best_trips(instance, d, o.start, &members)
                        .map_err(MilpError::Model)?,
                );
            }
            u = arc.to;
            steps += 1;
        }
        if steps != used {
            return Err(MilpError::Inconsistent(format!(
                "diagram {d}: {used} chosen arcs but the path has {steps}"
            )));
        }
    }
    Ok(Schedule::from_groups(instance, groups)?)
}

/// Rebuilds a schedule from a solution file's values and validates it. NF
/// import needs the same diagrams the model was exported from.
pub fn import_solution(
    instance: &Instance,
    kind: ModelKind,
    diagrams: Option<&[DecisionDiagram]>,
    text: &str,
) -> Result<(Schedule, ValidationReport), MilpError> {
    let values = parse_solution(text)?;
    let schedule = match kind {
        ModelKind::Ip => {
            let model = build_ip(instance, Alpha::ONE)?;
            let a = integral_assignment(&model, &values)?;
            ip_schedule(instance, &a)?
        }
        ModelKind::Nf => {
            let diagrams = diagrams.ok_or(MilpError::DiagramCount {
                expected: instance.num_destinations(),
                got: 0,
            })?;
            let model = build_nf(diagrams, instance, Alpha::ONE)?;
            let a = integral_assignment(&model, &values)?;
            nf_schedule(diagrams, instance, &a)?
        }
    };
    let report = validate(instance, &schedule)?;
    Ok((schedule, report))
}

/// `name value` lines for the nonzero entries.
pub fn format_assignment(a: &Assignment) -> String {
    let mut s = String::new();
    for (k, v) in a {
        let _ = writeln!(s, "{k} {v}");
    }
    s
}
