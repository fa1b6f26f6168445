//! Result JSON and sweep CSV. Every reported travel, trip count and objective
//! is recomputed from a validated schedule.

use std::io;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bp::{SolveResult, SolveStatus};
use crate::model::{travel_time, Alpha, Boarding, GroupTrip, Instance, ModelError, Schedule};
use crate::oracle::OracleSolution;
use crate::validate::validate;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("solver returned an invalid schedule: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberJson {
    pub passenger: usize,
    pub trip: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupJson {
    pub dest: usize,
    pub depart: i64,
    pub members: Vec<MemberJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub engine: String,
    pub alpha: f64,
    pub status: String,
    pub objective: Option<f64>,
    /// Exact objective as `numer/denom`.
    pub objective_exact: Option<String>,
    pub travel: Option<i64>,
    pub trips: Option<i64>,
    pub lower_bound: Option<f64>,
    pub upper_bound: Option<f64>,
    pub gap_percent: Option<f64>,
    pub root_bound: Option<f64>,
    pub nodes: usize,
    pub columns: usize,
    pub wall_ms: Option<u64>,
    pub schedule: Vec<GroupJson>,
}

/// Travel and trip totals of a schedule that passes validation.
pub fn checked_totals(instance: &Instance, schedule: &Schedule) -> Result<(i64, i64), ReportError> {
    let report = validate(instance, schedule)?;
    if !report.is_feasible() {
        let tags: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
        return Err(ReportError::Invalid(tags.join("; ")));
    }
    let mut travel = 0;
    for g in &schedule.groups {
        for b in &g.members {
            travel += travel_time(instance, b.passenger, g.depart, b.trip)?;
        }
    }
    Ok((travel, schedule.groups.len() as i64))
}

pub fn schedule_json(schedule: &Schedule) -> Vec<GroupJson> {
    let mut s = schedule.clone();
    s.canonicalize();
    s.groups
        .iter()
        .map(|g| GroupJson {
            dest: g.destination,
            depart: g.depart,
            members: g
                .members
                .iter()
                .map(|b| MemberJson {
                    passenger: b.passenger,
                    trip: b.trip,
                })
                .collect(),
        })
        .collect()
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScheduleFile {
    Bare(Vec<GroupJson>),
    Wrapped { schedule: Vec<GroupJson> },
}

/// Groups from either a bare JSON array or a result file's `schedule` field.
pub fn parse_schedule_json(text: &str) -> Result<Vec<GroupJson>, serde_json::Error> {
    Ok(match serde_json::from_str(text)? {
        ScheduleFile::Bare(g) => g,
        ScheduleFile::Wrapped { schedule } => schedule,
    })
}

/// A schedule as written, for validation. Boardings that cannot produce a
/// travel time are left out of the stored total and reported by `validate`.
pub fn schedule_from_json(instance: &Instance, groups: &[GroupJson]) -> Schedule {
    let groups: Vec<GroupTrip> = groups
        .iter()
        .map(|g| GroupTrip {
            destination: g.dest,
            depart: g.depart,
            members: g
                .members
                .iter()
                .map(|m| Boarding {
                    passenger: m.passenger,
                    trip: m.trip,
                })
                .collect(),
        })
        .collect();
    let travel = groups
        .iter()
        .flat_map(|g| g.members.iter().map(move |b| (g.depart, b)))
        .filter_map(|(t, b)| travel_time(instance, b.passenger, t, b.trip).ok())
        .sum();
    Schedule {
        objective_trips: groups.len() as i64,
        groups,
        objective_travel: travel,
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn millis(d: Duration, timing: bool) -> Option<u64> {
    timing.then(|| d.as_millis() as u64)
}

impl SolveReport {
    fn base(engine: &str, alpha: Alpha, status: &str) -> Self {
        SolveReport {
            engine: engine.to_string(),
            alpha: alpha.as_f64(),
            status: status.to_string(),
            objective: None,
            objective_exact: None,
            travel: None,
            trips: None,
            lower_bound: None,
            upper_bound: None,
            gap_percent: None,
            root_bound: None,
            nodes: 0,
            columns: 0,
            wall_ms: None,
            schedule: Vec::new(),
        }
    }

    fn fill_schedule(
        &mut self,
        instance: &Instance,
        alpha: Alpha,
        schedule: &Schedule,
    ) -> Result<(), ReportError> {
        let (travel, trips) = checked_totals(instance, schedule)?;
        let value = alpha.combine(travel, trips);
        self.travel = Some(travel);
        self.trips = Some(trips);
        self.objective = Some(*value.numer() as f64 / *value.denom() as f64);
        self.objective_exact = Some(format!("{}/{}", value.numer(), value.denom()));
        self.schedule = schedule_json(schedule);
        Ok(())
    }

    pub fn from_bp(
        instance: &Instance,
        alpha: Alpha,
        result: &SolveResult,
        timing: bool,
    ) -> Result<Self, ReportError> {
        let mut r = SolveReport::base("bp", alpha, result.status.as_str());
        if let Some(s) = &result.schedule {
            r.fill_schedule(instance, alpha, s)?;
        }
        r.lower_bound = finite(result.lower_bound);
        r.upper_bound = r.objective;
        r.gap_percent = r
            .objective
            .zip(r.lower_bound)
            .and_then(|(ub, lb)| crate::bp::gap_percent(ub, lb));
        r.root_bound = finite(result.root_bound);
        r.nodes = result.nodes;
        r.columns = result.columns;
        r.wall_ms = millis(result.wall_time, timing);
        Ok(r)
    }

    /// `solution` is `None` when the instance has no feasible schedule.
    pub fn from_oracle(
        instance: &Instance,
        alpha: Alpha,
        solution: Option<&OracleSolution>,
        wall: Duration,
        timing: bool,
    ) -> Result<Self, ReportError> {
        let status = if solution.is_some() {
            "optimal"
        } else {
            "infeasible"
        };
        let mut r = SolveReport::base("oracle", alpha, status);
        if let Some(sol) = solution {
            r.fill_schedule(instance, alpha, &sol.schedule)?;
            r.lower_bound = r.objective;
            r.upper_bound = r.objective;
            r.gap_percent = Some(0.0);
        }
        r.wall_ms = millis(wall, timing);
        Ok(r)
    }

    /// A run stopped by a limit before producing anything.
    pub fn limit_hit(engine: &str, alpha: Alpha, wall: Duration, timing: bool) -> Self {
        let mut r = SolveReport::base(engine, alpha, "limit");
        r.wall_ms = millis(wall, timing);
        r
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plain data");
        s.push('\n');
        s
    }
}

/// Process exit code for a solve: 0 proven optimal, 2 feasible but unproven,
/// 3 infeasible, 4 stopped without a schedule.
pub fn exit_code(status: &str, has_schedule: bool) -> i32 {
    match (status, has_schedule) {
        ("optimal", true) => 0,
        ("infeasible", _) => 3,
        (_, true) => 2,
        _ => 4,
    }
}

pub fn bp_status_code(status: SolveStatus, has_schedule: bool) -> i32 {
    exit_code(status.as_str(), has_schedule)
}

/// One sweep cell. Column order is the CSV schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub instance: String,
    pub alpha: f64,
    #[serde(rename = "Tw")]
    pub tw: i64,
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub m: u32,
    pub travel_total: Option<i64>,
    pub trips: Option<i64>,
    pub lower_bound: Option<f64>,
    pub gap_percent: Option<f64>,
    pub wall_ms: Option<u64>,
    pub nodes: usize,
    pub columns: usize,
    pub status: String,
}

pub const SWEEP_HEADER: [&str; 14] = [
    "instance",
    "alpha",
    "Tw",
    "n",
    "K",
    "m",
    "travel_total",
    "trips",
    "lower_bound",
    "gap_percent",
    "wall_ms",
    "nodes",
    "columns",
    "status",
];

impl SweepRow {
    pub fn new(name: &str, instance: &Instance, report: &SolveReport) -> Self {
        SweepRow {
            instance: name.to_string(),
            alpha: report.alpha,
            tw: instance.window,
            n: instance.num_passengers(),
            k: instance.num_destinations(),
            m: instance.fleet_size,
            travel_total: report.travel,
            trips: report.trips,
            lower_bound: report.lower_bound,
            gap_percent: report.gap_percent,
            wall_ms: report.wall_ms,
            nodes: report.nodes,
            columns: report.columns,
            status: report.status.clone(),
        }
    }

    pub fn failed(name: &str, instance: &Instance, alpha: Alpha, message: &str) -> Self {
        let mut r = SweepRow::new(name, instance, &SolveReport::base("bp", alpha, ""));
        r.status = format!("error: {message}");
        r
    }
}

/// Writes the sweep table; `trips_x100` scales the trips column by 100.
pub fn write_sweep_csv(
    rows: &[SweepRow],
    out: impl io::Write,
    trips_x100: bool,
) -> Result<(), ReportError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for row in rows {
        let mut row = row.clone();
        if trips_x100 {
            row.trips = row.trips.map(|t| t * 100);
        }
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
