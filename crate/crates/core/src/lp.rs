//! Bounded-variable revised simplex for the restricted master problem.
//!
//! Rows are `=` or `<=`; every column is bounded `[lo, hi]` with `lo` finite.
//! Each row carries a slack (fixed at zero on equality rows) and an
//! artificial used only by the phase-one cold start. The basis inverse is
//! kept dense and updated by eta pivots, with a full refactorization every
//! [`REFACTOR_EVERY`] pivots.

use std::fmt::Write as _;

use thiserror::Error;

pub const TOL_FEAS: f64 = 1e-7;
pub const TOL_CS: f64 = 1e-7;
pub const TOL_OPT: f64 = 1e-6;
pub const REFACTOR_EVERY: usize = 100;
pub const BLAND_AFTER: usize = 200;
const TOL_PIVOT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Eq,
    Le,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("no columns")]
    NoColumns,
    #[error("entry on unknown row {row}")]
    UnknownRow { row: usize },
    #[error("unknown column {column}")]
    UnknownColumn { column: usize },
    #[error("column {column} already fixed to {fixed}, cannot fix to {wanted}")]
    ContradictoryFix {
        column: usize,
        fixed: f64,
        wanted: f64,
    },
    #[error("bad bounds [{lo}, {hi}] on column {column}")]
    BadBounds { column: usize, lo: f64, hi: f64 },
    #[error("LP unbounded (entering column {column})")]
    Unbounded { column: usize },
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
}

#[derive(Debug, Clone)]
struct Row {
    sense: Sense,
    rhs: f64,
}

#[derive(Debug, Clone)]
struct Column {
    cost: f64,
    entries: Vec<(usize, f64)>,
    lo: f64,
    hi: f64,
    fixed: Option<f64>,
}

impl Column {
    fn bounds(&self) -> (f64, f64) {
        match self.fixed {
            Some(v) => (v, v),
            None => (self.lo, self.hi),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic(usize),
    Lower,
    Upper,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub primal: Vec<f64>,
    /// One per row; non-positive on `<=` rows of a minimization.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
struct Basis {
    /// Variable in each basis position.
    head: Vec<usize>,
    state: Vec<VarState>,
    /// Artificial signs, fixed at cold start.
    art_sign: Vec<f64>,
}

/// An LP under construction and its last basis.
#[derive(Debug, Clone, Default)]
pub struct LpTableau {
    rows: Vec<Row>,
    cols: Vec<Column>,
    basis: Option<Basis>,
}

struct Work<'a> {
    lp: &'a LpTableau,
    m: usize,
    n: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    head: Vec<usize>,
    state: Vec<VarState>,
    art_sign: Vec<f64>,
    binv: Vec<f64>,
    since_refactor: usize,
    iterations: usize,
    max_iterations: usize,
}

impl LpTableau {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_row(&mut self, sense: Sense, rhs: f64) -> usize {
        self.rows.push(Row { sense, rhs });
        self.basis = None;
        self.rows.len() - 1
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_columns(&self) -> usize {
        self.cols.len()
    }

    /// Appends a column bounded `[0, upper]`; the previous basis stays valid.
    pub fn add_column(
        &mut self,
        cost: f64,
        entries: &[(usize, f64)],
        upper: f64,
    ) -> Result<usize, LpError> {
        if let Some(&(row, _)) = entries.iter().find(|(r, _)| *r >= self.rows.len()) {
            return Err(LpError::UnknownRow { row });
        }
        if upper < 0.0 || upper.is_nan() {
            return Err(LpError::BadBounds {
                column: self.cols.len(),
                lo: 0.0,
                hi: upper,
            });
        }
        let mut entries: Vec<(usize, f64)> =
            entries.iter().copied().filter(|&(_, a)| a != 0.0).collect();
        entries.sort_by_key(|&(r, _)| r);
        self.cols.push(Column {
            cost,
            entries,
            lo: 0.0,
            hi: upper,
            fixed: None,
        });
        if let Some(b) = &mut self.basis {
            let at = self.cols.len() - 1;
            b.state.insert(at, VarState::Lower);
            for h in &mut b.head {
                if *h >= at {
                    *h += 1;
                }
            }
        }
        Ok(self.cols.len() - 1)
    }

    pub fn column_cost(&self, column: usize) -> f64 {
        self.cols[column].cost
    }

    pub fn column_entries(&self, column: usize) -> &[(usize, f64)] {
        &self.cols[column].entries
    }

    pub fn column_bounds(&self, column: usize) -> (f64, f64) {
        self.cols[column].bounds()
    }

    pub fn is_fixed(&self, column: usize) -> Option<f64> {
        self.cols[column].fixed
    }

    /// Tightens the column's bounds to `[value, value]`.
    pub fn fix_column(&mut self, column: usize, value: f64) -> Result<(), LpError> {
        let c = self
            .cols
            .get_mut(column)
            .ok_or(LpError::UnknownColumn { column })?;
        if let Some(fixed) = c.fixed {
            if fixed != value {
                return Err(LpError::ContradictoryFix {
                    column,
                    fixed,
                    wanted: value,
                });
            }
        }
        if value < c.lo || value > c.hi {
            return Err(LpError::BadBounds {
                column,
                lo: value,
                hi: value,
            });
        }
        c.fixed = Some(value);
        Ok(())
    }

    pub fn unfix_column(&mut self, column: usize) -> Result<(), LpError> {
        let c = self
            .cols
            .get_mut(column)
            .ok_or(LpError::UnknownColumn { column })?;
        c.fixed = None;
        Ok(())
    }

    pub fn unfix_all(&mut self) {
        for c in &mut self.cols {
            c.fixed = None;
        }
    }

    /// Reduced cost of `column` under `duals`.
    pub fn reduced_cost(&self, column: usize, duals: &[f64]) -> f64 {
        let c = &self.cols[column];
        c.cost - c.entries.iter().map(|&(r, a)| a * duals[r]).sum::<f64>()
    }

    /// Row activity `A x` for a primal vector.
    pub fn activity(&self, primal: &[f64]) -> Vec<f64> {
        let mut act = vec![0.0; self.rows.len()];
        for (c, &v) in self.cols.iter().zip(primal) {
            for &(r, a) in &c.entries {
                act[r] += a * v;
            }
        }
        act
    }

    /// Solves from the previous basis when it is still primal feasible, cold otherwise.
    pub fn solve(&mut self) -> Result<LpSolution, LpError> {
        if self.cols.is_empty() {
            return Err(LpError::NoColumns);
        }
        if let Some(basis) = self.basis.take() {
            let mut w = Work::new(self, Some(basis));
            if w.refactor() && w.primal_feasible() {
                let sol = w.phase_two()?;
                self.basis = Some(w.into_basis());
                return Ok(sol);
            }
        }
        self.solve_cold()
    }

    /// Solves from the slack/artificial basis, ignoring any previous basis.
    pub fn solve_cold(&mut self) -> Result<LpSolution, LpError> {
        if self.cols.is_empty() {
            return Err(LpError::NoColumns);
        }
        let mut w = Work::new(self, None);
        let infeasible = w.phase_one()?;
        let sol = if infeasible {
            w.solution(LpStatus::Infeasible)
        } else {
            w.phase_two()?
        };
        self.basis = Some(w.into_basis());
        Ok(sol)
    }

    /// Plain-text dump of the basis and the given duals.
    pub fn debug_dump(&self, duals: &[f64]) -> String {
        let mut s = String::new();
        let n = self.cols.len();
        let _ = writeln!(s, "rows={} cols={}", self.rows.len(), n);
        if let Some(b) = &self.basis {
            for (pos, &v) in b.head.iter().enumerate() {
                let name = if v < n {
                    format!("x{v}")
                } else if v < n + self.rows.len() {
                    format!("s{}", v - n)
                } else {
                    format!("a{}", v - n - self.rows.len())
                };
                let _ = writeln!(s, "basis[{pos}] = {name}");
            }
        } else {
            s.push_str("no basis\n");
        }
        for (r, y) in duals.iter().enumerate() {
            let _ = writeln!(s, "dual[{r}] = {y}");
        }
        s
    }
}

impl<'a> Work<'a> {
    fn new(lp: &'a LpTableau, basis: Option<Basis>) -> Self {
        let (m, n) = (lp.rows.len(), lp.cols.len());
        let nv = n + 2 * m;
        let mut lo = vec![0.0; nv];
        let mut hi = vec![0.0; nv];
        for (j, c) in lp.cols.iter().enumerate() {
            (lo[j], hi[j]) = c.bounds();
        }
        for (i, r) in lp.rows.iter().enumerate() {
            hi[n + i] = match r.sense {
                Sense::Eq => 0.0,
                Sense::Le => f64::INFINITY,
            };
        }
        let mut w = Work {
            lp,
            m,
            n,
            lo,
            hi,
            cost: vec![0.0; nv],
            x: vec![0.0; nv],
            head: Vec::new(),
            state: Vec::new(),
            art_sign: vec![1.0; m],
            binv: vec![0.0; m * m],
            since_refactor: 0,
            iterations: 0,
            max_iterations: 50_000 + 50 * (n + m),
        };
        match basis {
            Some(b) => {
                w.head = b.head;
                w.state = b.state;
                w.art_sign = b.art_sign;
                for (j, s) in w.state.iter().enumerate() {
                    w.x[j] = match s {
                        VarState::Upper if w.hi[j].is_finite() => w.hi[j],
                        _ => w.lo[j],
                    };
                }
                for j in 0..nv {
                    if w.state[j] == VarState::Upper && !w.hi[j].is_finite() {
                        w.state[j] = VarState::Lower;
                    }
                }
            }
            None => w.cold_basis(),
        }
        w
    }

    fn into_basis(self) -> Basis {
        Basis {
            head: self.head,
            state: self.state,
            art_sign: self.art_sign,
        }
    }

    fn cold_basis(&mut self) {
        let (m, n) = (self.m, self.n);
        self.state = vec![VarState::Lower; n + 2 * m];
        for j in 0..n {
            self.x[j] = self.lo[j];
        }
        let mut resid: Vec<f64> = self.lp.rows.iter().map(|r| r.rhs).collect();
        for (j, c) in self.lp.cols.iter().enumerate() {
            for &(r, a) in &c.entries {
                resid[r] -= a * self.x[j];
            }
        }
        self.head = Vec::with_capacity(m);
        for i in 0..m {
            let art = n + m + i;
            self.hi[art] = f64::INFINITY;
            if self.lp.rows[i].sense == Sense::Le && resid[i] >= 0.0 {
                self.head.push(n + i);
                self.state[n + i] = VarState::Basic(i);
                self.x[n + i] = resid[i];
                self.art_sign[i] = 1.0;
                self.hi[art] = 0.0;
            } else {
                self.art_sign[i] = if resid[i] >= 0.0 { 1.0 } else { -1.0 };
                self.head.push(art);
                self.state[art] = VarState::Basic(i);
                self.x[art] = resid[i].abs();
            }
        }
        self.binv = vec![0.0; m * m];
        for i in 0..m {
            let v = self.head[i];
            self.binv[i * m + i] = if v >= n + m { self.art_sign[i] } else { 1.0 };
        }
        self.since_refactor = 0;
    }

    fn for_column(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        let (m, n) = (self.m, self.n);
        if j < n {
            for &(r, a) in &self.lp.cols[j].entries {
                f(r, a);
            }
        } else if j < n + m {
            f(j - n, 1.0);
        } else {
            f(j - n - m, self.art_sign[j - n - m]);
        }
    }

    /// Rebuilds the inverse and basic values; false if the basis is singular.
    fn refactor(&mut self) -> bool {
        let m = self.m;
        let mut b = vec![0.0; m * m];
        for (pos, &v) in self.head.iter().enumerate() {
            self.for_column(v, |r, a| b[r * m + pos] = a);
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let piv = (col..m)
                .max_by(|&a, &c| b[a * m + col].abs().total_cmp(&b[c * m + col].abs()))
                .unwrap();
            if b[piv * m + col].abs() < 1e-11 {
                return false;
            }
            if piv != col {
                for k in 0..m {
                    b.swap(piv * m + k, col * m + k);
                    inv.swap(piv * m + k, col * m + k);
                }
            }
            let d = b[col * m + col];
            for k in 0..m {
                b[col * m + k] /= d;
                inv[col * m + k] /= d;
            }
            for r in 0..m {
                let f = b[r * m + col];
                if r != col && f != 0.0 {
                    for k in 0..m {
                        b[r * m + k] -= f * b[col * m + k];
                        inv[r * m + k] -= f * inv[col * m + k];
                    }
                }
            }
        }
        self.binv = inv;
        self.since_refactor = 0;
        self.recompute_basics();
        true
    }

    fn recompute_basics(&mut self) {
        let (m, n) = (self.m, self.n);
        let mut resid: Vec<f64> = self.lp.rows.iter().map(|r| r.rhs).collect();
        for j in 0..n + 2 * m {
            if !matches!(self.state[j], VarState::Basic(_)) && self.x[j] != 0.0 {
                let xj = self.x[j];
                self.for_column(j, |r, a| resid[r] -= a * xj);
            }
        }
        for pos in 0..m {
            let v: f64 = (0..m).map(|k| self.binv[pos * m + k] * resid[k]).sum();
            self.x[self.head[pos]] = v;
        }
    }

    fn primal_feasible(&self) -> bool {
        self.head.iter().all(|&v| {
            let scale = 1.0 + self.x[v].abs();
            self.x[v] >= self.lo[v] - TOL_FEAS * scale && self.x[v] <= self.hi[v] + TOL_FEAS * scale
        })
    }

    fn duals(&self) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (pos, &v) in self.head.iter().enumerate() {
            let c = self.cost[v];
            if c != 0.0 {
                for k in 0..m {
                    y[k] += c * self.binv[pos * m + k];
                }
            }
        }
        y
    }

    fn reduced(&self, j: usize, y: &[f64]) -> f64 {
        let mut d = self.cost[j];
        self.for_column(j, |r, a| d -= a * y[r]);
        d
    }

    /// Runs simplex iterations on the current cost vector.
    fn optimize(&mut self) -> Result<(), LpError> {
        let (m, nv) = (self.m, self.n + 2 * self.m);
        let mut stalled = 0usize;
        let mut bland = false;
        loop {
            if self.iterations >= self.max_iterations {
                return Err(LpError::IterationLimit(self.max_iterations));
            }
            if self.since_refactor >= REFACTOR_EVERY && !self.refactor() {
                // numerical trouble; keep the eta inverse
                self.since_refactor = 0;
            }
            let y = self.duals();
            let mut enter: Option<(usize, f64)> = None;
            for j in 0..nv {
                let dir = match self.state[j] {
                    VarState::Basic(_) => continue,
                    _ if self.hi[j] - self.lo[j] <= 0.0 => continue,
                    VarState::Lower => 1.0,
                    VarState::Upper => -1.0,
                };
                let d = self.reduced(j, &y);
                if dir * d < -TOL_OPT {
                    let better = match enter {
                        None => true,
                        Some((_, best)) => !bland && d.abs() > best.abs(),
                    };
                    if better {
                        enter = Some((j, d));
                    }
                    if bland {
                        break;
                    }
                }
            }
            let Some((j, d)) = enter else {
                return Ok(());
            };
            self.iterations += 1;
            let dir = if self.state[j] == VarState::Upper {
                -1.0
            } else {
                1.0
            };
            let mut w = vec![0.0; m];
            self.for_column(j, |r, a| {
                for pos in 0..m {
                    w[pos] += a * self.binv[pos * m + r];
                }
            });
            let mut theta = self.hi[j] - self.lo[j];
            let mut leave: Option<(usize, bool)> = None;
            for pos in 0..m {
                let change = -dir * w[pos];
                if change.abs() <= TOL_PIVOT {
                    continue;
                }
                let v = self.head[pos];
                let (limit, to_upper) = if change < 0.0 {
                    ((self.x[v] - self.lo[v]) / -change, false)
                } else if self.hi[v].is_finite() {
                    ((self.hi[v] - self.x[v]) / change, true)
                } else {
                    continue;
                };
                let limit = limit.max(0.0);
                let take = limit < theta - 1e-12
                    || (limit <= theta + 1e-12
                        && leave.is_some_and(|(p, _)| {
                            if bland {
                                v < self.head[p]
                            } else {
                                w[pos].abs() > w[p].abs()
                            }
                        }));
                if take {
                    theta = limit;
                    leave = Some((pos, to_upper));
                }
            }
            if !theta.is_finite() {
                return Err(LpError::Unbounded { column: j });
            }
            if theta * d.abs() <= 1e-12 {
                stalled += 1;
                if stalled > BLAND_AFTER {
                    bland = true;
                }
            } else {
                stalled = 0;
            }
            for pos in 0..m {
                let v = self.head[pos];
                self.x[v] -= dir * theta * w[pos];
            }
            self.x[j] += dir * theta;
            match leave {
                None => {
                    self.state[j] = if dir > 0.0 {
                        VarState::Upper
                    } else {
                        VarState::Lower
                    };
                    self.x[j] = if dir > 0.0 { self.hi[j] } else { self.lo[j] };
                }
                Some((r, to_upper)) => {
                    let out = self.head[r];
                    self.x[out] = if to_upper { self.hi[out] } else { self.lo[out] };
                    self.state[out] = if to_upper {
                        VarState::Upper
                    } else {
                        VarState::Lower
                    };
                    self.head[r] = j;
                    self.state[j] = VarState::Basic(r);
                    let piv = w[r];
                    for k in 0..m {
                        self.binv[r * m + k] /= piv;
                    }
                    for pos in 0..m {
                        if pos != r && w[pos] != 0.0 {
                            let f = w[pos];
                            for k in 0..m {
                                self.binv[pos * m + k] -= f * self.binv[r * m + k];
                            }
                        }
                    }
                    self.since_refactor += 1;
                }
            }
        }
    }

    /// Minimizes the artificial sum; true when the LP is infeasible.
    fn phase_one(&mut self) -> Result<bool, LpError> {
        let (m, n) = (self.m, self.n);
        self.cost = vec![0.0; n + 2 * m];
        for i in 0..m {
            self.cost[n + m + i] = 1.0;
        }
        self.optimize()?;
        let infeasibility: f64 = (0..m).map(|i| self.x[n + m + i]).sum();
        let scale = 1.0 + self.lp.rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
        for i in 0..m {
            self.hi[n + m + i] = 0.0;
        }
        Ok(infeasibility > TOL_FEAS * scale)
    }

    fn phase_two(&mut self) -> Result<LpSolution, LpError> {
        let (m, n) = (self.m, self.n);
        self.cost = vec![0.0; n + 2 * m];
        for (j, c) in self.lp.cols.iter().enumerate() {
            self.cost[j] = c.cost;
        }
        for i in 0..m {
            self.hi[n + m + i] = 0.0;
        }
        self.optimize()?;
        if self.refactor() {
            self.optimize()?;
        }
        Ok(self.solution(LpStatus::Optimal))
    }

    fn solution(&self, status: LpStatus) -> LpSolution {
        let primal: Vec<f64> = (0..self.n)
            .map(|j| self.x[j].clamp(self.lo[j], self.hi[j]))
            .collect();
        let objective = primal
            .iter()
            .zip(&self.lp.cols)
            .map(|(x, c)| x * c.cost)
            .sum();
        LpSolution {
            status,
            objective,
            primal,
            duals: if status == LpStatus::Optimal {
                self.duals()
            } else {
                vec![0.0; self.m]
            },
            iterations: self.iterations,
        }
    }
}
