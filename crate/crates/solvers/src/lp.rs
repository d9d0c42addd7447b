//! Dense two-phase primal simplex.
//!
//! Problems are built incrementally with [`LpProblem::add_var`] and
//! [`LpProblem::add_row`], then handed to [`solve_lp`]. Variables carry
//! arbitrary (possibly infinite) bounds; internally everything is shifted to
//! standard form `A x (rel) b, x >= 0` and solved on a dense tableau.
//!
//! Row duals are reported as sensitivities `d objective / d rhs` in the
//! problem's own sense, so a binding `<=` row of a maximization has a
//! non-negative dual.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};

use log::{debug, warn};
use thiserror::Error;

/// Entries below this magnitude are never used as pivots.
pub const PIVOT_TOL: f64 = 1e-9;
/// Feasibility tolerance, relative to `1 + ||b||_inf`.
pub const FEAS_TOL: f64 = 1e-7;

const COST_TOL: f64 = 1e-9;

/// Environment variable naming a directory that receives a text dump of
/// every problem passed to [`solve_lp`].
pub const DUMP_ENV: &str = "OBLITE_LP_DUMP";

static DUMP_COUNTER: AtomicUsize = AtomicUsize::new(0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowId(pub usize);

#[derive(Debug, Clone)]
struct Row {
    coeffs: Vec<(usize, f64)>,
    relation: Relation,
    rhs: f64,
}

#[derive(Debug, Clone)]
pub struct LpProblem {
    sense: Sense,
    objective: Vec<f64>,
    bounds: Vec<(f64, f64)>,
    rows: Vec<Row>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Iteration cap hit even after switching to Bland's rule.
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// One entry per row, `d objective / d rhs`.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("row {row} references variable {var} but the problem has {num_vars} variables")]
    DimensionMismatch { row: usize, var: usize, num_vars: usize },
    #[error("variable {0} has lower bound above upper bound")]
    InvertedBounds(usize),
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),
}

/// Worst-case residuals of a primal/dual pair, all non-negative.
#[derive(Debug, Clone, Copy, Default)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub complementary: f64,
    pub gap: f64,
}

impl LpProblem {
    pub fn new(sense: Sense) -> Self {
        LpProblem {
            sense,
            objective: Vec::new(),
            bounds: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> VarId {
        self.objective.push(cost);
        self.bounds.push((lower, upper));
        VarId(self.objective.len() - 1)
    }

    /// Adds a non-negative variable.
    pub fn add_nonneg(&mut self, cost: f64) -> VarId {
        self.add_var(cost, 0.0, f64::INFINITY)
    }

    pub fn add_row(&mut self, coeffs: &[(VarId, f64)], relation: Relation, rhs: f64) -> RowId {
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
        for &(v, a) in coeffs {
            match merged.iter_mut().find(|(j, _)| *j == v.0) {
                Some(entry) => entry.1 += a,
                None => merged.push((v.0, a)),
            }
        }
        self.rows.push(Row {
            coeffs: merged,
            relation,
            rhs,
        });
        RowId(self.rows.len() - 1)
    }

    pub fn set_cost(&mut self, var: VarId, cost: f64) {
        self.objective[var.0] = cost;
    }

    pub fn bounds(&self, var: VarId) -> (f64, f64) {
        self.bounds[var.0]
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::NonFinite("objective"));
        }
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if lo.is_nan() || hi.is_nan() || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(LpError::NonFinite("bounds"));
            }
            if lo > hi {
                return Err(LpError::InvertedBounds(j));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() || row.coeffs.iter().any(|(_, a)| !a.is_finite()) {
                return Err(LpError::NonFinite("constraint row"));
            }
            if let Some(&(j, _)) = row.coeffs.iter().find(|(j, _)| *j >= n) {
                return Err(LpError::DimensionMismatch {
                    row: i,
                    var: j,
                    num_vars: n,
                });
            }
        }
        Ok(())
    }

    /// Row activity `a_i . x` for every row.
    pub fn activities(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.coeffs.iter().map(|&(j, a)| a * x[j]).sum())
            .collect()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// CPLEX-style LP text, for cross-checking with external solvers.
    pub fn to_lp_format(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "\\ oblite LP dump");
        let _ = writeln!(
            out,
            "{}",
            match self.sense {
                Sense::Minimize => "Minimize",
                Sense::Maximize => "Maximize",
            }
        );
        let terms: Vec<(usize, f64)> = self
            .objective
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, c)| *c != 0.0)
            .collect();
        let _ = writeln!(out, " obj: {}", format_terms(&terms));
        let _ = writeln!(out, "Subject To");
        for (i, row) in self.rows.iter().enumerate() {
            let rel = match row.relation {
                Relation::Le => "<=",
                Relation::Eq => "=",
                Relation::Ge => ">=",
            };
            let _ = writeln!(out, " r{i}: {} {rel} {:e}", format_terms(&row.coeffs), row.rhs);
        }
        let _ = writeln!(out, "Bounds");
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            let _ = writeln!(out, " {} <= x{j} <= {}", format_bound(lo), format_bound(hi));
        }
        let _ = writeln!(out, "End");
        out
    }
}

fn format_terms(terms: &[(usize, f64)]) -> String {
    if terms.is_empty() {
        return "0 x0".to_string();
    }
    let mut s = String::new();
    for (k, &(j, a)) in terms.iter().enumerate() {
        if k > 0 {
            s.push_str(if a < 0.0 { " - " } else { " + " });
            let _ = write!(s, "{:e} x{j}", a.abs());
        } else {
            let _ = write!(s, "{a:e} x{j}");
        }
    }
    s
}

fn format_bound(b: f64) -> String {
    if b == f64::INFINITY {
        "+inf".into()
    } else if b == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{b:e}")
    }
}

impl LpSolution {
    pub fn value(&self, var: VarId) -> f64 {
        self.x[var.0]
    }

    pub fn dual(&self, row: RowId) -> f64 {
        self.duals[row.0]
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// Checks the returned primal/dual pair against `problem`. Only
    /// meaningful for `Optimal` solutions.
    pub fn residuals(&self, problem: &LpProblem) -> Residuals {
        let sign = match problem.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let act = problem.activities(&self.x);
        let mut res = Residuals::default();

        // Everything below is evaluated on the minimization form.
        let y: Vec<f64> = self.duals.iter().map(|d| sign * d).collect();
        let mut dual_obj = 0.0;
        for (i, row) in problem.rows.iter().enumerate() {
            let slack = row.rhs - act[i];
            let viol = match row.relation {
                Relation::Le => (-slack).max(0.0),
                Relation::Ge => slack.max(0.0),
                Relation::Eq => slack.abs(),
            };
            res.primal = res.primal.max(viol);
            let dual_viol = match row.relation {
                Relation::Le => y[i].max(0.0),
                Relation::Ge => (-y[i]).max(0.0),
                Relation::Eq => 0.0,
            };
            res.dual = res.dual.max(dual_viol);
            if row.relation != Relation::Eq {
                res.complementary = res.complementary.max((y[i] * slack).abs());
            }
            dual_obj += row.rhs * y[i];
        }

        let mut reduced: Vec<f64> = problem.objective.iter().map(|c| sign * c).collect();
        for (i, row) in problem.rows.iter().enumerate() {
            for &(j, a) in &row.coeffs {
                reduced[j] -= a * y[i];
            }
        }
        for (j, &(lo, hi)) in problem.bounds.iter().enumerate() {
            let x = self.x[j];
            res.primal = res.primal.max((lo - x).max(0.0)).max((x - hi).max(0.0));
            let r = reduced[j];
            if r > 0.0 {
                if lo.is_finite() {
                    dual_obj += r * lo;
                    res.complementary = res.complementary.max((r * (x - lo)).abs());
                } else {
                    res.dual = res.dual.max(r);
                }
            } else if r < 0.0 {
                if hi.is_finite() {
                    dual_obj += r * hi;
                    res.complementary = res.complementary.max((r * (hi - x)).abs());
                } else {
                    res.dual = res.dual.max(-r);
                }
            }
        }
        let primal_obj = sign * problem.objective_value(&self.x);
        res.gap = (primal_obj - dual_obj).abs();
        res
    }
}

/// Maps a user variable onto non-negative tableau columns:
/// `x = offset + sum(sign * col)`.
#[derive(Debug, Clone)]
struct ColumnMap {
    offset: f64,
    cols: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColKind {
    Structural,
    Slack,
    Artificial,
}

struct Tableau {
    m: usize,
    ncols: usize,
    /// Row-major `m x (ncols + 1)`; the last column is the rhs.
    a: Vec<f64>,
    /// Reduced costs plus `-z` in the last slot.
    d: Vec<f64>,
    basis: Vec<usize>,
    kinds: Vec<ColKind>,
    iterations: usize,
}

enum PhaseOutcome {
    Optimal,
    Unbounded,
    Stalled,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * (self.ncols + 1) + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.a[i * (self.ncols + 1) + self.ncols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.ncols + 1;
        let p = self.a[r * w + c];
        for j in 0..w {
            self.a[r * w + j] /= p;
        }
        self.a[r * w + c] = 1.0;
        let (before, rest) = self.a.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_mut(w).chain(after.chunks_mut(w)) {
            let f = row[c];
            if f != 0.0 {
                for j in 0..w {
                    row[j] -= f * prow[j];
                }
                row[c] = 0.0;
            }
        }
        let f = self.d[c];
        if f != 0.0 {
            for j in 0..w {
                self.d[j] -= f * prow[j];
            }
            self.d[c] = 0.0;
        }
        self.basis[r] = c;
        self.iterations += 1;
    }

    fn set_costs(&mut self, costs: &[f64]) {
        let w = self.ncols + 1;
        self.d = costs.to_vec();
        self.d.push(0.0);
        for i in 0..self.m {
            let cb = costs[self.basis[i]];
            if cb != 0.0 {
                for j in 0..w {
                    self.d[j] -= cb * self.a[i * w + j];
                }
            }
        }
    }

    fn run(&mut self, allow_artificial: bool, max_iter: usize) -> PhaseOutcome {
        let bland_after = 10 * (self.m + self.ncols);
        let mut degenerate = 0usize;
        let mut bland = false;
        let start = self.iterations;
        loop {
            if self.iterations - start > max_iter {
                return PhaseOutcome::Stalled;
            }
            let eligible = |j: usize, kinds: &[ColKind]| allow_artificial || kinds[j] != ColKind::Artificial;
            let entering = if bland {
                (0..self.ncols).find(|&j| self.d[j] < -COST_TOL && eligible(j, &self.kinds))
            } else {
                let mut best: Option<(usize, f64)> = None;
                for j in 0..self.ncols {
                    if self.d[j] < -COST_TOL && eligible(j, &self.kinds) {
                        if best.map_or(true, |(_, v)| self.d[j] < v) {
                            best = Some((j, self.d[j]));
                        }
                    }
                }
                best.map(|(j, _)| j)
            };
            let Some(c) = entering else {
                return PhaseOutcome::Optimal;
            };

            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let aic = self.at(i, c);
                if aic > PIVOT_TOL {
                    let ratio = self.rhs(i).max(0.0) / aic;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            let tie = (ratio - lr).abs() <= 1e-12 * (1.0 + lr.abs());
                            let better = if tie {
                                if bland {
                                    self.basis[i] < self.basis[li]
                                } else {
                                    aic > self.at(li, c)
                                }
                            } else {
                                ratio < lr
                            };
                            if better {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((r, ratio)) = leave else {
                return PhaseOutcome::Unbounded;
            };
            if ratio <= 1e-12 {
                degenerate += 1;
                if !bland && degenerate > bland_after {
                    debug!("simplex: switching to Bland's rule after {degenerate} degenerate pivots");
                    bland = true;
                }
            } else {
                degenerate = 0;
            }
            self.pivot(r, c);
        }
    }
}

/// Solves `problem` to optimality or reports why it could not.
pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution, LpError> {
    problem.validate()?;
    maybe_dump(problem);

    let n = problem.num_vars();
    let sign = match problem.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };

    // Column maps for bounds.
    let mut maps = Vec::with_capacity(n);
    let mut ncols_struct = 0usize;
    let mut extra_rows: Vec<(usize, f64)> = Vec::new(); // (col, upper) rows col <= upper
    for &(lo, hi) in &problem.bounds {
        let map = if lo.is_finite() {
            let col = ncols_struct;
            ncols_struct += 1;
            if hi.is_finite() {
                extra_rows.push((col, hi - lo));
            }
            ColumnMap {
                offset: lo,
                cols: vec![(col, 1.0)],
            }
        } else if hi.is_finite() {
            let col = ncols_struct;
            ncols_struct += 1;
            ColumnMap {
                offset: hi,
                cols: vec![(col, -1.0)],
            }
        } else {
            let col = ncols_struct;
            ncols_struct += 2;
            ColumnMap {
                offset: 0.0,
                cols: vec![(col, 1.0), (col + 1, -1.0)],
            }
        };
        maps.push(map);
    }

    // Internal rows: dense structural coefficients, relation, rhs, scale.
    struct IRow {
        coeffs: Vec<f64>,
        relation: Relation,
        rhs: f64,
        scale: f64,
    }
    let mut irows: Vec<IRow> = Vec::with_capacity(problem.rows.len() + extra_rows.len());
    for row in &problem.rows {
        let mut coeffs = vec![0.0; ncols_struct];
        let mut rhs = row.rhs;
        for &(j, a) in &row.coeffs {
            rhs -= a * maps[j].offset;
            for &(col, s) in &maps[j].cols {
                coeffs[col] += a * s;
            }
        }
        irows.push(IRow {
            coeffs,
            relation: row.relation,
            rhs,
            scale: 1.0,
        });
    }
    for &(col, ub) in &extra_rows {
        let mut coeffs = vec![0.0; ncols_struct];
        coeffs[col] = 1.0;
        irows.push(IRow {
            coeffs,
            relation: Relation::Le,
            rhs: ub,
            scale: 1.0,
        });
    }
    for row in &mut irows {
        let big = row.coeffs.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        let mut s = if big > 0.0 { 1.0 / big } else { 1.0 };
        if row.rhs * s < 0.0 {
            s = -s;
            row.relation = match row.relation {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
        for a in &mut row.coeffs {
            *a *= s;
        }
        row.rhs *= s;
        row.scale = s;
    }

    let m = irows.len();
    let n_slack = irows.iter().filter(|r| r.relation != Relation::Eq).count();
    let n_art = irows.iter().filter(|r| r.relation != Relation::Le).count();
    let ncols = ncols_struct + n_slack + n_art;
    let w = ncols + 1;
    let mut a = vec![0.0; m * w];
    let mut kinds = vec![ColKind::Structural; ncols_struct];
    kinds.extend(std::iter::repeat(ColKind::Slack).take(n_slack));
    kinds.extend(std::iter::repeat(ColKind::Artificial).take(n_art));
    let mut basis = vec![0usize; m];
    let mut unit_col = vec![0usize; m];
    let mut next_slack = ncols_struct;
    let mut next_art = ncols_struct + n_slack;
    for (i, row) in irows.iter().enumerate() {
        a[i * w..i * w + ncols_struct].copy_from_slice(&row.coeffs);
        a[i * w + ncols] = row.rhs;
        match row.relation {
            Relation::Le => {
                a[i * w + next_slack] = 1.0;
                basis[i] = next_slack;
                unit_col[i] = next_slack;
                next_slack += 1;
            }
            Relation::Ge => {
                a[i * w + next_slack] = -1.0;
                next_slack += 1;
                a[i * w + next_art] = 1.0;
                basis[i] = next_art;
                unit_col[i] = next_art;
                next_art += 1;
            }
            Relation::Eq => {
                a[i * w + next_art] = 1.0;
                basis[i] = next_art;
                unit_col[i] = next_art;
                next_art += 1;
            }
        }
    }

    let mut tab = Tableau {
        m,
        ncols,
        a,
        d: Vec::new(),
        basis,
        kinds,
        iterations: 0,
    };
    let max_iter = 50 * (m + ncols) + 1000;
    let bnorm = irows.iter().fold(0.0f64, |acc, r| acc.max(r.rhs.abs()));

    let failure = |status: LpStatus, iterations: usize| LpSolution {
        status,
        x: vec![0.0; n],
        objective: f64::NAN,
        duals: vec![0.0; problem.rows.len()],
        iterations,
    };

    if n_art > 0 {
        let costs: Vec<f64> = tab
            .kinds
            .iter()
            .map(|k| if *k == ColKind::Artificial { 1.0 } else { 0.0 })
            .collect();
        tab.set_costs(&costs);
        match tab.run(true, max_iter) {
            PhaseOutcome::Optimal => {}
            PhaseOutcome::Unbounded => unreachable!("phase one objective is bounded below"),
            PhaseOutcome::Stalled => {
                warn!("simplex phase one hit the iteration cap");
                return Ok(failure(LpStatus::NumericalFailure, tab.iterations));
            }
        }
        let infeas = -tab.d[ncols];
        if infeas > FEAS_TOL * (1.0 + bnorm) {
            return Ok(failure(LpStatus::Infeasible, tab.iterations));
        }
        for i in 0..m {
            if tab.kinds[tab.basis[i]] == ColKind::Artificial {
                let col = (0..ncols)
                    .filter(|&j| tab.kinds[j] != ColKind::Artificial)
                    .max_by(|&x, &y| tab.at(i, x).abs().total_cmp(&tab.at(i, y).abs()))
                    .filter(|&j| tab.at(i, j).abs() > PIVOT_TOL);
                if let Some(j) = col {
                    tab.pivot(i, j);
                }
            }
        }
    }

    let mut costs = vec![0.0; ncols];
    for (j, &c) in problem.objective.iter().enumerate() {
        for &(col, s) in &maps[j].cols {
            costs[col] += sign * c * s;
        }
    }
    tab.set_costs(&costs);
    match tab.run(false, max_iter) {
        PhaseOutcome::Optimal => {}
        PhaseOutcome::Unbounded => return Ok(failure(LpStatus::Unbounded, tab.iterations)),
        PhaseOutcome::Stalled => {
            warn!("simplex phase two hit the iteration cap");
            return Ok(failure(LpStatus::NumericalFailure, tab.iterations));
        }
    }

    let mut colval = vec![0.0; ncols];
    for i in 0..m {
        colval[tab.basis[i]] = tab.rhs(i).max(0.0);
    }
    let x: Vec<f64> = maps
        .iter()
        .map(|map| map.offset + map.cols.iter().map(|&(c, s)| s * colval[c]).sum::<f64>())
        .collect();
    let duals: Vec<f64> = (0..problem.rows.len())
        .map(|i| {
            let y = -tab.d[unit_col[i]];
            sign * y * irows[i].scale
        })
        .collect();
    let sol = LpSolution {
        status: LpStatus::Optimal,
        objective: problem.objective_value(&x),
        x,
        duals,
        iterations: tab.iterations,
    };

    #[cfg(debug_assertions)]
    {
        let r = sol.residuals(problem);
        let scale = 1.0 + sol.objective.abs();
        if r.gap > 1e-6 * scale || r.primal > 1e-6 * (1.0 + bnorm) {
            debug!("simplex certificate residuals larger than expected: {r:?}");
        }
    }
    Ok(sol)
}

fn maybe_dump(problem: &LpProblem) {
    let Some(dir) = std::env::var_os(DUMP_ENV) else {
        return;
    };
    let k = DUMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    let path = std::path::Path::new(&dir).join(format!("lp_{k:06}.lp"));
    if let Err(e) = std::fs::write(&path, problem.to_lp_format()) {
        warn!("could not write LP dump {}: {e}", path.display());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_certified(p: &LpProblem, s: &LpSolution) {
        let r = s.residuals(p);
        assert!(r.primal <= 1e-7, "{r:?}");
        assert!(r.dual <= 1e-7, "{r:?}");
        assert!(r.complementary <= 1e-6, "{r:?}");
        assert!(r.gap <= 1e-6 * (1.0 + s.objective.abs()), "{r:?}");
    }

    #[test]
    fn single_var_upper_row() {
        let mut p = LpProblem::new(Sense::Maximize);
        let x = p.add_nonneg(1.0);
        p.add_row(&[(x, 1.0)], Relation::Le, 5.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.value(x) - 5.0).abs() < 1e-12);
        assert!((s.objective - 5.0).abs() < 1e-12);
        assert_certified(&p, &s);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut p = LpProblem::new(Sense::Minimize);
        let x = p.add_var(1.0, f64::NEG_INFINITY, f64::INFINITY);
        p.add_row(&[(x, 1.0)], Relation::Ge, 1.0);
        p.add_row(&[(x, 1.0)], Relation::Le, 0.0);
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn dual_of_budget_row() {
        // max x + y, x + y <= 1: the row's shadow price is 1.
        let mut p = LpProblem::new(Sense::Maximize);
        let x = p.add_nonneg(1.0);
        let y = p.add_nonneg(1.0);
        let r = p.add_row(&[(x, 1.0), (y, 1.0)], Relation::Le, 1.0);
        let s = solve_lp(&p).unwrap();
        assert!((s.objective - 1.0).abs() < 1e-12);
        assert!((s.dual(r) - 1.0).abs() < 1e-12);
        assert_certified(&p, &s);
    }

    #[test]
    fn unbounded_detected() {
        let mut p = LpProblem::new(Sense::Maximize);
        let x = p.add_nonneg(1.0);
        let y = p.add_nonneg(0.0);
        p.add_row(&[(x, 1.0), (y, -1.0)], Relation::Le, 1.0);
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn free_and_upper_bounded_vars() {
        // min x - y, x free, y <= 3, x >= y - 10, x + y >= -4
        let mut p = LpProblem::new(Sense::Minimize);
        let x = p.add_var(1.0, f64::NEG_INFINITY, f64::INFINITY);
        let y = p.add_var(-1.0, f64::NEG_INFINITY, 3.0);
        p.add_row(&[(x, 1.0), (y, -1.0)], Relation::Ge, -10.0);
        p.add_row(&[(x, 1.0), (y, 1.0)], Relation::Ge, -4.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 10.0).abs() < 1e-9, "{}", s.objective);
        assert_certified(&p, &s);
    }

    #[test]
    fn equality_rows_and_redundancy() {
        let mut p = LpProblem::new(Sense::Minimize);
        let x = p.add_nonneg(2.0);
        let y = p.add_nonneg(3.0);
        p.add_row(&[(x, 1.0), (y, 1.0)], Relation::Eq, 4.0);
        p.add_row(&[(x, 2.0), (y, 2.0)], Relation::Eq, 8.0);
        p.add_row(&[(x, 1.0)], Relation::Le, 3.0);
        let s = solve_lp(&p).unwrap();
        assert!((s.objective - 9.0).abs() < 1e-9);
        assert_certified(&p, &s);
    }

    #[test]
    fn rejects_foreign_variable() {
        let mut p = LpProblem::new(Sense::Minimize);
        p.add_nonneg(1.0);
        p.add_row(&[(VarId(3), 1.0)], Relation::Le, 1.0);
        assert!(matches!(solve_lp(&p), Err(LpError::DimensionMismatch { .. })));
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's example cycles under the textbook Dantzig rule.
        let mut p = LpProblem::new(Sense::Minimize);
        let x4 = p.add_nonneg(-0.75);
        let x5 = p.add_nonneg(150.0);
        let x6 = p.add_nonneg(-0.02);
        let x7 = p.add_nonneg(6.0);
        p.add_row(&[(x4, 0.25), (x5, -60.0), (x6, -0.04), (x7, 9.0)], Relation::Le, 0.0);
        p.add_row(&[(x4, 0.5), (x5, -90.0), (x6, -0.02), (x7, 3.0)], Relation::Le, 0.0);
        p.add_row(&[(x6, 1.0)], Relation::Le, 1.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 0.05).abs() < 1e-9);
        assert_certified(&p, &s);
    }

    #[test]
    fn lp_dump_lists_every_row() {
        let mut p = LpProblem::new(Sense::Maximize);
        let x = p.add_nonneg(1.0);
        p.add_row(&[(x, 1.0)], Relation::Le, 5.0);
        let text = p.to_lp_format();
        assert!(text.contains("Maximize"));
        assert!(text.contains(" r0: "));
        assert!(text.trim_end().ends_with("End"));
    }
}
