//! Dense two-phase simplex with Bland's pivot rule.
//!
//! Self-contained: no dependence on the packing types, so it can be
//! oracle-tested against basic-solution enumeration on random programs.
//! Bland's rule trades speed for guaranteed termination; the bin packing
//! relaxations this solver serves are heavily degenerate.

use thiserror::Error;

use crate::core::EPS_NUM;

/// Minimize `objective . x` subject to `eq`, `le` and `x >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub eq: Vec<(Vec<f64>, f64)>,
    pub le: Vec<(Vec<f64>, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpOutcome {
    pub status: LpStatus,
    /// Present iff `status == Optimal`.
    pub solution: Option<Vec<f64>>,
    pub objective_value: f64,
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("non-finite coefficient in linear program")]
    NonFinite,
    #[error("row has {found} coefficients, objective has {expected}")]
    RowShape { expected: usize, found: usize },
    #[error("iteration limit {limit} exceeded")]
    IterationLimit { limit: usize },
    #[error("optimal solution failed re-verification, residual {residual:e}")]
    Verification { residual: f64 },
}

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;

/// Solves the program to optimality (or reports Infeasible / Unbounded).
pub fn solve_lp(lp: &LinearProgram) -> Result<LpOutcome, LpError> {
    let mut t = Tableau::build(lp)?;
    match t {
        TableauOrVerdict::Verdict(status) => Ok(trivial_outcome(lp, status)),
        TableauOrVerdict::Tableau(ref mut tab) => {
            if !tab.phase_one()? {
                return Ok(LpOutcome {
                    status: LpStatus::Infeasible,
                    solution: None,
                    objective_value: f64::NAN,
                });
            }
            match tab.phase_two(&lp.objective)? {
                PhaseTwo::Unbounded => Ok(LpOutcome {
                    status: LpStatus::Unbounded,
                    solution: None,
                    objective_value: f64::NEG_INFINITY,
                }),
                PhaseTwo::Optimal => {
                    let x = tab.extract(lp.objective.len());
                    let residual = feasibility_residual(lp, &x);
                    let scale = 1.0 + magnitude(lp);
                    if residual > EPS_NUM * scale {
                        return Err(LpError::Verification { residual });
                    }
                    let objective_value =
                        lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
                    Ok(LpOutcome {
                        status: LpStatus::Optimal,
                        solution: Some(x),
                        objective_value,
                    })
                }
            }
        }
    }
}

/// Phase-one only: does a feasible point exist?
pub fn check_feasible(lp: &LinearProgram) -> Result<bool, LpError> {
    let mut t = Tableau::build(lp)?;
    match t {
        TableauOrVerdict::Verdict(LpStatus::Infeasible) => Ok(false),
        TableauOrVerdict::Verdict(_) => Ok(true),
        TableauOrVerdict::Tableau(ref mut tab) => tab.phase_one(),
    }
}

fn trivial_outcome(lp: &LinearProgram, status: LpStatus) -> LpOutcome {
    match status {
        // All rows were dropped by presolve; x = 0 is feasible and optimal
        // for nonnegative objectives only when every coefficient >= 0,
        // otherwise the program is unbounded below.
        LpStatus::Optimal => {
            if lp.objective.iter().all(|&c| c >= 0.0) {
                LpOutcome {
                    status: LpStatus::Optimal,
                    solution: Some(vec![0.0; lp.objective.len()]),
                    objective_value: 0.0,
                }
            } else {
                LpOutcome {
                    status: LpStatus::Unbounded,
                    solution: None,
                    objective_value: f64::NEG_INFINITY,
                }
            }
        }
        LpStatus::Infeasible => LpOutcome {
            status: LpStatus::Infeasible,
            solution: None,
            objective_value: f64::NAN,
        },
        LpStatus::Unbounded => unreachable!(),
    }
}

/// Largest-magnitude residual of `x` against the raw constraint data.
pub fn feasibility_residual(lp: &LinearProgram, x: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for v in x {
        worst = worst.max(-v);
    }
    for (row, rhs) in &lp.eq {
        let lhs: f64 = row.iter().zip(x).map(|(a, v)| a * v).sum();
        worst = worst.max((lhs - rhs).abs());
    }
    for (row, rhs) in &lp.le {
        let lhs: f64 = row.iter().zip(x).map(|(a, v)| a * v).sum();
        worst = worst.max(lhs - rhs);
    }
    worst.max(0.0)
}

fn magnitude(lp: &LinearProgram) -> f64 {
    let mut m: f64 = 0.0;
    for (row, rhs) in lp.eq.iter().chain(&lp.le) {
        m = m.max(rhs.abs());
        for a in row {
            m = m.max(a.abs());
        }
    }
    m
}

enum TableauOrVerdict {
    Tableau(Tableau),
    Verdict(LpStatus),
}

enum PhaseTwo {
    Optimal,
    Unbounded,
}

/// Row-major dense tableau. Columns: structural vars, slacks, artificials,
/// then the rhs.
struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cost: Vec<f64>,
    nvars: usize,
    nslack: usize,
    nart: usize,
    iterations: usize,
    limit: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Result<TableauOrVerdict, LpError> {
        let nvars = lp.objective.len();
        for c in &lp.objective {
            if !c.is_finite() {
                return Err(LpError::NonFinite);
            }
        }
        let mut kept_eq = Vec::new();
        let mut kept_le = Vec::new();
        for (row, rhs) in &lp.eq {
            if row.len() != nvars {
                return Err(LpError::RowShape {
                    expected: nvars,
                    found: row.len(),
                });
            }
            if !rhs.is_finite() || row.iter().any(|a| !a.is_finite()) {
                return Err(LpError::NonFinite);
            }
            if row.iter().all(|&a| a == 0.0) {
                if rhs.abs() > EPS_NUM {
                    return Ok(TableauOrVerdict::Verdict(LpStatus::Infeasible));
                }
                continue;
            }
            kept_eq.push((row, rhs));
        }
        for (row, rhs) in &lp.le {
            if row.len() != nvars {
                return Err(LpError::RowShape {
                    expected: nvars,
                    found: row.len(),
                });
            }
            if !rhs.is_finite() || row.iter().any(|a| !a.is_finite()) {
                return Err(LpError::NonFinite);
            }
            if row.iter().all(|&a| a == 0.0) {
                if *rhs < -EPS_NUM {
                    return Ok(TableauOrVerdict::Verdict(LpStatus::Infeasible));
                }
                continue;
            }
            kept_le.push((row, rhs));
        }
        let nrows = kept_eq.len() + kept_le.len();
        if nrows == 0 {
            return Ok(TableauOrVerdict::Verdict(LpStatus::Optimal));
        }
        let nslack = kept_le.len();
        // An artificial is needed for every eq row, and for le rows whose
        // slack ends up with a -1 coefficient after sign normalization.
        let need_art: Vec<bool> = kept_eq
            .iter()
            .map(|_| true)
            .chain(kept_le.iter().map(|(_, rhs)| **rhs < 0.0))
            .collect();
        let nart = need_art.iter().filter(|&&b| b).count();
        let ncols = nvars + nslack + nart + 1;
        let mut rows = vec![vec![0.0; ncols]; nrows];
        let mut basis = vec![0usize; nrows];
        let mut slack_idx = 0usize;
        let mut art_idx = 0usize;
        let mut r = 0usize;
        for (row, &rhs) in kept_eq {
            let sign = if rhs < 0.0 { -1.0 } else { 1.0 };
            for (c, &a) in row.iter().enumerate() {
                rows[r][c] = sign * a;
            }
            rows[r][ncols - 1] = sign * rhs;
            let art = nvars + nslack + art_idx;
            art_idx += 1;
            rows[r][art] = 1.0;
            basis[r] = art;
            r += 1;
        }
        for (row, &rhs) in kept_le {
            let sign = if rhs < 0.0 { -1.0 } else { 1.0 };
            for (c, &a) in row.iter().enumerate() {
                rows[r][c] = sign * a;
            }
            rows[r][ncols - 1] = sign * rhs;
            let slack = nvars + slack_idx;
            slack_idx += 1;
            rows[r][slack] = sign;
            if rhs < 0.0 {
                let art = nvars + nslack + art_idx;
                art_idx += 1;
                rows[r][art] = 1.0;
                basis[r] = art;
            } else {
                basis[r] = slack;
            }
            r += 1;
        }
        let limit = 50 * (nvars + nrows);
        Ok(TableauOrVerdict::Tableau(Tableau {
            rows,
            basis,
            cost: Vec::new(),
            nvars,
            nslack,
            nart,
            iterations: 0,
            limit,
        }))
    }

    fn ncols(&self) -> usize {
        self.nvars + self.nslack + self.nart + 1
    }

    fn rhs_col(&self) -> usize {
        self.ncols() - 1
    }

    /// Minimizes the sum of artificials. Returns whether it reaches zero,
    /// then drives surviving artificials out of the basis.
    fn phase_one(&mut self) -> Result<bool, LpError> {
        let ncols = self.ncols();
        let art_lo = self.nvars + self.nslack;
        let mut cost = vec![0.0; ncols];
        for a in art_lo..ncols - 1 {
            cost[a] = 1.0;
        }
        // price out basic artificials
        for (r, &b) in self.basis.iter().enumerate() {
            if b >= art_lo {
                for c in 0..ncols {
                    cost[c] -= self.rows[r][c];
                }
            }
        }
        self.cost = cost;
        self.iterate(art_lo)?;
        let phase_obj = -self.cost[self.rhs_col()];
        if phase_obj > EPS_NUM {
            return Ok(false);
        }
        self.evict_artificials();
        Ok(true)
    }

    /// Pivots remaining basic artificials out, dropping redundant rows.
    fn evict_artificials(&mut self) {
        let art_lo = self.nvars + self.nslack;
        let mut drop_rows = Vec::new();
        for r in 0..self.rows.len() {
            if self.basis[r] < art_lo {
                continue;
            }
            let mut pivoted = false;
            for c in 0..art_lo {
                if self.rows[r][c].abs() > PIVOT_TOL {
                    self.pivot(r, c);
                    pivoted = true;
                    break;
                }
            }
            if !pivoted {
                drop_rows.push(r);
            }
        }
        for &r in drop_rows.iter().rev() {
            self.rows.remove(r);
            self.basis.remove(r);
        }
        // neutralize artificial columns so they can never re-enter
        let rhs = self.rhs_col();
        for row in &mut self.rows {
            for c in art_lo..rhs {
                row[c] = 0.0;
            }
        }
    }

    fn phase_two(&mut self, objective: &[f64]) -> Result<PhaseTwo, LpError> {
        let ncols = self.ncols();
        let art_lo = self.nvars + self.nslack;
        let mut cost = vec![0.0; ncols];
        cost[..self.nvars].copy_from_slice(objective);
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                for c in 0..ncols {
                    cost[c] -= cb * self.rows[r][c];
                }
            }
        }
        self.cost = cost;
        if self.iterate(art_lo)? {
            Ok(PhaseTwo::Optimal)
        } else {
            Ok(PhaseTwo::Unbounded)
        }
    }

    /// Bland's rule simplex loop over columns `0..col_hi`. Returns false on
    /// unboundedness.
    fn iterate(&mut self, col_hi: usize) -> Result<bool, LpError> {
        let rhs = self.rhs_col();
        loop {
            self.iterations += 1;
            if self.iterations > self.limit {
                return Err(LpError::IterationLimit { limit: self.limit });
            }
            // entering: lowest-index column with negative reduced cost
            let entering = (0..col_hi).find(|&c| self.cost[c] < -COST_TOL);
            let Some(entering) = entering else {
                return Ok(true);
            };
            // leaving: min ratio, ties broken by smallest basic index
            let mut best: Option<(f64, usize, usize)> = None; // (ratio, basic var, row)
            for r in 0..self.rows.len() {
                let a = self.rows[r][entering];
                if a > PIVOT_TOL {
                    let ratio = self.rows[r][rhs] / a;
                    let key = (ratio, self.basis[r], r);
                    match best {
                        None => best = Some(key),
                        Some((br, bb, _)) => {
                            if ratio < br - 1e-12
                                || (ratio < br + 1e-12 && self.basis[r] < bb)
                            {
                                best = Some(key);
                            }
                        }
                    }
                }
            }
            let Some((_, _, row)) = best else {
                return Ok(false); // unbounded direction
            };
            self.pivot(row, entering);
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let ncols = self.ncols();
        let p = self.rows[row][col];
        for c in 0..ncols {
            self.rows[row][c] /= p;
        }
        self.rows[row][col] = 1.0;
        for r in 0..self.rows.len() {
            if r == row {
                continue;
            }
            let f = self.rows[r][col];
            if f != 0.0 {
                for c in 0..ncols {
                    self.rows[r][c] -= f * self.rows[row][c];
                }
                self.rows[r][col] = 0.0;
            }
        }
        let f = self.cost[col];
        if f != 0.0 {
            for c in 0..ncols {
                self.cost[c] -= f * self.rows[row][c];
            }
            self.cost[col] = 0.0;
        }
        self.basis[row] = col;
    }

    fn extract(&self, nvars: usize) -> Vec<f64> {
        let rhs = self.rhs_col();
        let mut x = vec![0.0; nvars];
        for (r, &b) in self.basis.iter().enumerate() {
            if b < nvars {
                x[b] = self.rows[r][rhs];
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(
        objective: &[f64],
        eq: &[(&[f64], f64)],
        le: &[(&[f64], f64)],
    ) -> LinearProgram {
        LinearProgram {
            objective: objective.to_vec(),
            eq: eq.iter().map(|(r, b)| (r.to_vec(), *b)).collect(),
            le: le.iter().map(|(r, b)| (r.to_vec(), *b)).collect(),
        }
    }

    #[test]
    fn one_variable_minimum() {
        // minimize x s.t. x >= 3 (as -x <= -3), x >= 0
        let p = lp(&[1.0], &[], &[(&[-1.0], -3.0)]);
        let out = solve_lp(&p).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.objective_value - 3.0).abs() < 1e-9);
        assert!((out.solution.unwrap()[0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn feasibility_mode() {
        let p = lp(&[0.0, 0.0], &[(&[1.0, 1.0], 1.0)], &[]);
        let out = solve_lp(&p).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!(out.objective_value.abs() < 1e-9);
        let x = out.solution.unwrap();
        assert!((x[0] + x[1] - 1.0).abs() < 1e-9);
        assert!(check_feasible(&p).unwrap());
    }

    #[test]
    fn infeasible_program() {
        let p = lp(&[0.0], &[(&[1.0], -1.0)], &[]);
        let out = solve_lp(&p).unwrap();
        assert_eq!(out.status, LpStatus::Infeasible);
        assert!(!check_feasible(&p).unwrap());
    }

    #[test]
    fn unbounded_program() {
        // minimize -x with no upper bound
        let p = lp(&[-1.0], &[], &[]);
        let out = solve_lp(&p).unwrap();
        assert_eq!(out.status, LpStatus::Unbounded);
        let p = lp(&[-1.0, 0.0], &[], &[(&[0.0, 1.0], 5.0)]);
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn non_finite_rejected() {
        let p = lp(&[f64::NAN], &[], &[]);
        assert!(matches!(solve_lp(&p), Err(LpError::NonFinite)));
        let p = lp(&[1.0], &[(&[1.0], f64::INFINITY)], &[]);
        assert!(matches!(solve_lp(&p), Err(LpError::NonFinite)));
    }

    #[test]
    fn row_shape_rejected() {
        let p = lp(&[1.0, 1.0], &[(&[1.0], 1.0)], &[]);
        assert!(matches!(solve_lp(&p), Err(LpError::RowShape { .. })));
    }

    #[test]
    fn zero_rows_dropped() {
        let p = lp(&[1.0], &[(&[0.0], 0.0)], &[(&[0.0], 2.0), (&[-1.0], -1.0)]);
        let out = solve_lp(&p).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.objective_value - 1.0).abs() < 1e-9);
        let p = lp(&[1.0], &[(&[0.0], 1.0)], &[]);
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn degenerate_two_dim() {
        // classic degenerate corner: several constraints meet at the optimum
        let p = lp(
            &[-1.0, -1.0],
            &[],
            &[
                (&[1.0, 0.0], 1.0),
                (&[0.0, 1.0], 1.0),
                (&[1.0, 1.0], 2.0),
                (&[1.0, -1.0], 0.0),
            ],
        );
        let out = solve_lp(&p).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.objective_value + 2.0).abs() < 1e-9);
    }

    #[test]
    fn objective_scaling() {
        let base = lp(
            &[2.0, 3.0],
            &[(&[1.0, 1.0], 1.0)],
            &[(&[1.0, -1.0], 0.3)],
        );
        let out1 = solve_lp(&base).unwrap();
        let mut scaled = base.clone();
        for c in &mut scaled.objective {
            *c *= 7.5;
        }
        let out2 = solve_lp(&scaled).unwrap();
        assert_eq!(out1.status, LpStatus::Optimal);
        assert_eq!(out2.status, LpStatus::Optimal);
        assert!((out2.objective_value - 7.5 * out1.objective_value).abs() < 1e-7);
        assert!(feasibility_residual(&base, &out2.solution.unwrap()) < 1e-7);
    }

    #[test]
    fn deterministic() {
        let p = lp(
            &[1.0, -2.0, 0.5],
            &[(&[1.0, 1.0, 1.0], 1.0)],
            &[(&[0.3, -0.7, 0.1], 0.2)],
        );
        let a = solve_lp(&p).unwrap();
        let b = solve_lp(&p).unwrap();
        assert_eq!(a, b);
    }
}
