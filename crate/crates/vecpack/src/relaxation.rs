//! Relaxed bin packing program for a fixed bin count `m`, and the binary
//! search for the least feasible `m'`.
//!
//! The model minimizes `sum_j y_j` subject to assignment rows
//! `sum_j x_ij = 1`, capacity rows `sum_i p_i^k x_ij <= 1`, coupling rows
//! `x_ij - y_j <= 0`, `y_j <= 1`, and nonnegativity. `m'` is a lower bound
//! on the optimal bin count; the `X` returned at `m'` feeds the rounding
//! pipeline.

use thiserror::Error;

use crate::core::{dimension_lower_bound, FractionalAssignment, Instance};
use crate::heuristics::first_fit_decreasing;
use crate::lp::{check_feasible, solve_lp, LinearProgram, LpError, LpStatus};

#[derive(Debug, Error)]
pub enum RelaxError {
    #[error("bin count must be positive")]
    InvalidBinCount,
    #[error("LP solver failed at m = {m}")]
    Lp {
        m: usize,
        #[source]
        source: LpError,
    },
    #[error("relaxation infeasible at m = {m} inside a window proven feasible above")]
    Monotonicity { m: usize },
    #[error("malformed fractional solution at m = {m}: {message}")]
    Solution { m: usize, message: String },
}

/// The relaxed program for a fixed `m`, with its variable layout.
///
/// Columns `0..n*m` are `x_ij` at `i*m + j`; columns `n*m..n*m+m` are `y_j`.
#[derive(Debug, Clone)]
pub struct RelaxedModel {
    n: usize,
    m: usize,
    lp: LinearProgram,
}

impl RelaxedModel {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn x_col(&self, i: usize, j: usize) -> usize {
        i * self.m + j
    }

    pub fn y_col(&self, j: usize) -> usize {
        self.n * self.m + j
    }

    pub fn lp(&self) -> &LinearProgram {
        &self.lp
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationResult {
    /// Least bin count at which the relaxation is feasible.
    pub m_prime: usize,
    /// Optimal `x` part at `m = m_prime` (minimal `sum y` objective).
    pub x: FractionalAssignment,
    /// `sum_j y_j` at the optimum.
    pub lp_objective: f64,
}

pub fn build_relaxed_model(inst: &Instance, m: usize) -> Result<RelaxedModel, RelaxError> {
    if m == 0 {
        return Err(RelaxError::InvalidBinCount);
    }
    let n = inst.len();
    let d = inst.dimension();
    let nvars = n * m + m;
    let mut objective = vec![0.0; nvars];
    for j in 0..m {
        objective[n * m + j] = 1.0;
    }
    let mut eq = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = vec![0.0; nvars];
        for j in 0..m {
            row[i * m + j] = 1.0;
        }
        eq.push((row, 1.0));
    }
    let mut le = Vec::with_capacity(m * d + n * m + m);
    for j in 0..m {
        for k in 0..d {
            let mut row = vec![0.0; nvars];
            for i in 0..n {
                row[i * m + j] = inst.items()[i].coords()[k];
            }
            le.push((row, 1.0));
        }
    }
    for i in 0..n {
        for j in 0..m {
            let mut row = vec![0.0; nvars];
            row[i * m + j] = 1.0;
            row[n * m + j] = -1.0;
            le.push((row, 0.0));
        }
    }
    for j in 0..m {
        let mut row = vec![0.0; nvars];
        row[n * m + j] = 1.0;
        le.push((row, 1.0));
    }
    Ok(RelaxedModel {
        n,
        m,
        lp: LinearProgram { objective, eq, le },
    })
}

/// Binary-searches the least feasible `m'` in `[dimension_lower_bound, FFD]`
/// and solves the full objective there.
pub fn solve_relaxation(inst: &Instance) -> Result<RelaxationResult, RelaxError> {
    if inst.is_empty() {
        return Ok(RelaxationResult {
            m_prime: 0,
            x: FractionalAssignment::empty(),
            lp_objective: 0.0,
        });
    }
    let mut lo = dimension_lower_bound(inst).max(1);
    let mut hi = first_fit_decreasing(inst).bin_count;
    debug_assert!(lo <= hi, "volume bound exceeds the FFD bin count");
    // FFD supplies an integral witness at hi, so hi is always feasible;
    // feasibility is monotone in m, which the final solve re-checks.
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        let model = build_relaxed_model(inst, mid)?;
        let feasible =
            check_feasible(model.lp()).map_err(|source| RelaxError::Lp { m: mid, source })?;
        if feasible {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let m_prime = lo;
    let model = build_relaxed_model(inst, m_prime)?;
    let out = solve_lp(model.lp()).map_err(|source| RelaxError::Lp {
        m: m_prime,
        source,
    })?;
    match out.status {
        LpStatus::Optimal => {}
        // a feasible (or witness-backed) m turning infeasible breaks the
        // monotonicity the search relies on
        _ => return Err(RelaxError::Monotonicity { m: m_prime }),
    }
    let solution = out.solution.expect("optimal outcome carries a solution");
    let n = inst.len();
    let mut x = Vec::with_capacity(n * m_prime);
    for i in 0..n {
        for j in 0..m_prime {
            x.push(solution[model.x_col(i, j)].max(0.0));
        }
    }
    let x = FractionalAssignment::new(n, m_prime, x).map_err(|e| RelaxError::Solution {
        m: m_prime,
        message: e.to_string(),
    })?;
    Ok(RelaxationResult {
        m_prime,
        x,
        lp_objective: out.objective_value,
    })
}
