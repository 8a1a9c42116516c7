//! LP-relaxation rounding: the recursive `packing_vectors` driver with its
//! three-way branch, the greedy entry-by-entry rounding pass, the
//! utility-factor bin commit pass, and the dual multiplier computation
//! `z_ij = x_ij / sum_i x_ij`.
//!
//! Each recursion level solves the relaxation on the still-unpacked items,
//! commits a subset into fresh bins, and recurses on the remainder. A level
//! that commits nothing falls back to First Fit so termination is
//! unconditional; every fit is re-checked at commit time because fractional
//! capacity feasibility does not imply integral feasibility of the
//! survivors.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::core::{
    canonicalize, fits, DualMultipliers, FractionalAssignment, Instance, Packing, EPS_CAP,
    EPS_NUM,
};
use crate::heuristics::first_fit;
use crate::relaxation::solve_relaxation;

/// Which pass handled one recursion level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    FirstFit,
    GreedyLp,
    IterativePack,
    /// A level committed nothing (or the LP failed); the remainder was
    /// first-fit and the recursion stopped.
    Fallback,
}

/// One recursion level of [`packing_vectors`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceLevel {
    pub branch: Branch,
    pub m_prime: usize,
    pub items_packed: usize,
    /// `sum_ij x_ij z_ij` at this level's `X`, with `Z` per the dual
    /// substitution. Absent on fallback levels without an LP solution.
    pub dual_objective: Option<f64>,
    /// `sum_ij x_ij^2` at this level's `X`.
    pub quadratic_objective: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RoundingTrace {
    pub levels: Vec<TraceLevel>,
}

impl RoundingTrace {
    pub fn total_items_packed(&self) -> usize {
        self.levels.iter().map(|l| l.items_packed).sum()
    }
}

/// Packing state threaded through the recursion: committed items with their
/// bin loads, plus the set still to pack.
#[derive(Debug, Clone)]
pub struct PartialPacking {
    committed: BTreeMap<usize, usize>,
    bin_loads: Vec<Vec<f64>>,
    remaining: BTreeSet<usize>,
}

impl PartialPacking {
    pub fn new(inst: &Instance) -> Self {
        Self {
            committed: BTreeMap::new(),
            bin_loads: Vec::new(),
            remaining: (0..inst.len()).collect(),
        }
    }

    pub fn committed(&self) -> &BTreeMap<usize, usize> {
        &self.committed
    }

    pub fn remaining(&self) -> &BTreeSet<usize> {
        &self.remaining
    }

    pub fn bin_loads(&self) -> &[Vec<f64>] {
        &self.bin_loads
    }

    /// Remaining items in ascending index order; row `r` of a level's `X`
    /// refers to `remaining_items()[r]`.
    pub fn remaining_items(&self) -> Vec<usize> {
        self.remaining.iter().copied().collect()
    }

    fn open_fresh_bins(&mut self, d: usize, count: usize) -> usize {
        let base = self.bin_loads.len();
        self.bin_loads.extend((0..count).map(|_| vec![0.0; d]));
        base
    }

    fn commit(&mut self, inst: &Instance, item: usize, bin: usize) {
        debug_assert!(self.remaining.contains(&item));
        for (k, &c) in inst.items()[item].coords().iter().enumerate() {
            self.bin_loads[bin][k] += c;
        }
        self.remaining.remove(&item);
        self.committed.insert(item, bin);
    }

    /// Final packing once nothing remains. Empty bins are dropped by
    /// canonicalization.
    pub fn into_packing(self, inst: &Instance) -> Packing {
        debug_assert!(self.remaining.is_empty());
        let assignment: Vec<usize> = (0..inst.len()).map(|i| self.committed[&i]).collect();
        canonicalize(&Packing::new(self.bin_loads.len(), assignment))
    }
}

/// Dual multipliers `z_ij = x_ij / sum_i x_ij`, with all-zero columns
/// mapped to all-zero `z` columns.
pub fn find_dual_obj(x: &FractionalAssignment) -> DualMultipliers {
    let (n, m) = (x.n(), x.m());
    let mut z = vec![0.0; n * m];
    for j in 0..m {
        let col_sum = x.column_sum(j);
        if col_sum > EPS_NUM {
            for i in 0..n {
                z[i * m + j] = (x.value(i, j) / col_sum).max(0.0);
            }
        }
    }
    DualMultipliers::new(n, m, z).expect("normalized columns satisfy the multiplier invariants")
}

/// `sum_i x_ij z_ij` for bin `j`.
pub fn utility_factor(x: &FractionalAssignment, z: &DualMultipliers, j: usize) -> f64 {
    (0..x.n()).map(|i| x.value(i, j) * z.value(i, j)).sum()
}

/// `sum_ij x_ij z_ij`, the dual objective at `X` under the substitution.
pub fn dual_objective(x: &FractionalAssignment, z: &DualMultipliers) -> f64 {
    (0..x.m()).map(|j| utility_factor(x, z, j)).sum()
}

/// Entries of `X` in scan order: value descending, then item ascending,
/// then bin ascending. Makes every run bit-reproducible.
fn sorted_entries(x: &FractionalAssignment) -> Vec<(usize, usize)> {
    let mut entries: Vec<(usize, usize)> = (0..x.n())
        .flat_map(|i| (0..x.m()).map(move |j| (i, j)))
        .collect();
    entries.sort_by(|&(ia, ja), &(ib, jb)| {
        x.value(ib, jb)
            .partial_cmp(&x.value(ia, ja))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(ia.cmp(&ib))
            .then(ja.cmp(&jb))
    });
    entries
}

/// One greedy rounding pass: scan all `x_ij` in descending order and commit
/// each still-unpacked item to the first bin it fits.
///
/// Rows of `x` index `state.remaining_items()`; columns index the `x.m()`
/// fresh bins this pass opens.
pub fn greedy_lp(
    inst: &Instance,
    state: &PartialPacking,
    x: &FractionalAssignment,
) -> PartialPacking {
    let items = state.remaining_items();
    debug_assert_eq!(items.len(), x.n());
    let mut next = state.clone();
    let base = next.open_fresh_bins(inst.dimension(), x.m());
    let mut packed = vec![false; x.n()];
    for (i, j) in sorted_entries(x) {
        if packed[i] {
            continue;
        }
        let item = items[i];
        let coords = inst.items()[item].coords();
        if fits(&next.bin_loads[base + j], coords, EPS_CAP) {
            next.commit(inst, item, base + j);
            packed[i] = true;
        }
    }
    next
}

// Entries exactly at one half survive the threshold; shave EPS_NUM so LP
// noise cannot flip them.
const HALF: f64 = 0.5 - EPS_NUM;

/// One utility-factor pass: for each bin whose utility `sum_i x_ij z_ij`
/// reaches one half, keep the column entries of at least one half and commit
/// the surviving items in descending order, capacity permitting.
pub fn iterative_pack(
    inst: &Instance,
    state: &PartialPacking,
    x: &FractionalAssignment,
) -> PartialPacking {
    let items = state.remaining_items();
    debug_assert_eq!(items.len(), x.n());
    let z = find_dual_obj(x);
    let mut next = state.clone();
    let base = next.open_fresh_bins(inst.dimension(), x.m());
    let mut packed = vec![false; x.n()];
    for j in 0..x.m() {
        if utility_factor(x, &z, j) < HALF {
            continue;
        }
        let mut column: Vec<usize> = (0..x.n()).filter(|&i| x.value(i, j) >= HALF).collect();
        column.sort_by(|&a, &b| {
            x.value(b, j)
                .partial_cmp(&x.value(a, j))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        for i in column {
            if packed[i] {
                continue;
            }
            let item = items[i];
            let coords = inst.items()[item].coords();
            if fits(&next.bin_loads[base + j], coords, EPS_CAP) {
                next.commit(inst, item, base + j);
                packed[i] = true;
            }
        }
    }
    next
}

fn first_fit_remainder(inst: &Instance, state: &mut PartialPacking) {
    let items = state.remaining_items();
    let sub = inst.subset(&items);
    let pk = first_fit(&sub);
    let base = state.open_fresh_bins(inst.dimension(), pk.bin_count);
    for (local, &bin) in pk.assignment.iter().enumerate() {
        state.commit(inst, items[local], base + bin);
    }
}

/// The full rounding pipeline. Recursively relaxes the unpacked items,
/// branches on `m'` against `n/2` and `sqrt(n/d)` (both computed from the
/// remaining count), and commits subsets until the input is exhausted.
pub fn packing_vectors(inst: &Instance) -> (Packing, RoundingTrace) {
    let mut state = PartialPacking::new(inst);
    let mut trace = RoundingTrace::default();
    let d = inst.dimension();
    while !state.remaining.is_empty() {
        let items = state.remaining_items();
        let n_rem = items.len();
        let sub = inst.subset(&items);
        let relax = match solve_relaxation(&sub) {
            Ok(r) => r,
            Err(_) => {
                first_fit_remainder(inst, &mut state);
                trace.levels.push(TraceLevel {
                    branch: Branch::Fallback,
                    m_prime: 0,
                    items_packed: n_rem,
                    dual_objective: None,
                    quadratic_objective: None,
                });
                break;
            }
        };
        let m_prime = relax.m_prime;
        let x = &relax.x;
        let z = find_dual_obj(x);
        let dual_obj = Some(dual_objective(x, &z));
        let quad_obj = Some(x.raw().iter().map(|v| v * v).sum());
        if 2 * m_prime >= n_rem {
            first_fit_remainder(inst, &mut state);
            trace.levels.push(TraceLevel {
                branch: Branch::FirstFit,
                m_prime,
                items_packed: n_rem,
                dual_objective: dual_obj,
                quadratic_objective: quad_obj,
            });
            break;
        }
        let (branch, next) = if (m_prime as f64) <= (n_rem as f64 / d as f64).sqrt() + 1e-12 {
            (Branch::GreedyLp, greedy_lp(inst, &state, x))
        } else {
            (Branch::IterativePack, iterative_pack(inst, &state, x))
        };
        let committed = state.remaining.len() - next.remaining.len();
        if committed == 0 {
            // recursing on the same X would loop forever
            first_fit_remainder(inst, &mut state);
            trace.levels.push(TraceLevel {
                branch: Branch::Fallback,
                m_prime,
                items_packed: n_rem,
                dual_objective: dual_obj,
                quadratic_objective: quad_obj,
            });
            break;
        }
        state = next;
        trace.levels.push(TraceLevel {
            branch,
            m_prime,
            items_packed: committed,
            dual_objective: dual_obj,
            quadratic_objective: quad_obj,
        });
    }
    (state.into_packing(inst), trace)
}

/// Optional post-pass: greedily merge whole bins that fit together,
/// scanning bins in index order. Off by default in the CLI.
pub fn merge_bins(inst: &Instance, pk: &Packing) -> Packing {
    let mut loads = pk
        .bin_loads(inst)
        .expect("packing matches the instance it was built from");
    let mut target: Vec<usize> = (0..loads.len()).collect();
    for j in 1..loads.len() {
        for i in 0..j {
            if target[i] != i || target[j] != j {
                continue;
            }
            let combined: Vec<f64> = loads[i].iter().zip(&loads[j]).map(|(a, b)| a + b).collect();
            if combined.iter().all(|&l| l <= 1.0 + EPS_CAP) {
                loads[i] = combined;
                target[j] = i;
                break;
            }
        }
    }
    let assignment = pk.assignment.iter().map(|&b| target[b]).collect();
    canonicalize(&Packing::new(pk.bin_count, assignment))
}
