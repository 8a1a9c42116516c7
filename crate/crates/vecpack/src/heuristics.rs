//! First Fit and First Fit Decreasing baselines.
//!
//! FFD also supplies the initial upper bound on the bin count for the
//! relaxation's binary search.

use std::cmp::Ordering;

use crate::core::{canonicalize, fits, Instance, Packing, EPS_CAP};

/// Places items in input order, each into the lowest-indexed bin with room
/// in every dimension, opening a new bin only when none fits.
pub fn first_fit(inst: &Instance) -> Packing {
    first_fit_order(inst, &(0..inst.len()).collect::<Vec<_>>())
}

/// First Fit over items sorted by decreasing coordinate sum (ties:
/// decreasing max coordinate, then original index). The returned packing is
/// indexed by original item position.
pub fn first_fit_decreasing(inst: &Instance) -> Packing {
    first_fit_order(inst, &decreasing_order(inst))
}

/// Item indices sorted by the FFD key.
pub(crate) fn decreasing_order(inst: &Instance) -> Vec<usize> {
    let mut order: Vec<usize> = (0..inst.len()).collect();
    order.sort_by(|&a, &b| {
        let ia = &inst.items()[a];
        let ib = &inst.items()[b];
        ib.coord_sum()
            .partial_cmp(&ia.coord_sum())
            .unwrap_or(Ordering::Equal)
            .then(
                ib.max_coord()
                    .partial_cmp(&ia.max_coord())
                    .unwrap_or(Ordering::Equal),
            )
            .then(a.cmp(&b))
    });
    order
}

fn first_fit_order(inst: &Instance, order: &[usize]) -> Packing {
    let d = inst.dimension();
    let mut loads: Vec<Vec<f64>> = Vec::new();
    let mut assignment = vec![0usize; inst.len()];
    for &i in order {
        let coords = inst.items()[i].coords();
        let bin = loads
            .iter()
            .position(|load| fits(load, coords, EPS_CAP))
            .unwrap_or_else(|| {
                loads.push(vec![0.0; d]);
                loads.len() - 1
            });
        for (k, &c) in coords.iter().enumerate() {
            loads[bin][k] += c;
        }
        assignment[i] = bin;
    }
    canonicalize(&Packing::new(loads.len(), assignment))
}
