//! Solvers for the d-dimensional vector bin packing problem (VM-to-PM
//! placement): an LP-relaxation rounding pipeline, a quadratic
//! reformulation solved by projected gradient ascent, First Fit / First Fit
//! Decreasing baselines, an exact branch-and-bound oracle, and a benchmark
//! harness comparing all of them against the exact optimum.

pub mod core;
pub mod exact;
pub mod harness;
pub mod heuristics;
pub mod lp;
pub mod qp;
pub mod relaxation;
pub mod rounding;

pub use crate::core::{
    validate_packing, DualMultipliers, FractionalAssignment, Instance, ItemVector, Packing,
    EPS_CAP, EPS_NUM,
};
