//! Cross-module checks: solver outputs compared against the independent
//! oracles on seeded random instances.

use vecpack::core::{dimension_lower_bound, validate_packing, Instance};
use vecpack::exact::{enumerate_opt, solve_exact, DEFAULT_NODE_BUDGET};
use vecpack::harness::{generate_instance, trial_seed, Distribution, GenConfig};
use vecpack::heuristics::{first_fit, first_fit_decreasing};
use vecpack::lp::{check_feasible, solve_lp, LpStatus};
use vecpack::qp::{extract_packing, solve_nlp_prime, quadratic_objective};
use vecpack::relaxation::{build_relaxed_model, solve_relaxation};
use vecpack::rounding::packing_vectors;

fn uniform(n: usize, d: usize, seed: u64) -> Instance {
    generate_instance(&GenConfig::new(n, d, Distribution::Uniform01, seed).unwrap())
}

#[test]
fn seed_42_lower_bound_below_opt() {
    let inst = uniform(10, 3, 42);
    let opt = enumerate_opt(&inst).unwrap();
    assert!(dimension_lower_bound(&inst) <= opt);
}

#[test]
fn seed_42_model_feasible_at_n_bins() {
    let inst = uniform(10, 3, 42);
    let model = build_relaxed_model(&inst, 10).unwrap();
    let out = solve_lp(model.lp()).unwrap();
    assert_eq!(out.status, LpStatus::Optimal);
    assert!(out.objective_value <= 10.0 + 1e-6);
}

#[test]
fn check_feasible_agrees_with_solve_lp() {
    for seed in 0..10u64 {
        let inst = uniform(8, 2, trial_seed(42, 2, seed as usize));
        let floor = dimension_lower_bound(&inst).max(1);
        let model = build_relaxed_model(&inst, floor).unwrap();
        let feasible = check_feasible(model.lp()).unwrap();
        let status = solve_lp(model.lp()).unwrap().status;
        assert_eq!(feasible, status == LpStatus::Optimal, "seed {seed}");
    }
}

#[test]
fn m_prime_sandwiched_by_opt() {
    // m' <= OPT on proven instances, and never below the volume bound
    for seed in 0..25u64 {
        let inst = uniform(7, 3, trial_seed(7, 3, seed as usize));
        let relax = solve_relaxation(&inst).unwrap();
        let opt = enumerate_opt(&inst).unwrap();
        assert!(relax.m_prime <= opt, "seed {seed}: m'={} opt={opt}", relax.m_prime);
        assert!(relax.m_prime >= dimension_lower_bound(&inst));
    }
}

#[test]
fn heuristics_dominated_by_opt() {
    let mut ffd_not_worse = 0usize;
    let total = 60usize;
    for seed in 0..total as u64 {
        let d = 2 + (seed % 3) as usize;
        let inst = uniform(7, d, trial_seed(100, d, seed as usize));
        let opt = enumerate_opt(&inst).unwrap();
        let ff = first_fit(&inst);
        let ffd = first_fit_decreasing(&inst);
        assert!(validate_packing(&inst, &ff).unwrap().is_empty());
        assert!(validate_packing(&inst, &ffd).unwrap().is_empty());
        assert!(ff.bin_count >= opt);
        assert!(ffd.bin_count >= opt);
        if ffd.bin_count <= ff.bin_count {
            ffd_not_worse += 1;
        }
    }
    // FFD should beat or match FF in the vast majority of trials
    assert!(
        ffd_not_worse * 10 >= total * 9,
        "FFD no worse than FF in only {ffd_not_worse}/{total} trials"
    );
}

#[test]
fn packing_vectors_tracks_opt_on_small_instances() {
    for seed in 0..30u64 {
        let d = 2 + (seed % 4) as usize;
        let inst = uniform(6, d, trial_seed(500, d, seed as usize));
        let (pk, trace) = packing_vectors(&inst);
        assert!(validate_packing(&inst, &pk).unwrap().is_empty());
        assert_eq!(trace.total_items_packed(), 6);
        let opt = enumerate_opt(&inst).unwrap();
        assert!(pk.bin_count >= opt);
    }
}

#[test]
fn greedy_round_progress_on_relaxed_solution() {
    // tiny items force the GreedyLP branch; each level must commit something
    let rows: Vec<Vec<f64>> = (0..16)
        .map(|i| vec![0.02 + 0.01 * (i % 4) as f64, 0.03 + 0.005 * (i % 3) as f64])
        .collect();
    let inst = Instance::from_rows(2, &rows).unwrap();
    let (pk, trace) = packing_vectors(&inst);
    assert!(validate_packing(&inst, &pk).unwrap().is_empty());
    assert!(trace.levels.iter().all(|l| l.items_packed > 0));
}

#[test]
fn qp_objective_bounded_by_assignment_enumeration() {
    // at m = OPT the best integral assignment packs everything: max sum of
    // squares over feasible integral assignments is n
    for seed in 0..10u64 {
        let n = 5;
        let inst = uniform(n, 2, trial_seed(900, 2, seed as usize));
        let opt = enumerate_opt(&inst).unwrap();
        let best = enumerate_assignment_objective(&inst, opt);
        assert!((best - n as f64).abs() < 1e-12, "seed {seed}");
        let q = solve_nlp_prime(&inst, opt, 8, seed).unwrap();
        assert!(q.objective <= best + 1e-9, "seed {seed}");
        assert!(q.objective >= n as f64 / opt as f64 - 1e-9);
        let pk = extract_packing(&q, &inst);
        assert!(validate_packing(&inst, &pk).unwrap().is_empty());
    }
}

/// Max of `sum x^2` over all capacity-feasible integral assignments of a
/// subset of items into `m` bins (unassigned rows contribute 0). Exhaustive
/// over `(m+1)^n` choices.
fn enumerate_assignment_objective(inst: &Instance, m: usize) -> f64 {
    let d = inst.dimension();
    fn recurse(
        inst: &Instance,
        item: usize,
        loads: &mut Vec<Vec<f64>>,
        packed: usize,
        best: &mut usize,
    ) {
        if item == inst.len() {
            *best = (*best).max(packed);
            return;
        }
        // leave the item unassigned
        recurse(inst, item + 1, loads, packed, best);
        let coords = inst.items()[item].coords().to_vec();
        for b in 0..loads.len() {
            if vecpack::core::fits(&loads[b], &coords, 1e-9) {
                for (k, &c) in coords.iter().enumerate() {
                    loads[b][k] += c;
                }
                recurse(inst, item + 1, loads, packed + 1, best);
                for (k, &c) in coords.iter().enumerate() {
                    loads[b][k] -= c;
                }
            }
        }
    }
    let mut loads = vec![vec![0.0; d]; m];
    let mut best = 0usize;
    recurse(inst, 0, &mut loads, 0, &mut best);
    // each packed row contributes exactly 1 to the sum of squares
    best as f64
}

#[test]
fn exact_dominates_every_heuristic() {
    for seed in 0..15u64 {
        let inst = uniform(12, 4, trial_seed(1234, 4, seed as usize));
        let exact = solve_exact(&inst, DEFAULT_NODE_BUDGET);
        assert!(exact.proven, "seed {seed}");
        assert!(validate_packing(&inst, &exact.packing).unwrap().is_empty());
        assert!(exact.opt <= first_fit(&inst).bin_count);
        assert!(exact.opt <= first_fit_decreasing(&inst).bin_count);
        assert!(exact.opt >= dimension_lower_bound(&inst));
        let relax = solve_relaxation(&inst).unwrap();
        assert!(relax.m_prime <= exact.opt);
    }
}

#[test]
fn quadratic_objective_of_relaxation_solution_bounded() {
    let inst = uniform(10, 3, 42);
    let relax = solve_relaxation(&inst).unwrap();
    let q = quadratic_objective(relax.x.raw());
    let n = inst.len() as f64;
    let m = relax.m_prime as f64;
    assert!(q >= n / m - 1e-6);
    assert!(q <= n + 1e-6);
}
