//! Subset minimizers and the exact `(f, r; epsilon)`-redundancy parameter.
//!
//! For a subset `S` of agents the aggregate minimizer is the solution of
//! `(sum_{i in S} A_i) x = sum_{i in S} b_i`. Under the strong-convexity
//! regime every aggregate in play is positive definite, so minimizers are
//! unique points and the set-distance in the redundancy definition reduces
//! to a point distance; singular aggregates are refused rather than handled
//! set-valued.

use std::collections::HashMap;

use itertools::Itertools;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costs::{min_symmetric_eigenvalue, CostFamily};
use crate::engine::FeasibleBox;

/// Gradient norm accepted at a computed minimizer.
const MINIMIZER_RESIDUAL_TOL: f64 = 1e-9;
/// Smallest aggregate eigenvalue treated as positive definite.
const SINGULAR_TOL: f64 = 1e-10;
/// Default cap on minimizer solves in one enumeration.
pub const DEFAULT_PAIR_CAP: u64 = 20_000_000;

#[derive(Debug, Error)]
pub enum RedundancyError {
    #[error("subset is empty")]
    EmptySubset,
    #[error("subset contains agent {agent} outside 0..{n}")]
    UnknownAgent { agent: usize, n: usize },
    #[error("subset {subset:?} has a singular aggregate (lambda_min = {lambda_min:e}); minimizer set is not a point")]
    SingularAggregate { subset: Vec<usize>, lambda_min: f64 },
    #[error("computed minimizer for {subset:?} has gradient norm {residual:e} above tolerance")]
    BadResidual { subset: Vec<usize>, residual: f64 },
    #[error(
        "infeasible parameters: need r < n and f < (n - r) / 2, got n = {n}, f = {f}, r = {r}"
    )]
    InfeasibleParameters { n: usize, f: usize, r: usize },
    #[error("enumeration would solve more than {cap} subset minimizers; raise the cap or shrink the instance")]
    EnumerationCap { cap: u64 },
    #[error("honest-aggregate minimizer {minimizer:?} lies outside the feasible box")]
    MinimizerOutsideBox { minimizer: Vec<f64> },
}

/// The unique minimizer of one subset's aggregate cost.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetMinimizer {
    /// Sorted agent ids.
    pub subset: Vec<usize>,
    pub minimizer: DVector<f64>,
    /// Smallest eigenvalue of the subset's summed `A`; positive here.
    pub aggregate_condition: f64,
}

/// Exact redundancy parameter with the pair achieving it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundancyReport {
    pub f: usize,
    pub r: usize,
    /// `max ||x_S - x_Shat||` over all valid `(S, Shat)` pairs.
    pub epsilon: f64,
    /// Lexicographically smallest maximizing pair; `None` when the pair set
    /// is empty (`f = r = 0`), in which case `epsilon = 0`.
    pub witness_pair: Option<(Vec<usize>, Vec<usize>)>,
    pub pairs_examined: u64,
}

/// Solves the aggregate minimizer of `subset`.
pub fn subset_minimizer(
    family: &CostFamily,
    subset: &[usize],
) -> Result<SubsetMinimizer, RedundancyError> {
    let mut sorted: Vec<usize> = subset.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.is_empty() {
        return Err(RedundancyError::EmptySubset);
    }
    if let Some(&agent) = sorted.iter().find(|&&a| a >= family.len()) {
        return Err(RedundancyError::UnknownAgent {
            agent,
            n: family.len(),
        });
    }

    let d = family.dimension();
    let mut a_sum = nalgebra::DMatrix::zeros(d, d);
    let mut b_sum = DVector::zeros(d);
    for &i in &sorted {
        a_sum += family.cost(i).matrix();
        b_sum += family.cost(i).offset();
    }
    let aggregate_condition = min_symmetric_eigenvalue(&a_sum);
    if aggregate_condition <= SINGULAR_TOL {
        return Err(RedundancyError::SingularAggregate {
            subset: sorted,
            lambda_min: aggregate_condition,
        });
    }
    let minimizer =
        a_sum
            .clone()
            .lu()
            .solve(&b_sum)
            .ok_or_else(|| RedundancyError::SingularAggregate {
                subset: sorted.clone(),
                lambda_min: aggregate_condition,
            })?;
    let residual = (&a_sum * &minimizer - &b_sum).norm();
    if residual > MINIMIZER_RESIDUAL_TOL {
        return Err(RedundancyError::BadResidual {
            subset: sorted,
            residual,
        });
    }
    Ok(SubsetMinimizer {
        subset: sorted,
        minimizer,
        aggregate_condition,
    })
}

/// Exact `(f, r; epsilon)` by exhaustive pair enumeration with memoized
/// minimizers.
pub fn compute_epsilon(
    family: &CostFamily,
    f: usize,
    r: usize,
) -> Result<RedundancyReport, RedundancyError> {
    compute_epsilon_capped(family, f, r, DEFAULT_PAIR_CAP)
}

pub fn compute_epsilon_capped(
    family: &CostFamily,
    f: usize,
    r: usize,
    cap: u64,
) -> Result<RedundancyReport, RedundancyError> {
    let n = family.len();
    // Feasibility per the definition: r < n and f < (n - r) / 2.
    if r >= n || 2 * f >= n - r {
        return Err(RedundancyError::InfeasibleParameters { n, f, r });
    }
    let s_size = n - f;
    let shat_min = n - r - 2 * f; // >= 1 under the precondition

    if solve_count(n, f, r) > cap {
        return Err(RedundancyError::EnumerationCap { cap });
    }

    let mut memo: HashMap<Vec<usize>, DVector<f64>> = HashMap::new();
    let mut solve = |subset: &[usize]| -> Result<DVector<f64>, RedundancyError> {
        if let Some(hit) = memo.get(subset) {
            return Ok(hit.clone());
        }
        let solved = subset_minimizer(family, subset)?;
        memo.insert(solved.subset.clone(), solved.minimizer.clone());
        Ok(solved.minimizer)
    };

    let mut epsilon = 0.0_f64;
    let mut witness: Option<(Vec<usize>, Vec<usize>)> = None;
    let mut pairs_examined = 0u64;

    // S iterates in lexicographic order, and for each S the proper subsets
    // Shat iterate lexicographically within each size, so breaking ties by
    // first encounter yields the lexicographically smallest witness.
    for s in (0..n).combinations(s_size) {
        let x_s = solve(&s)?;
        for shat_size in shat_min..s_size {
            for shat in s.iter().copied().combinations(shat_size) {
                let x_shat = solve(&shat)?;
                let distance = (&x_s - &x_shat).norm();
                pairs_examined += 1;
                debug_assert!(distance.is_finite());
                if distance > epsilon || witness.is_none() {
                    epsilon = epsilon.max(distance);
                    witness = Some((s.clone(), shat));
                }
            }
        }
    }
    if witness.is_none() {
        // f = r = 0: the pair set is empty and epsilon = 0 by convention.
        debug_assert_eq!(pairs_examined, 0);
    }
    Ok(RedundancyReport {
        f,
        r,
        epsilon,
        witness_pair: witness,
        pairs_examined,
    })
}

/// Number of minimizer solves the enumeration needs (pairs plus memoized
/// subsets are both bounded by this).
fn solve_count(n: usize, f: usize, r: usize) -> u64 {
    let s_size = n - f;
    let shat_min = n - r - 2 * f;
    let mut total = binomial(n, s_size);
    for shat_size in shat_min..s_size {
        total =
            total.saturating_add(binomial(n, s_size).saturating_mul(binomial(s_size, shat_size)));
    }
    total
}

fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc = 1u64;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u64) / (i as u64 + 1);
    }
    acc
}

/// The target point `x_H`: unconstrained minimizer of the honest aggregate,
/// required to lie inside the feasible box.
///
/// A minimizer outside the box violates the standing existence assumption,
/// so it is reported as a configuration error instead of being projected.
pub fn target_minimizer(
    family: &CostFamily,
    honest: &[usize],
    boundary: &FeasibleBox,
) -> Result<DVector<f64>, RedundancyError> {
    let solved = subset_minimizer(family, honest)?;
    if !boundary.contains(&solved.minimizer) {
        return Err(RedundancyError::MinimizerOutsideBox {
            minimizer: solved.minimizer.iter().copied().collect(),
        });
    }
    Ok(solved.minimizer)
}
