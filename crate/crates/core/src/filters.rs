//! Gradient aggregation rules.
//!
//! All three filters take `(agent id, vector)` entries and sum the surviving
//! vectors in ascending agent-id order, so output bits do not depend on the
//! order messages arrived in. With `f = 0` every filter degenerates to the
//! plain sum, bit for bit.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("no inputs to aggregate")]
    Empty,
    #[error("input dimensions disagree: entry {index} has {got}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("duplicate agent id {0} in filter input")]
    DuplicateAgent(usize),
    #[error("fault budget f = {f} requires {required} < m = {m}")]
    BudgetTooLarge {
        f: usize,
        m: usize,
        required: &'static str,
    },
}

/// Which aggregation rule the server applies, with the fault budget used by
/// the trimming rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum FilterKind {
    Sum,
    Cge { f: usize },
    Cwtm { f: usize },
}

impl FilterKind {
    pub fn apply(&self, entries: &[(usize, DVector<f64>)]) -> Result<DVector<f64>, FilterError> {
        match *self {
            FilterKind::Sum => aggregate_sum(entries),
            FilterKind::Cge { f } => aggregate_cge(entries, f),
            FilterKind::Cwtm { f } => aggregate_cwtm(entries, f),
        }
    }

    /// Config-string form: `"sum" | "cge" | "cwtm"` (budget supplied by the
    /// run configuration).
    pub fn from_name(name: &str, f: usize) -> Option<Self> {
        match name {
            "sum" => Some(FilterKind::Sum),
            "cge" => Some(FilterKind::Cge { f }),
            "cwtm" => Some(FilterKind::Cwtm { f }),
            _ => None,
        }
    }
}

fn validate(entries: &[(usize, DVector<f64>)]) -> Result<usize, FilterError> {
    let (_, first) = entries.first().ok_or(FilterError::Empty)?;
    let d = first.len();
    for (index, (_, v)) in entries.iter().enumerate() {
        if v.len() != d {
            return Err(FilterError::DimensionMismatch {
                index,
                got: v.len(),
                expected: d,
            });
        }
    }
    let mut ids: Vec<usize> = entries.iter().map(|(id, _)| *id).collect();
    ids.sort_unstable();
    for w in ids.windows(2) {
        if w[0] == w[1] {
            return Err(FilterError::DuplicateAgent(w[0]));
        }
    }
    Ok(d)
}

/// Indices of `entries` in ascending agent-id order.
fn id_order(entries: &[(usize, DVector<f64>)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by_key(|&i| entries[i].0);
    order
}

/// Sums the selected entries in ascending agent-id order.
fn sum_in_id_order(
    entries: &[(usize, DVector<f64>)],
    selected: impl Iterator<Item = usize>,
    d: usize,
) -> DVector<f64> {
    let mut picked: Vec<usize> = selected.collect();
    picked.sort_by_key(|&i| entries[i].0);
    let mut acc = DVector::zeros(d);
    for i in picked {
        acc += &entries[i].1;
    }
    acc
}

/// Plain vector sum over all entries.
pub fn aggregate_sum(entries: &[(usize, DVector<f64>)]) -> Result<DVector<f64>, FilterError> {
    let d = validate(entries)?;
    Ok(sum_in_id_order(entries, 0..entries.len(), d))
}

/// Comparative gradient elimination: sorts by Euclidean norm (ties broken
/// by agent id ascending) and sums the `m - f` smallest-norm vectors.
pub fn aggregate_cge(
    entries: &[(usize, DVector<f64>)],
    f: usize,
) -> Result<DVector<f64>, FilterError> {
    let d = validate(entries)?;
    let m = entries.len();
    if f >= m {
        return Err(FilterError::BudgetTooLarge {
            f,
            m,
            required: "f",
        });
    }
    let mut by_norm: Vec<usize> = (0..m).collect();
    by_norm.sort_by(|&i, &j| {
        let (ni, nj) = (entries[i].1.norm(), entries[j].1.norm());
        ni.partial_cmp(&nj)
            .expect("gradient norms are not NaN")
            .then_with(|| entries[i].0.cmp(&entries[j].0))
    });
    Ok(sum_in_id_order(
        entries,
        by_norm[..m - f].iter().copied(),
        d,
    ))
}

/// Coordinate-wise trimmed mean, rescaled by `m - f`.
///
/// Per coordinate, the `f` largest and `f` smallest values are dropped and
/// the remaining `m - 2f` averaged; the result is scaled by `m - f` so the
/// output magnitude matches the sum-of-`(m - f)` contract of the other
/// filters.
pub fn aggregate_cwtm(
    entries: &[(usize, DVector<f64>)],
    f: usize,
) -> Result<DVector<f64>, FilterError> {
    let d = validate(entries)?;
    let m = entries.len();
    if 2 * f >= m {
        return Err(FilterError::BudgetTooLarge {
            f,
            m,
            required: "2f",
        });
    }
    let order = id_order(entries);
    let scale = (m - f) as f64 / (m - 2 * f) as f64;
    let mut out = DVector::zeros(d);
    let mut ranked: Vec<usize> = Vec::with_capacity(m);
    for j in 0..d {
        ranked.clear();
        ranked.extend(0..m);
        ranked.sort_by(|&i, &k| {
            entries[i].1[j]
                .partial_cmp(&entries[k].1[j])
                .expect("gradient coordinates are not NaN")
                .then_with(|| entries[i].0.cmp(&entries[k].0))
        });
        let survivors = &ranked[f..m - f];
        // Sum surviving values in agent-id order so f = 0 reproduces the
        // plain sum bitwise.
        let mut acc = 0.0;
        for &i in &order {
            if survivors.contains(&i) {
                acc += entries[i].1[j];
            }
        }
        out[j] = acc * scale;
    }
    Ok(out)
}
