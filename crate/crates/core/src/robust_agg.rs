//! Coordinate-wise trimmed mean.
//!
//! Ties between equal values are broken by sender id so the set of discarded
//! senders is deterministic. The receiver's own value is never trimmed and
//! always enters the average.

use crate::error::{Error, Result};

/// Magnitude substituted for non-finite incoming values before sorting.
pub const NONFINITE_SENTINEL: f64 = 1e300;

/// Replaces NaN and ±∞ with `±NONFINITE_SENTINEL` (NaN maps to `+`).
pub fn sanitize(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else if v == f64::NEG_INFINITY {
        -NONFINITE_SENTINEL
    } else {
        NONFINITE_SENTINEL
    }
}

fn check_budget(neighbors: usize, budget: usize) -> Result<()> {
    let required = 2 * budget + 1;
    // with budget 0 nothing is trimmed, so an empty neighborhood is fine
    if budget > 0 && neighbors < required {
        return Err(Error::TrimPrecondition {
            neighbors,
            budget,
            required,
        });
    }
    Ok(())
}

/// Sum of the values kept after trimming, without the self value, and the
/// ids of the kept senders in sorted-value order. `scratch` is reused across
/// calls to avoid allocation.
fn trimmed_sum(
    neighbors: impl Iterator<Item = (usize, f64)>,
    budget: usize,
    scratch: &mut Vec<(f64, usize)>,
) -> f64 {
    scratch.clear();
    scratch.extend(neighbors.map(|(id, v)| (sanitize(v), id)));
    scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let len = scratch.len();
    scratch[budget..len - budget].iter().map(|p| p.0).sum()
}

/// Trimmed mean of one coordinate. Returns the value and the kept senders;
/// the receiver itself is reported as `self_id`.
pub fn trim_coordinate(
    self_id: usize,
    self_value: f64,
    neighbors: &[(usize, f64)],
    budget: usize,
) -> Result<(f64, Vec<usize>)> {
    check_budget(neighbors.len(), budget)?;
    let mut sorted: Vec<(f64, usize)> = neighbors.iter().map(|&(id, v)| (sanitize(v), id)).collect();
    sorted.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let kept = &sorted[budget..sorted.len() - budget];
    let denom = (neighbors.len() - 2 * budget + 1) as f64;
    let value = (kept.iter().map(|p| p.0).sum::<f64>() + self_value) / denom;
    let mut ids: Vec<usize> = kept.iter().map(|p| p.1).collect();
    ids.push(self_id);
    ids.sort_unstable();
    Ok((value, ids))
}

/// Applies [`trim_coordinate`] independently to every coordinate.
pub fn trim_vector(
    self_id: usize,
    self_vec: &[f64],
    neighbors: &[(usize, &[f64])],
    budget: usize,
) -> Result<(Vec<f64>, Vec<Vec<usize>>)> {
    check_budget(neighbors.len(), budget)?;
    let d = self_vec.len();
    for (id, v) in neighbors {
        if v.len() != d {
            return Err(Error::Domain(format!(
                "message from sender {id} has dimension {}, expected {d}",
                v.len()
            )));
        }
    }
    let mut out = Vec::with_capacity(d);
    let mut kept = Vec::with_capacity(d);
    let mut column = Vec::with_capacity(neighbors.len());
    for k in 0..d {
        column.clear();
        column.extend(neighbors.iter().map(|(id, v)| (*id, v[k])));
        let (v, ids) = trim_coordinate(self_id, self_vec[k], &column, budget)?;
        out.push(v);
        kept.push(ids);
    }
    Ok((out, kept))
}

/// Allocation-light trimmed mean used on the hot path of the round engine.
/// `values` yields `(sender, value)`; `count` must equal its length.
pub(crate) struct Trimmer {
    scratch: Vec<(f64, usize)>,
}

impl Trimmer {
    pub fn new() -> Self {
        Self {
            scratch: Vec::new(),
        }
    }

    /// Trimmed sum over neighbors plus `self_value`, *not* divided.
    pub fn kept_sum(
        &mut self,
        self_value: f64,
        neighbors: impl Iterator<Item = (usize, f64)>,
        count: usize,
        budget: usize,
    ) -> Result<f64> {
        check_budget(count, budget)?;
        Ok(trimmed_sum(neighbors, budget, &mut self.scratch) + self_value)
    }
}
