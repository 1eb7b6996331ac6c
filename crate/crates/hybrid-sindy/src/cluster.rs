//! Nearest-neighbor clustering in measurement-based coordinates.
//!
//! For each training sample (the anchor) we gather its K nearest training
//! rows, then gather the K validation rows nearest the training cluster's
//! centroid. Distances are unweighted Euclidean in the selected coordinates;
//! ties break toward the lowest row index so results are deterministic.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::traj::TrajectorySet;

/// Matched training/validation clusters around one anchor sample.
#[derive(Debug, Clone)]
pub struct ClusterPair {
    pub anchor_index: usize,
    pub train_indices: Vec<usize>,
    pub centroid: DVector<f64>,
    pub validation_indices: Vec<usize>,
}

/// Select columns of the concatenated `[X  Xdot]` matrix as clustering
/// coordinates. Indices `0..n` address states, `n..2n` derivatives.
pub fn select_coordinates(set: &TrajectorySet, columns: &[usize]) -> Result<DMatrix<f64>> {
    if columns.is_empty() {
        return Err(Error::config("coordinate selection must be non-empty"));
    }
    let n = set.n_states();
    for &c in columns {
        if c >= 2 * n {
            return Err(Error::config(format!(
                "coordinate column {} out of range for {} concatenated columns",
                c,
                2 * n
            )));
        }
    }
    let m = set.n_samples();
    Ok(DMatrix::from_fn(m, columns.len(), |i, j| {
        let c = columns[j];
        if c < n {
            set.states[(i, c)]
        } else {
            set.derivs[(i, c - n)]
        }
    }))
}

/// Indices of the `k` rows of `y` nearest to `query`, by squared Euclidean
/// distance with ties broken toward the lowest index.
pub fn k_nearest(y: &DMatrix<f64>, query: &[f64], k: usize) -> Result<Vec<usize>> {
    let m = y.nrows();
    if k > m {
        return Err(Error::config(format!(
            "requested {} neighbors from {} rows",
            k, m
        )));
    }
    if query.len() != y.ncols() {
        return Err(Error::config("query dimension mismatch"));
    }
    let mut order: Vec<(f64, usize)> = (0..m)
        .map(|i| {
            let mut d2 = 0.0;
            for j in 0..y.ncols() {
                let diff = y[(i, j)] - query[j];
                d2 += diff * diff;
            }
            (d2, i)
        })
        .collect();
    if order.iter().any(|(d, _)| !d.is_finite()) {
        return Err(Error::numerical("non-finite distance in neighbor search"));
    }
    let cmp = |a: &(f64, usize), b: &(f64, usize)| {
        a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1))
    };
    if k < m {
        order.select_nth_unstable_by(k - 1, cmp);
        order.truncate(k);
    }
    order.sort_by(cmp);
    Ok(order.into_iter().map(|(_, i)| i).collect())
}

/// Build the training/validation cluster pair for one anchor row.
pub fn build_cluster(
    y_train: &DMatrix<f64>,
    y_validation: &DMatrix<f64>,
    anchor_index: usize,
    k: usize,
) -> Result<ClusterPair> {
    if anchor_index >= y_train.nrows() {
        return Err(Error::config("anchor index out of range"));
    }
    let d = y_train.ncols();
    let anchor: Vec<f64> = (0..d).map(|j| y_train[(anchor_index, j)]).collect();
    let train_indices = k_nearest(y_train, &anchor, k)?;

    let mut centroid = DVector::zeros(d);
    for &i in &train_indices {
        for j in 0..d {
            centroid[j] += y_train[(i, j)];
        }
    }
    centroid /= k as f64;

    let validation_indices = k_nearest(y_validation, centroid.as_slice(), k)?;
    Ok(ClusterPair {
        anchor_index,
        train_indices,
        centroid,
        validation_indices,
    })
}

/// Up to `q` temporally sequential state rows starting at `start_row`,
/// truncated at the end of the trajectory that owns the start row.
pub fn validation_segment(set: &TrajectorySet, start_row: usize, q: usize) -> Result<DMatrix<f64>> {
    if start_row >= set.n_samples() {
        return Err(Error::config("segment start row out of range"));
    }
    if q < 1 {
        return Err(Error::config("segment length must be at least 1"));
    }
    let (_, end) = set.trajectory_range(start_row);
    let len = q.min(end - start_row);
    Ok(DMatrix::from_fn(len, set.n_states(), |i, j| {
        set.states[(start_row + i, j)]
    }))
}
