//! Time-stamped trajectory data shared by the simulators and the
//! identification pipeline.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A set of concatenated fixed-step trajectories with exact derivatives.
///
/// `states` and `derivs` are `m x n` with one sample per row. `boundaries`
/// holds the starting row of each trajectory. `regime_labels` carry the
/// ground-truth chart id per sample; they exist for evaluation and plotting
/// only and are never read by the identification code.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    pub times: Vec<f64>,
    pub states: DMatrix<f64>,
    pub derivs: DMatrix<f64>,
    pub boundaries: Vec<usize>,
    pub regime_labels: Vec<u32>,
}

impl TrajectorySet {
    pub fn new(
        times: Vec<f64>,
        states: DMatrix<f64>,
        derivs: DMatrix<f64>,
        boundaries: Vec<usize>,
        regime_labels: Vec<u32>,
    ) -> Result<Self> {
        let m = times.len();
        if states.nrows() != m || derivs.nrows() != m || regime_labels.len() != m {
            return Err(Error::config(format!(
                "inconsistent trajectory set: {} times, {} state rows, {} derivative rows, {} labels",
                m,
                states.nrows(),
                derivs.nrows(),
                regime_labels.len()
            )));
        }
        if states.ncols() != derivs.ncols() {
            return Err(Error::config(
                "states and derivatives must have the same number of columns",
            ));
        }
        if boundaries.first() != Some(&0) && m > 0 {
            return Err(Error::config("first trajectory boundary must be 0"));
        }
        Ok(Self {
            times,
            states,
            derivs,
            boundaries,
            regime_labels,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.times.len()
    }

    pub fn n_states(&self) -> usize {
        self.states.ncols()
    }

    pub fn n_trajectories(&self) -> usize {
        self.boundaries.len()
    }

    /// Trajectory id owning `row`.
    pub fn trajectory_of(&self, row: usize) -> usize {
        match self.boundaries.binary_search(&row) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    }

    /// Half-open row range `[start, end)` of the trajectory owning `row`.
    pub fn trajectory_range(&self, row: usize) -> (usize, usize) {
        let id = self.trajectory_of(row);
        let start = self.boundaries[id];
        let end = self
            .boundaries
            .get(id + 1)
            .copied()
            .unwrap_or(self.n_samples());
        (start, end)
    }

    /// Concatenate trajectory sets, adjusting boundaries.
    pub fn concat(sets: Vec<TrajectorySet>) -> Result<TrajectorySet> {
        let mut iter = sets.into_iter();
        let mut acc = iter
            .next()
            .ok_or_else(|| Error::config("cannot concatenate zero trajectory sets"))?;
        for set in iter {
            if set.n_states() != acc.n_states() {
                return Err(Error::config("state dimension mismatch in concat"));
            }
            let offset = acc.n_samples();
            acc.times.extend_from_slice(&set.times);
            acc.regime_labels.extend_from_slice(&set.regime_labels);
            acc.boundaries.extend(set.boundaries.iter().map(|b| b + offset));
            acc.states = stack_rows(&acc.states, &set.states);
            acc.derivs = stack_rows(&acc.derivs, &set.derivs);
        }
        Ok(acc)
    }

    /// Keep only the given state columns (and their derivatives).
    ///
    /// Used to restrict identification to a subset of the simulated state,
    /// e.g. regressing only (S, I) out of an (S, I, R) simulation.
    pub fn select_states(&self, columns: &[usize]) -> Result<TrajectorySet> {
        for &c in columns {
            if c >= self.n_states() {
                return Err(Error::config(format!(
                    "state column {} out of range for {} states",
                    c,
                    self.n_states()
                )));
            }
        }
        let m = self.n_samples();
        let pick = |src: &DMatrix<f64>| {
            DMatrix::from_fn(m, columns.len(), |i, j| src[(i, columns[j])])
        };
        Ok(TrajectorySet {
            times: self.times.clone(),
            states: pick(&self.states),
            derivs: pick(&self.derivs),
            boundaries: self.boundaries.clone(),
            regime_labels: self.regime_labels.clone(),
        })
    }

    /// One row of the state matrix as a plain vector.
    pub fn state_row(&self, row: usize) -> Vec<f64> {
        (0..self.n_states()).map(|j| self.states[(row, j)]).collect()
    }
}

fn stack_rows(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((a.nrows(), 0), (b.nrows(), b.ncols())).copy_from(b);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(n_rows: usize, start_t: f64) -> TrajectorySet {
        let times: Vec<f64> = (0..n_rows).map(|i| start_t + i as f64).collect();
        let states = DMatrix::from_fn(n_rows, 2, |i, j| (i * 2 + j) as f64 + start_t);
        let derivs = states.map(|v| -v);
        TrajectorySet::new(times, states, derivs, vec![0], vec![0; n_rows]).unwrap()
    }

    #[test]
    fn concat_adjusts_boundaries() {
        let joined = TrajectorySet::concat(vec![tiny(3, 0.0), tiny(4, 100.0)]).unwrap();
        assert_eq!(joined.n_samples(), 7);
        assert_eq!(joined.boundaries, vec![0, 3]);
        assert_eq!(joined.trajectory_of(2), 0);
        assert_eq!(joined.trajectory_of(3), 1);
        assert_eq!(joined.trajectory_range(5), (3, 7));
        assert_eq!(joined.states[(3, 0)], 100.0);
    }

    #[test]
    fn select_states_projects_both_matrices() {
        let set = tiny(3, 0.0);
        let proj = set.select_states(&[1]).unwrap();
        assert_eq!(proj.n_states(), 1);
        assert_eq!(proj.states[(2, 0)], set.states[(2, 1)]);
        assert_eq!(proj.derivs[(2, 0)], set.derivs[(2, 1)]);
        assert!(set.select_states(&[2]).is_err());
    }

    #[test]
    fn mismatched_rows_rejected() {
        let times = vec![0.0, 1.0];
        let states = DMatrix::zeros(3, 2);
        let derivs = DMatrix::zeros(3, 2);
        assert!(TrajectorySet::new(times, states, derivs, vec![0], vec![0; 3]).is_err());
    }
}
