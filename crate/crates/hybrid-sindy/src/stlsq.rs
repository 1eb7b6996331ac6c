//! Sparse regression by sequentially thresholded least squares.
//!
//! Each state variable's equation is sparsified independently: alternate a
//! least-squares refit restricted to the active terms with hard thresholding
//! at level lambda until the active set stops changing. Sweeping lambda over a
//! grid enumerates candidate models of increasing sparsity.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A sparse coefficient matrix (p terms x n equations) with its originating
/// threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseModel {
    pub coefficients: DMatrix<f64>,
    pub lambda: f64,
    pub converged: bool,
}

impl SparseModel {
    /// Boolean support mask: true where the coefficient is nonzero.
    pub fn support(&self) -> DMatrix<bool> {
        self.coefficients.map(|c| c != 0.0)
    }

    /// Number of free parameters (nonzero coefficients).
    pub fn k(&self) -> usize {
        self.coefficients.iter().filter(|c| **c != 0.0).count()
    }

    /// Canonical support signature across all equations jointly.
    pub fn signature(&self) -> ModelSignature {
        let mut set = BTreeSet::new();
        for j in 0..self.coefficients.ncols() {
            for l in 0..self.coefficients.nrows() {
                if self.coefficients[(l, j)] != 0.0 {
                    set.insert((l as u16, j as u16));
                }
            }
        }
        ModelSignature(set)
    }

    /// Nonzero (term, coefficient) pairs of one equation column.
    pub fn column_terms(&self, j: usize) -> Vec<(usize, f64)> {
        (0..self.coefficients.nrows())
            .filter(|&l| self.coefficients[(l, j)] != 0.0)
            .map(|l| (l, self.coefficients[(l, j)]))
            .collect()
    }
}

/// The set of nonzero (term index, equation index) positions of a model.
///
/// Equality is exact set equality of positions; coefficient values never
/// participate. Used as the identity for cross-cluster frequency counting.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModelSignature(pub BTreeSet<(u16, u16)>);

impl ModelSignature {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }
}

impl fmt::Display for ModelSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "zero");
        }
        let parts: Vec<String> = self.0.iter().map(|(l, j)| format!("{}:{}", l, j)).collect();
        write!(f, "{}", parts.join("+"))
    }
}

/// Minimum-norm least-squares solution with rank information.
#[derive(Debug, Clone)]
pub struct LsSolution {
    pub coefficients: DMatrix<f64>,
    pub rank: usize,
    pub rank_deficient: bool,
}

/// Solve min ||xdot - theta c||_2 for every column of `xdot` via the SVD
/// pseudo-inverse (minimum-norm solution; never the normal equations).
pub fn least_squares(theta: &DMatrix<f64>, xdot: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    least_squares_detailed(theta, xdot).map(|s| s.coefficients)
}

/// As [`least_squares`], also reporting rank deficiency.
pub fn least_squares_detailed(theta: &DMatrix<f64>, xdot: &DMatrix<f64>) -> Result<LsSolution> {
    if theta.nrows() == 0 {
        return Err(Error::config("least squares needs at least one sample"));
    }
    if theta.nrows() != xdot.nrows() {
        return Err(Error::config(format!(
            "row mismatch: theta has {}, xdot has {}",
            theta.nrows(),
            xdot.nrows()
        )));
    }
    let p = theta.ncols();
    let svd = theta.clone().svd(true, true);
    let s_max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    if s_max == 0.0 {
        return Ok(LsSolution {
            coefficients: DMatrix::zeros(p, xdot.ncols()),
            rank: 0,
            rank_deficient: true,
        });
    }
    let cutoff = s_max * theta.nrows().max(p) as f64 * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    let coefficients = svd
        .solve(xdot, cutoff)
        .map_err(|e| Error::numerical(format!("svd solve failed: {e}")))?;
    Ok(LsSolution {
        coefficients,
        rank,
        rank_deficient: rank < p.min(theta.nrows()),
    })
}

fn columns(theta: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(theta.nrows(), idx.len(), |i, j| theta[(i, idx[j])])
}

/// Sequentially thresholded least squares.
///
/// Per equation column: refit on the active terms, zero every coefficient
/// with magnitude below `lambda`, repeat until the active set is stable or
/// `max_iters` is reached. An all-zero column is legal and yields the zero
/// dynamics for that variable.
pub fn stlsq(
    theta: &DMatrix<f64>,
    xdot: &DMatrix<f64>,
    lambda: f64,
    max_iters: usize,
) -> Result<SparseModel> {
    if lambda < 0.0 {
        return Err(Error::config("lambda must be nonnegative"));
    }
    if max_iters < 1 {
        return Err(Error::config("max_iters must be at least 1"));
    }
    let p = theta.ncols();
    let n = xdot.ncols();
    let mut coefficients = DMatrix::zeros(p, n);
    let mut converged = true;

    for j in 0..n {
        let b = DMatrix::from_fn(theta.nrows(), 1, |i, _| xdot[(i, j)]);
        let mut active: Vec<usize> = (0..p).collect();
        let mut column_converged = false;
        let mut coeffs_on_active: DVector<f64> = DVector::zeros(0);

        for _ in 0..max_iters {
            if active.is_empty() {
                column_converged = true;
                break;
            }
            let sub = columns(theta, &active);
            let sol = least_squares(&sub, &b)?;
            coeffs_on_active = DVector::from_iterator(active.len(), sol.column(0).iter().cloned());
            let survivors: Vec<usize> = active
                .iter()
                .enumerate()
                .filter(|&(r, _)| coeffs_on_active[r].abs() >= lambda)
                .map(|(_, &l)| l)
                .collect();
            if survivors == active {
                column_converged = true;
                break;
            }
            active = survivors;
        }

        if !column_converged && !active.is_empty() {
            // Out of iterations: keep the last refit restricted to the final
            // active set, flagged as unconverged.
            let sub = columns(theta, &active);
            let sol = least_squares(&sub, &b)?;
            coeffs_on_active = DVector::from_iterator(active.len(), sol.column(0).iter().cloned());
            converged = false;
        }
        for (r, &l) in active.iter().enumerate() {
            coefficients[(l, j)] = coeffs_on_active[r];
        }
    }

    Ok(SparseModel { coefficients, lambda, converged })
}

/// Run [`stlsq`] for each threshold, deduplicate by support signature (the
/// first-encountered threshold's coefficients are kept), and order the
/// distinct models by ascending number of free parameters.
pub fn lambda_sweep(
    theta: &DMatrix<f64>,
    xdot: &DMatrix<f64>,
    lambdas: &[f64],
    max_iters: usize,
) -> Result<Vec<SparseModel>> {
    if lambdas.is_empty() {
        return Err(Error::config("lambda grid must be non-empty"));
    }
    let mut seen = BTreeSet::new();
    let mut models = Vec::new();
    for &lambda in lambdas {
        let model = stlsq(theta, xdot, lambda, max_iters)?;
        if seen.insert(model.signature()) {
            models.push(model);
        }
    }
    models.sort_by_key(|m| m.k());
    Ok(models)
}

/// Logarithmically spaced threshold grid, the default being 30 values in
/// `[1e-4, 1e1]`.
pub fn log_lambda_grid(min: f64, max: f64, count: usize) -> Vec<f64> {
    assert!(min > 0.0 && max >= min && count >= 1);
    if count == 1 {
        return vec![min];
    }
    let (lo, hi) = (min.ln(), max.ln());
    (0..count)
        .map(|i| (lo + (hi - lo) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::dynamics::{simulate_hopper, HOPPER_COMPRESSION};
    use crate::features::FeatureLibrary;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (*seed >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }

    #[test]
    fn orthogonal_theta_gives_transpose_solution() {
        // 2x2 rotation is orthogonal: the LS solution is theta^T xdot.
        let c = 0.6_f64;
        let s = 0.8_f64;
        let theta = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let xdot = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -0.5, 0.25]);
        let sol = least_squares(&theta, &xdot).unwrap();
        let expected = theta.transpose() * &xdot;
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(sol[(i, j)], expected[(i, j)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn planted_coefficients_are_recovered() {
        let mut seed = 9u64;
        let theta = DMatrix::from_fn(40, 5, |_, _| lcg(&mut seed));
        let xi = DMatrix::from_fn(5, 2, |_, _| lcg(&mut seed));
        let xdot = &theta * &xi;
        let sol = least_squares(&theta, &xdot).unwrap();
        for i in 0..5 {
            for j in 0..2 {
                assert_relative_eq!(sol[(i, j)], xi[(i, j)], max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn zero_rhs_gives_zero_solution() {
        let mut seed = 3u64;
        let theta = DMatrix::from_fn(10, 4, |_, _| lcg(&mut seed));
        let sol = least_squares(&theta, &DMatrix::zeros(10, 2)).unwrap();
        assert!(sol.iter().all(|&c| c.abs() < 1e-12));
    }

    #[test]
    fn stlsq_with_zero_lambda_is_plain_least_squares() {
        let mut seed = 5u64;
        let theta = DMatrix::from_fn(20, 4, |_, _| lcg(&mut seed));
        let xdot = DMatrix::from_fn(20, 2, |_, _| lcg(&mut seed));
        let ls = least_squares(&theta, &xdot).unwrap();
        let model = stlsq(&theta, &xdot, 0.0, 20).unwrap();
        assert!(model.converged);
        for i in 0..4 {
            for j in 0..2 {
                assert_relative_eq!(model.coefficients[(i, j)], ls[(i, j)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn huge_lambda_yields_the_zero_model() {
        let mut seed = 7u64;
        let theta = DMatrix::from_fn(20, 4, |_, _| lcg(&mut seed));
        let xdot = DMatrix::from_fn(20, 2, |_, _| lcg(&mut seed));
        let model = stlsq(&theta, &xdot, 1e9, 20).unwrap();
        assert_eq!(model.k(), 0);
        assert!(model.signature().is_empty());
        assert!(model.converged);
    }

    #[test]
    fn recovers_compression_dynamics_from_simulator_data() {
        // Noiseless compression-phase samples: the acceleration equation is
        // dv/dt = (kappa + 1) - kappa*y = 11 - 10*y for kappa = 10.
        let set = simulate_hopper([0.8, -0.1], 10.0, 0.033, 5.0).unwrap();
        let rows: Vec<usize> = (0..set.n_samples())
            .filter(|&i| set.regime_labels[i] == HOPPER_COMPRESSION)
            .collect();
        assert!(rows.len() > 50);
        let lib = FeatureLibrary::new(2, 2).unwrap();
        let x = DMatrix::from_fn(rows.len(), 2, |i, j| set.states[(rows[i], j)]);
        let dx = DMatrix::from_fn(rows.len(), 2, |i, j| set.derivs[(rows[i], j)]);
        let theta = lib.evaluate(&x).unwrap();
        let model = stlsq(&theta, &dx, 0.5, 20).unwrap();
        // dy/dt = v: support {x2}; dv/dt: support {1, x1}.
        let sig = model.signature();
        let expected: BTreeSet<(u16, u16)> = [(2, 0), (0, 1), (1, 1)].into_iter().collect();
        assert_eq!(sig.0, expected);
        assert_relative_eq!(model.coefficients[(2, 0)], 1.0, epsilon = 1e-8);
        assert_relative_eq!(model.coefficients[(0, 1)], 11.0, epsilon = 1e-8);
        assert_relative_eq!(model.coefficients[(1, 1)], -10.0, epsilon = 1e-8);
    }

    #[test]
    fn sweep_deduplicates_and_orders_by_sparsity() {
        let mut seed = 11u64;
        let theta = DMatrix::from_fn(30, 4, |_, _| lcg(&mut seed));
        let xdot = DMatrix::from_fn(30, 1, |_, _| lcg(&mut seed));

        let single = lambda_sweep(&theta, &xdot, &[0.0], 20).unwrap();
        assert_eq!(single.len(), 1);
        let ls = least_squares(&theta, &xdot).unwrap();
        assert_eq!(single[0].coefficients, ls);

        // Two lambdas below every coefficient magnitude give the same support.
        let dups = lambda_sweep(&theta, &xdot, &[1e-12, 1e-11], 20).unwrap();
        assert_eq!(dups.len(), 1);

        let many = lambda_sweep(&theta, &xdot, &log_lambda_grid(1e-4, 10.0, 30), 20).unwrap();
        for w in many.windows(2) {
            assert!(w[0].k() <= w[1].k());
        }
    }

    #[test]
    fn sweep_finds_a_planted_two_term_model() {
        let mut seed = 17u64;
        let theta = DMatrix::from_fn(60, 6, |_, _| lcg(&mut seed));
        let mut xi = DMatrix::zeros(6, 1);
        xi[(1, 0)] = 2.0;
        xi[(4, 0)] = -1.5;
        let xdot = &theta * &xi;
        let models = lambda_sweep(&theta, &xdot, &log_lambda_grid(1e-4, 10.0, 30), 20).unwrap();
        let target: BTreeSet<(u16, u16)> = [(1, 0), (4, 0)].into_iter().collect();
        assert!(models.iter().any(|m| m.signature().0 == target));
    }

    #[test]
    fn retained_coefficients_satisfy_threshold_and_refit() {
        let mut seed = 23u64;
        let theta = DMatrix::from_fn(40, 6, |_, _| lcg(&mut seed));
        let xdot = DMatrix::from_fn(40, 2, |_, _| lcg(&mut seed));
        for &lambda in &[0.01, 0.05, 0.2, 1.0] {
            let model = stlsq(&theta, &xdot, lambda, 20).unwrap();
            if !model.converged {
                continue;
            }
            for j in 0..2 {
                let terms = model.column_terms(j);
                for &(_, c) in &terms {
                    assert!(c.abs() >= lambda, "lambda={} coeff={}", lambda, c);
                }
                // Refit property: nonzeros equal the unrestricted LS on the
                // active columns.
                if terms.is_empty() {
                    continue;
                }
                let idx: Vec<usize> = terms.iter().map(|&(l, _)| l).collect();
                let sub = columns(&theta, &idx);
                let b = DMatrix::from_fn(40, 1, |i, _| xdot[(i, j)]);
                let refit = least_squares(&sub, &b).unwrap();
                for (r, &(_, c)) in terms.iter().enumerate() {
                    assert_relative_eq!(c, refit[(r, 0)], max_relative = 1e-10);
                }
            }
        }
    }

    #[test]
    fn log_grid_endpoints() {
        let grid = log_lambda_grid(1e-4, 10.0, 30);
        assert_eq!(grid.len(), 30);
        assert_relative_eq!(grid[0], 1e-4, max_relative = 1e-12);
        assert_relative_eq!(grid[29], 10.0, max_relative = 1e-12);
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
    }
}
