//! Multivariate polynomial feature library and conditioning diagnostics.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Ordered multivariate monomial library.
///
/// Terms are all exponent vectors with total degree `<= max_order`, in graded
/// lexicographic order with the constant term first; the count is
/// `C(n + max_order, max_order)`. This ordering fixes what each coefficient
/// index means everywhere in the crate and in serialized models.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureLibrary {
    n: usize,
    max_order: usize,
    terms: Vec<Vec<u32>>,
    names: Vec<String>,
}

impl FeatureLibrary {
    pub fn new(n: usize, max_order: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::config("library needs at least one state variable"));
        }
        let mut terms = Vec::new();
        for degree in 0..=max_order {
            let mut exps = vec![0u32; n];
            enumerate_degree(&mut exps, 0, degree as u32, &mut terms);
        }
        let names = terms.iter().map(|e| term_name(e)).collect();
        Ok(FeatureLibrary { n, max_order, terms, names })
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// Number of terms p.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[Vec<u32>] {
        &self.terms
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Evaluate one sample into `out` (length p). `powers` is scratch space of
    /// length `n * (max_order + 1)`.
    pub fn evaluate_row_into(&self, x: &[f64], powers: &mut [f64], out: &mut [f64]) {
        let stride = self.max_order + 1;
        for j in 0..self.n {
            powers[j * stride] = 1.0;
            for d in 1..=self.max_order {
                powers[j * stride + d] = powers[j * stride + d - 1] * x[j];
            }
        }
        for (l, exps) in self.terms.iter().enumerate() {
            let mut v = 1.0;
            for (j, &e) in exps.iter().enumerate() {
                v *= powers[j * stride + e as usize];
            }
            out[l] = v;
        }
    }

    /// Allocate fresh scratch space for [`Self::evaluate_row_into`].
    pub fn scratch(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0; self.n * (self.max_order + 1)], vec![0.0; self.len()])
    }

    /// Evaluate the library on every row of `x` (m x n), producing m x p.
    ///
    /// Non-finite inputs propagate into the output and are reported.
    pub fn evaluate(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.n {
            return Err(Error::config(format!(
                "library expects {} state columns, got {}",
                self.n,
                x.ncols()
            )));
        }
        let m = x.nrows();
        let mut theta = DMatrix::zeros(m, self.len());
        let (mut powers, mut row) = self.scratch();
        let mut sample = vec![0.0; self.n];
        let mut saw_nonfinite = false;
        for i in 0..m {
            for j in 0..self.n {
                sample[j] = x[(i, j)];
                saw_nonfinite |= !sample[j].is_finite();
            }
            self.evaluate_row_into(&sample, &mut powers, &mut row);
            for l in 0..self.len() {
                theta[(i, l)] = row[l];
            }
        }
        if saw_nonfinite {
            return Err(Error::numerical("non-finite entries in library input"));
        }
        Ok(theta)
    }
}

fn enumerate_degree(exps: &mut Vec<u32>, pos: usize, remaining: u32, out: &mut Vec<Vec<u32>>) {
    if pos == exps.len() - 1 {
        exps[pos] = remaining;
        out.push(exps.clone());
        return;
    }
    // Lexicographic within a degree: highest power on the earliest variable first.
    for e in (0..=remaining).rev() {
        exps[pos] = e;
        enumerate_degree(exps, pos + 1, remaining - e, out);
    }
    exps[pos] = 0;
}

fn term_name(exps: &[u32]) -> String {
    let mut parts = Vec::new();
    for (j, &e) in exps.iter().enumerate() {
        match e {
            0 => {}
            1 => parts.push(format!("x{}", j + 1)),
            _ => parts.push(format!("x{}^{}", j + 1, e)),
        }
    }
    if parts.is_empty() {
        "1".to_string()
    } else {
        parts.join("*")
    }
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(matrix: &DMatrix<f64>) -> f64 {
    let svd = matrix.clone().svd(false, false);
    svd.singular_values.iter().cloned().fold(0.0_f64, f64::max)
}

/// 2-norm condition number of a (possibly rectangular) matrix: the ratio of
/// the largest to smallest singular value. Returns `f64::INFINITY` when the
/// matrix is rank deficient at machine scale.
pub fn condition_number(theta: &DMatrix<f64>) -> f64 {
    let svd = theta.clone().svd(false, false);
    let sigma = &svd.singular_values;
    let s_max = sigma.iter().cloned().fold(0.0_f64, f64::max);
    if s_max == 0.0 {
        return f64::INFINITY;
    }
    let cutoff = s_max * theta.nrows().max(theta.ncols()) as f64 * f64::EPSILON;
    let s_min = sigma.iter().cloned().fold(f64::INFINITY, f64::min);
    if s_min <= cutoff {
        return f64::INFINITY;
    }
    s_max / s_min
}
