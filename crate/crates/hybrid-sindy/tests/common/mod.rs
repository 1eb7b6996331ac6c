//! Independent oracles shared by the integration suites. These deliberately
//! avoid the library's own numerical paths (and nalgebra's SVD) so that
//! cross-checks exercise two separate routes to the same quantity.
#![allow(dead_code)] // each test binary uses its own subset

/// Singular values by one-sided Jacobi orthogonalization on the columns.
/// Plain Vec-of-rows representation, no shared code with the library.
pub fn jacobi_singular_values(matrix: &[Vec<f64>]) -> Vec<f64> {
    let m = matrix.len();
    let n = if m == 0 { 0 } else { matrix[0].len() };
    // Column-major working copy.
    let mut a: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| matrix[i][j]).collect()).collect();
    let dot = |x: &[f64], y: &[f64]| -> f64 { x.iter().zip(y).map(|(a, b)| a * b).sum() };

    for _ in 0..60 {
        let mut off = 0.0_f64;
        for p in 0..n {
            for q in (p + 1)..n {
                let app = dot(&a[p], &a[p]);
                let aqq = dot(&a[q], &a[q]);
                let apq = dot(&a[p], &a[q]);
                if apq.abs() <= 1e-30 {
                    continue;
                }
                off = off.max(apq.abs() / (app * aqq).sqrt().max(1e-300));
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let vp = a[p][i];
                    let vq = a[q][i];
                    a[p][i] = c * vp - s * vq;
                    a[q][i] = s * vp + c * vq;
                }
            }
        }
        if off < 1e-14 {
            break;
        }
    }
    let mut sigma: Vec<f64> = a.iter().map(|col| dot(col, col).sqrt()).collect();
    sigma.sort_by(|x, y| y.partial_cmp(x).unwrap());
    sigma
}

/// Exhaustive K-nearest-neighbor search: full distance sort with the
/// lowest-index tie rule.
pub fn exhaustive_knn(points: &[Vec<f64>], query: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let d2: f64 = p.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
            (d2, i)
        })
        .collect();
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    order.into_iter().take(k).map(|(_, i)| i).collect()
}

/// Exhaustive single change-point search over an error sequence, recomputing
/// each segment's squared deviation from scratch. Splits leaving fewer than
/// two leading samples are not considered; a split must reduce the unsplit
/// deviation by at least 10%.
pub fn exhaustive_changepoint(e: &[f64]) -> usize {
    let rows = e.len();
    if rows < 2 {
        return rows;
    }
    let dev = |s: &[f64]| -> f64 {
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        s.iter().map(|v| (v - mean).powi(2)).sum()
    };
    let unsplit = dev(e);
    if unsplit <= 0.0 {
        return rows;
    }
    let (mut best_t, mut best) = (rows, f64::INFINITY);
    for t in 2..rows {
        let cost = dev(&e[..t]) + dev(&e[t..]);
        if cost < best {
            best = cost;
            best_t = t;
        }
    }
    if unsplit - best < 0.1 * unsplit {
        rows
    } else {
        best_t
    }
}

/// Small deterministic PRNG for oracle-side data generation.
pub struct Lcg(pub u64);

impl Lcg {
    /// Uniform draw in [-1, 1).
    pub fn unit(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }

    /// Uniform draw in [lo, hi).
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (self.unit() + 1.0) / 2.0 * (hi - lo)
    }

    /// Approximately standard normal draw (sum of uniforms).
    pub fn normal(&mut self) -> f64 {
        let mut acc = 0.0;
        for _ in 0..12 {
            acc += (self.unit() + 1.0) / 2.0;
        }
        acc - 6.0
    }
}
