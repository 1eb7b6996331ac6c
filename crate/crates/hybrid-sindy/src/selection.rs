//! Out-of-sample validation and information-criterion scoring of candidate
//! models.
//!
//! Each candidate is integrated forward from every validation-cluster member,
//! compared against the matching validation segment up to a detected
//! change-point in the error sequence, and scored with the finite-sample
//! corrected AIC over the cluster's K initial conditions.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::features::FeatureLibrary;
use crate::stlsq::SparseModel;

/// State norm beyond which a model simulation is declared divergent.
pub const BLOWUP_NORM: f64 = 1e6;

/// Fraction by which the best split must reduce total within-segment squared
/// deviation before a switch is declared.
const SWITCH_IMPROVEMENT: f64 = 0.1;

/// Floor applied to a zero residual sum of squares before the logarithm.
const RSS_FLOOR: f64 = 1e-300;

/// Result of forward-simulating a model.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    /// Simulated states, `steps x n`; the first row is the initial condition.
    pub states: DMatrix<f64>,
    /// Row index at which the state norm exceeded [`BLOWUP_NORM`] (rows from
    /// there on are not meaningful), or `None` if the simulation completed.
    pub truncated_at: Option<usize>,
}

/// Integrate `xdot = Theta(x) Xi` with fixed-step RK4, using the same
/// per-sample step and substep count as the data generator.
pub fn simulate_model(
    model: &SparseModel,
    library: &FeatureLibrary,
    initial: &[f64],
    dt: f64,
    substeps: usize,
    steps: usize,
) -> Result<SimOutcome> {
    if steps < 1 {
        return Err(Error::config("simulation needs at least one step"));
    }
    if dt <= 0.0 || substeps < 1 {
        return Err(Error::config("simulation step must be positive"));
    }
    let n = library.n_states();
    if initial.len() != n {
        return Err(Error::config("initial condition dimension mismatch"));
    }

    let column_terms: Vec<Vec<(usize, f64)>> = (0..n).map(|j| model.column_terms(j)).collect();
    let (mut powers, mut feats) = library.scratch();
    let mut rhs = |x: &[f64], out: &mut [f64]| {
        library.evaluate_row_into(x, &mut powers, &mut feats);
        for (j, terms) in column_terms.iter().enumerate() {
            let mut acc = 0.0;
            for &(l, c) in terms {
                acc += feats[l] * c;
            }
            out[j] = acc;
        }
    };

    let mut states = DMatrix::zeros(steps, n);
    let mut x = initial.to_vec();
    let mut truncated_at = None;
    let h = dt / substeps as f64;
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    for row in 0..steps {
        for j in 0..n {
            states[(row, j)] = x[j];
        }
        if row + 1 == steps {
            break;
        }
        for _ in 0..substeps {
            rhs(&x, &mut k1);
            for j in 0..n {
                tmp[j] = x[j] + 0.5 * h * k1[j];
            }
            rhs(&tmp, &mut k2);
            for j in 0..n {
                tmp[j] = x[j] + 0.5 * h * k2[j];
            }
            rhs(&tmp, &mut k3);
            for j in 0..n {
                tmp[j] = x[j] + h * k3[j];
            }
            rhs(&tmp, &mut k4);
            for j in 0..n {
                x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
        }
        let norm2: f64 = x.iter().map(|v| v * v).sum();
        if !norm2.is_finite() || norm2.sqrt() > BLOWUP_NORM {
            truncated_at = Some(row + 1);
            for r in row + 1..steps {
                for j in 0..n {
                    states[(r, j)] = f64::NAN;
                }
            }
            break;
        }
    }

    Ok(SimOutcome { states, truncated_at })
}

/// Detect a single change-point in the mean of the per-time absolute error
/// between a simulation and its validation segment.
///
/// Returns the number of leading samples that precede the switch, in
/// `[1, rows]`; `rows` means no switch was found. The split minimizing the
/// total within-segment squared deviation is accepted only when it reduces
/// the unsplit deviation by at least 10%, which keeps oscillatory error
/// sequences from triggering spurious early cuts. The leading segment must
/// keep at least two samples: a single-point segment has zero deviation by
/// construction (the simulation shares its first row with the validation
/// segment), so a cut there is never evidence of a switch.
pub fn detect_switch(z: &DMatrix<f64>, z_v: &DMatrix<f64>) -> usize {
    assert_eq!(z.nrows(), z_v.nrows(), "shape mismatch in detect_switch");
    assert_eq!(z.ncols(), z_v.ncols(), "shape mismatch in detect_switch");
    let rows = z.nrows();
    if rows < 2 {
        return rows;
    }
    let n = z.ncols() as f64;
    let e: Vec<f64> = (0..rows)
        .map(|a| {
            (0..z.ncols())
                .map(|l| (z[(a, l)] - z_v[(a, l)]).abs())
                .sum::<f64>()
                / n
        })
        .collect();

    // Prefix sums make every segment's squared deviation O(1).
    let mut sum = vec![0.0; rows + 1];
    let mut sumsq = vec![0.0; rows + 1];
    for (a, &v) in e.iter().enumerate() {
        sum[a + 1] = sum[a] + v;
        sumsq[a + 1] = sumsq[a] + v * v;
    }
    let ss = |lo: usize, hi: usize| -> f64 {
        let len = (hi - lo) as f64;
        let s = sum[hi] - sum[lo];
        let sq = sumsq[hi] - sumsq[lo];
        (sq - s * s / len).max(0.0)
    };

    let unsplit = ss(0, rows);
    if unsplit <= 0.0 {
        return rows;
    }
    let mut best_t = rows;
    let mut best_cost = f64::INFINITY;
    for t in 2..rows {
        let cost = ss(0, t) + ss(t, rows);
        if cost < best_cost {
            best_cost = cost;
            best_t = t;
        }
    }
    if unsplit - best_cost < SWITCH_IMPROVEMENT * unsplit {
        rows
    } else {
        best_t
    }
}

/// Mean squared error over the first `t_s` rows and all state variables:
/// `(1/n) sum_l (1/t_s) sum_{a<t_s} (Z - Z_V)^2`.
pub fn average_error(z: &DMatrix<f64>, z_v: &DMatrix<f64>, t_s: usize) -> f64 {
    assert!(t_s >= 1 && t_s <= z.nrows(), "t_s out of range");
    let n = z.ncols();
    let mut acc = 0.0;
    for l in 0..n {
        let mut col = 0.0;
        for a in 0..t_s {
            let d = z[(a, l)] - z_v[(a, l)];
            col += d * d;
        }
        acc += col / t_s as f64;
    }
    acc / n as f64
}

/// AICc score with diagnostic flags.
#[derive(Debug, Clone, Copy)]
pub struct AiccScore {
    pub aicc: f64,
    /// K - k - 2 <= 0: the correction denominator is not positive and the
    /// model cannot be supported at this cluster size.
    pub degenerate: bool,
    /// The residual sum of squares was zero and was floored before the log.
    pub rss_floored: bool,
}

/// Finite-sample corrected AIC over a cluster's per-initial-condition errors:
/// `AIC = K ln(RSS/K) + 2k` with `RSS = sum(E_avg)`, then
/// `AICc = AIC + 2(k+1)(k+2)/(K-k-2)`.
pub fn score_aicc_detailed(e_avg: &[f64], k: usize, cluster_size: usize) -> AiccScore {
    assert!(cluster_size >= 1, "cluster size must be at least 1");
    let kk = cluster_size as f64;
    let denom = kk - k as f64 - 2.0;
    if denom <= 0.0 {
        return AiccScore { aicc: f64::INFINITY, degenerate: true, rss_floored: false };
    }
    let rss: f64 = e_avg.iter().sum();
    if !rss.is_finite() {
        return AiccScore { aicc: f64::INFINITY, degenerate: false, rss_floored: false };
    }
    let mut rss_floored = false;
    let rss = if rss == 0.0 {
        rss_floored = true;
        RSS_FLOOR
    } else {
        rss
    };
    let aic = kk * (rss / kk).ln() + 2.0 * k as f64;
    let aicc = aic + 2.0 * (k as f64 + 1.0) * (k as f64 + 2.0) / denom;
    AiccScore { aicc, degenerate: false, rss_floored }
}

/// See [`score_aicc_detailed`].
pub fn score_aicc(e_avg: &[f64], k: usize, cluster_size: usize) -> f64 {
    score_aicc_detailed(e_avg, k, cluster_size).aicc
}

/// A candidate model with its validation errors and scores.
#[derive(Debug, Clone)]
pub struct ScoredModel {
    pub model: SparseModel,
    /// Mean squared validation error per initial condition (length K).
    pub e_avg: Vec<f64>,
    pub aicc: f64,
    /// AICc relative to the within-cluster minimum; set by [`rank_and_filter`].
    pub rel_aicc: f64,
    pub cluster_anchor: usize,
}

/// Rescore models against the within-cluster minimum AICc and keep those with
/// relative AICc below `threshold`, sorted ascending. Clusters whose models
/// all scored infinite yield an empty result.
pub fn rank_and_filter(mut scored: Vec<ScoredModel>, threshold: f64) -> Vec<ScoredModel> {
    let min = scored
        .iter()
        .map(|s| s.aicc)
        .filter(|a| a.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Vec::new();
    }
    for s in &mut scored {
        s.rel_aicc = s.aicc - min;
    }
    scored.retain(|s| s.rel_aicc < threshold);
    scored.sort_by(|a, b| a.rel_aicc.partial_cmp(&b.rel_aicc).unwrap());
    scored
}
