//! Recovery diagnostics: the least-squares perturbation bound, the
//! single-step hard-thresholding success factor, and the cluster-size /
//! noise-level sweep experiment on the hopper benchmark.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use rayon::prelude::*;

use crate::cluster::k_nearest;
use crate::dynamics::{add_noise, derive_seed, simulate_hopper, HOPPER_COMPRESSION, HOPPER_FLIGHT};
use crate::error::{Error, Result};
use crate::features::{condition_number, FeatureLibrary};
use crate::stlsq::{lambda_sweep, log_lambda_grid, ModelSignature};
use crate::traj::TrajectorySet;

/// Relative least-squares error bound `C kappa eps / (1 - C kappa eps)`.
///
/// Returns `f64::INFINITY` when `C kappa eps >= 1` (the bound is vacuous).
pub fn ls_error_bound(kappa: f64, eps: f64, c: f64) -> f64 {
    assert!(kappa >= 1.0 && eps >= 0.0 && c > 0.0, "bound arguments out of domain");
    let x = c * kappa * eps;
    if x >= 1.0 {
        f64::INFINITY
    } else {
        x / (1.0 - x)
    }
}

/// Per-equation factor `sqrt(k) * max|coeff| / min nonzero |coeff|` governing
/// whether a single hard-thresholding step can find the true support.
/// All-zero columns have no factor and yield `None`.
pub fn threshold_success_factor(xi_true: &DMatrix<f64>) -> Vec<Option<f64>> {
    (0..xi_true.ncols())
        .map(|j| {
            let mags: Vec<f64> = (0..xi_true.nrows())
                .map(|l| xi_true[(l, j)].abs())
                .filter(|&m| m > 0.0)
                .collect();
            if mags.is_empty() {
                return None;
            }
            let max = mags.iter().cloned().fold(0.0_f64, f64::max);
            let min = mags.iter().cloned().fold(f64::INFINITY, f64::min);
            Some((mags.len() as f64).sqrt() * max / min)
        })
        .collect()
}

/// Configuration of the cluster-size / noise sweep.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SweepConfig {
    pub kappa: f64,
    pub dt: f64,
    pub t_end: f64,
    pub training_ic_count: usize,
    pub position_range: (f64, f64),
    pub velocity_range: (f64, f64),
    pub cluster_sizes: Vec<usize>,
    pub noise_levels: Vec<f64>,
    pub realizations: usize,
    pub lambdas: Vec<f64>,
    pub max_order: usize,
    /// Samples with |y - 1| below this margin are dropped when the data is
    /// divided into regime subsets, keeping clusters clear of the guard.
    pub guard_margin: f64,
    pub max_stlsq_iters: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            kappa: 10.0,
            dt: 0.033,
            t_end: 5.0,
            training_ic_count: 100,
            position_range: (1.0, 1.5),
            velocity_range: (0.0, 0.5),
            cluster_sizes: vec![10, 30, 100, 300, 1000],
            noise_levels: vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0],
            realizations: 5,
            lambdas: log_lambda_grid(1e-4, 10.0, 30),
            max_order: 2,
            guard_margin: 0.02,
            max_stlsq_iters: 20,
        }
    }
}

/// One cell of the sweep grid.
#[derive(Debug, Clone)]
pub struct SweepCell {
    /// Regime label: [`HOPPER_COMPRESSION`] or [`HOPPER_FLIGHT`].
    pub regime: u32,
    pub cluster_size: usize,
    pub noise_std: f64,
    pub realizations: usize,
    pub successes: usize,
    pub success_fraction: f64,
    /// Condition number of the noiseless cluster library matrix.
    pub condition_number: f64,
    /// Diagnostic product: condition number times noise level.
    pub kappa_eps: f64,
    /// True when the regime subset has fewer samples than the cluster size.
    pub skipped: bool,
}

pub fn regime_name(regime: u32) -> &'static str {
    if regime == HOPPER_COMPRESSION {
        "compression"
    } else {
        "flight"
    }
}

fn true_signature(regime: u32) -> ModelSignature {
    // Library order: [1, y, v, y^2, yv, v^2]; equations (dy/dt, dv/dt).
    let mut set = BTreeSet::new();
    set.insert((2u16, 0u16)); // dy/dt = v
    set.insert((0u16, 1u16)); // dv/dt constant term
    if regime == HOPPER_COMPRESSION {
        set.insert((1u16, 1u16)); // dv/dt linear position term
    }
    ModelSignature(set)
}

/// Generate the sweep's training data: fixed-step hopper trajectories from
/// uniformly drawn initial conditions in the configured ranges.
pub fn sweep_training_data(config: &SweepConfig, seed: u64) -> Result<TrajectorySet> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "sweep-ics", 0));
    let pos = Uniform::new_inclusive(config.position_range.0, config.position_range.1)
        .map_err(|e| Error::config(format!("bad position range: {e}")))?;
    let vel = Uniform::new_inclusive(config.velocity_range.0, config.velocity_range.1)
        .map_err(|e| Error::config(format!("bad velocity range: {e}")))?;
    let sets = (0..config.training_ic_count)
        .map(|_| {
            let ic = [pos.sample(&mut rng), vel.sample(&mut rng)];
            simulate_hopper(ic, config.kappa, config.dt, config.t_end)
        })
        .collect::<Result<Vec<_>>>()?;
    TrajectorySet::concat(sets)
}

/// Indices of one regime's samples, guard margin applied, ordered by distance
/// to the regime's seed point (the highest flying sample, or the deepest
/// compression sample).
fn regime_neighbor_order(set: &TrajectorySet, regime: u32, margin: f64) -> Vec<usize> {
    let subset: Vec<usize> = (0..set.n_samples())
        .filter(|&i| {
            set.regime_labels[i] == regime && (set.states[(i, 0)] - 1.0).abs() > margin
        })
        .collect();
    if subset.is_empty() {
        return subset;
    }
    let seed_pos = subset
        .iter()
        .cloned()
        .max_by(|&a, &b| {
            let (ya, yb) = (set.states[(a, 0)], set.states[(b, 0)]);
            let key_a = if regime == HOPPER_FLIGHT { ya } else { -ya };
            let key_b = if regime == HOPPER_FLIGHT { yb } else { -yb };
            key_a.partial_cmp(&key_b).unwrap()
        })
        .unwrap();
    let y = DMatrix::from_fn(subset.len(), 2, |i, j| set.states[(subset[i], j)]);
    let query = [set.states[(seed_pos, 0)], set.states[(seed_pos, 1)]];
    let order = k_nearest(&y, &query, subset.len()).expect("finite data");
    order.into_iter().map(|i| subset[i]).collect()
}

/// Run the cluster-size / noise sweep. For each regime, cluster size, noise
/// level, and noise realization: perturb the cluster's states, run the
/// threshold sweep, and count the run a success when some threshold recovers
/// exactly the true support. Reproducible bit-for-bit for a fixed seed.
pub fn noise_sweep(config: &SweepConfig, seed: u64) -> Result<Vec<SweepCell>> {
    if config.cluster_sizes.is_empty() || config.noise_levels.is_empty() {
        return Err(Error::config("sweep grids must be non-empty"));
    }
    if config.realizations < 1 {
        return Err(Error::config("sweep needs at least one realization"));
    }
    let data = sweep_training_data(config, seed)?;
    let library = FeatureLibrary::new(2, config.max_order)?;

    let mut jobs = Vec::new();
    for &regime in &[HOPPER_COMPRESSION, HOPPER_FLIGHT] {
        let order = regime_neighbor_order(&data, regime, config.guard_margin);
        for (ki, &k) in config.cluster_sizes.iter().enumerate() {
            for (ei, &eps) in config.noise_levels.iter().enumerate() {
                jobs.push((regime, order.clone(), ki, k, ei, eps));
            }
        }
    }

    let cells: Vec<SweepCell> = jobs
        .into_par_iter()
        .map(|(regime, order, ki, k, ei, eps)| {
            if k > order.len() {
                return SweepCell {
                    regime,
                    cluster_size: k,
                    noise_std: eps,
                    realizations: config.realizations,
                    successes: 0,
                    success_fraction: 0.0,
                    condition_number: f64::NAN,
                    kappa_eps: f64::NAN,
                    skipped: true,
                };
            }
            let rows = &order[..k];
            let cluster = cluster_subset(&data, rows);
            let theta_clean = library.evaluate(&cluster.states).expect("finite states");
            let kappa = condition_number(&theta_clean);
            let target = true_signature(regime);

            let mut successes = 0;
            for r in 0..config.realizations {
                let flat = (((regime as u64 * 1024) + ki as u64) * 1024 + ei as u64) * 1024 + r as u64;
                let noisy = add_noise(&cluster, eps, derive_seed(seed, "sweep-noise", flat));
                let success = library
                    .evaluate(&noisy.states)
                    .ok()
                    .and_then(|theta| {
                        lambda_sweep(&theta, &cluster.derivs, &config.lambdas, config.max_stlsq_iters).ok()
                    })
                    .map(|models| models.iter().any(|m| m.signature() == target))
                    .unwrap_or(false);
                if success {
                    successes += 1;
                }
            }
            SweepCell {
                regime,
                cluster_size: k,
                noise_std: eps,
                realizations: config.realizations,
                successes,
                success_fraction: successes as f64 / config.realizations as f64,
                condition_number: kappa,
                kappa_eps: kappa * eps,
                skipped: false,
            }
        })
        .collect();

    Ok(cells)
}

fn cluster_subset(set: &TrajectorySet, rows: &[usize]) -> TrajectorySet {
    let n = set.n_states();
    TrajectorySet {
        times: rows.iter().map(|&i| set.times[i]).collect(),
        states: DMatrix::from_fn(rows.len(), n, |i, j| set.states[(rows[i], j)]),
        derivs: DMatrix::from_fn(rows.len(), n, |i, j| set.derivs[(rows[i], j)]),
        boundaries: vec![0],
        regime_labels: rows.iter().map(|&i| set.regime_labels[i]).collect(),
    }
}

/// Spearman rank correlation between two equal-length samples.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ra = ranks(a);
    let rb = ranks(b);
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for i in 0..a.len() {
        let xa = ra[i] - mean;
        let xb = rb[i] - mean;
        num += xa * xb;
        da += xa * xa;
        db += xb * xb;
    }
    num / (da.sqrt() * db.sqrt())
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}
