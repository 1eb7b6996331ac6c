//! Simulators for the two benchmark hybrid systems: a nondimensional
//! spring-mass hopper with a state-dependent guard, and an SIR disease model
//! whose transmission rate switches on a school calendar.
//!
//! Both use a classical fixed-step 4th-order Runge-Kutta integrator and record
//! exact derivatives (the active vector field evaluated at each recorded,
//! noiseless state). Guard crossings in the hopper are located by bisecting
//! the straddling step until the guard residual is below `GUARD_TOL`.

use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::traj::TrajectorySet;

/// Guard-residual tolerance for event localization.
pub const GUARD_TOL: f64 = 1e-10;

/// Regime label for the hopper compression chart (y <= 1).
pub const HOPPER_COMPRESSION: u32 = 0;
/// Regime label for the hopper flight chart (y > 1).
pub const HOPPER_FLIGHT: u32 = 1;
/// Regime label for SIR out-of-session days.
pub const SIR_BREAK: u32 = 0;
/// Regime label for SIR in-session days.
pub const SIR_SESSION: u32 = 1;

// ---------------------------------------------------------------------------
// Seed derivation
// ---------------------------------------------------------------------------

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a sub-seed from a root seed, a domain tag, and an index.
///
/// The splitting rule is a fixed function of its inputs, so trajectories and
/// sweep cells can be generated in any order (or in parallel) with identical
/// results.
pub fn derive_seed(root: u64, domain: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in domain.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(splitmix64(root ^ h).wrapping_add(index))
}

// ---------------------------------------------------------------------------
// RK4 on small fixed-size states
// ---------------------------------------------------------------------------

fn rk4_step<const N: usize>(f: impl Fn(&[f64; N]) -> [f64; N], x: &[f64; N], h: f64) -> [f64; N] {
    let k1 = f(x);
    let mut tmp = *x;
    for i in 0..N {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    let k2 = f(&tmp);
    for i in 0..N {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    let k3 = f(&tmp);
    for i in 0..N {
        tmp[i] = x[i] + h * k3[i];
    }
    let k4 = f(&tmp);
    let mut out = *x;
    for i in 0..N {
        out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

// ---------------------------------------------------------------------------
// Hopper
// ---------------------------------------------------------------------------

/// A guard crossing located during hopper simulation.
#[derive(Debug, Clone, Copy)]
pub struct HopperEvent {
    pub time: f64,
    pub state: [f64; 2],
    /// Chart entered at the event.
    pub new_chart: u32,
}

fn hopper_rhs(kappa: f64, chart: u32) -> impl Fn(&[f64; 2]) -> [f64; 2] {
    move |x| {
        let accel = if chart == HOPPER_COMPRESSION {
            1.0 - kappa * (x[0] - 1.0)
        } else {
            -1.0
        };
        [x[1], accel]
    }
}

fn hopper_chart_of(y: f64) -> u32 {
    if y <= 1.0 {
        HOPPER_COMPRESSION
    } else {
        HOPPER_FLIGHT
    }
}

/// Simulate the nondimensional hopper from one initial condition.
///
/// Flight (`y > 1`) obeys `ÿ = -1`; compression (`y <= 1`) obeys
/// `ÿ = 1 - κ(y - 1)`. Samples are recorded on the fixed grid `k·dt`,
/// `k = 0..floor(t_end/dt)`; guard crossings between samples are bisected to
/// `|y - 1| <= GUARD_TOL` and integration restarts on the new chart.
pub fn simulate_hopper(
    initial_state: [f64; 2],
    kappa: f64,
    dt: f64,
    t_end: f64,
) -> Result<TrajectorySet> {
    simulate_hopper_with_events(initial_state, kappa, dt, t_end).map(|(set, _)| set)
}

/// As [`simulate_hopper`], also returning the located guard crossings.
pub fn simulate_hopper_with_events(
    initial_state: [f64; 2],
    kappa: f64,
    dt: f64,
    t_end: f64,
) -> Result<(TrajectorySet, Vec<HopperEvent>)> {
    if dt <= 0.0 {
        return Err(Error::config("hopper dt must be positive"));
    }
    if t_end <= 0.0 {
        return Err(Error::config("hopper t_end must be positive"));
    }
    if kappa <= 0.0 {
        return Err(Error::config("hopper kappa must be positive"));
    }

    let n_steps = (t_end / dt + 1e-9).floor() as usize;
    let n_samples = n_steps + 1;
    let mut times = Vec::with_capacity(n_samples);
    let mut labels = Vec::with_capacity(n_samples);
    let mut states = DMatrix::zeros(n_samples, 2);
    let mut derivs = DMatrix::zeros(n_samples, 2);
    let mut events = Vec::new();

    let mut x = initial_state;
    let mut chart = hopper_chart_of(x[0]);

    let record = |k: usize,
                  x: &[f64; 2],
                  chart: u32,
                  states: &mut DMatrix<f64>,
                  derivs: &mut DMatrix<f64>| {
        states[(k, 0)] = x[0];
        states[(k, 1)] = x[1];
        let dx = hopper_rhs(kappa, chart)(x);
        derivs[(k, 0)] = dx[0];
        derivs[(k, 1)] = dx[1];
    };

    times.push(0.0);
    labels.push(chart);
    record(0, &x, chart, &mut states, &mut derivs);

    for k in 0..n_steps {
        let t0 = k as f64 * dt;
        let mut remaining = dt;
        let mut events_this_step = 0;
        while remaining > 0.0 {
            let rhs = hopper_rhs(kappa, chart);
            let trial = rk4_step(rhs, &x, remaining);
            if !trial[0].is_finite() || !trial[1].is_finite() {
                return Err(Error::numerical(format!(
                    "hopper state diverged near t = {:.6}",
                    t0 + (dt - remaining)
                )));
            }
            let g0 = x[0] - 1.0;
            let g1 = trial[0] - 1.0;
            // A start point already on the guard (within tolerance) is the
            // event just handled; only a genuine crossing triggers bisection.
            if g0 * g1 < 0.0 && g0.abs() > GUARD_TOL && g1.abs() > GUARD_TOL {
                // Bisect the step length until the guard residual is small.
                let rhs = hopper_rhs(kappa, chart);
                let mut lo = 0.0_f64;
                let mut hi = remaining;
                let mut h = remaining;
                let mut at_event = trial;
                for _ in 0..200 {
                    h = 0.5 * (lo + hi);
                    at_event = rk4_step(&rhs, &x, h);
                    let g = at_event[0] - 1.0;
                    if g.abs() <= GUARD_TOL {
                        break;
                    }
                    if g * g0 > 0.0 {
                        lo = h;
                    } else {
                        hi = h;
                    }
                }
                let new_chart = if at_event[1] <= 0.0 {
                    HOPPER_COMPRESSION
                } else {
                    HOPPER_FLIGHT
                };
                events.push(HopperEvent {
                    time: t0 + (dt - remaining) + h,
                    state: at_event,
                    new_chart,
                });
                x = at_event;
                chart = new_chart;
                remaining -= h;
                events_this_step += 1;
                if events_this_step > 64 {
                    return Err(Error::numerical(format!(
                        "hopper guard chattering near t = {:.6}",
                        t0
                    )));
                }
            } else {
                x = trial;
                remaining = 0.0;
                // Keep the tracked chart consistent with the guard between
                // events (covers a step that lands exactly on the boundary).
                if (x[0] - 1.0).abs() > GUARD_TOL {
                    chart = hopper_chart_of(x[0]);
                }
            }
        }
        times.push((k + 1) as f64 * dt);
        labels.push(chart);
        record(k + 1, &x, chart, &mut states, &mut derivs);
    }

    let set = TrajectorySet::new(times, states, derivs, vec![0], labels)?;
    Ok((set, events))
}

// ---------------------------------------------------------------------------
// SIR with a school calendar
// ---------------------------------------------------------------------------

/// Parameters of the seasonal SIR model.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct SirParams {
    /// Rate at which students enter the population.
    pub entry_rate: f64,
    /// Rate at which students leave the population.
    pub exit_rate: f64,
    /// Total student population N.
    pub population: f64,
    /// Recovery rate.
    pub recovery_rate: f64,
    /// Base transmission rate.
    pub base_transmission: f64,
    /// Seasonal modulation: in session beta = base*(1+b), on break base/(1+b).
    pub modulation: f64,
}

impl Default for SirParams {
    fn default() -> Self {
        SirParams {
            entry_rate: 1.0 / 365.0,
            exit_rate: 1.0 / 365.0,
            population: 1000.0,
            recovery_rate: 0.2,
            base_transmission: 9.336,
            modulation: 0.8,
        }
    }
}

/// One calendar session: `[start_day, end_day)` within a 365-day year.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct SirSession {
    pub start_day: f64,
    pub end_day: f64,
    pub in_session: bool,
}

/// School calendar; repeats annually with period 365 days.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SirCalendar {
    pub sessions: Vec<SirSession>,
}

impl SirCalendar {
    /// The benchmark calendar: winter break, spring term, summer break, fall term.
    pub fn school_year() -> Self {
        SirCalendar {
            sessions: vec![
                SirSession { start_day: 0.0, end_day: 35.0, in_session: false },
                SirSession { start_day: 35.0, end_day: 155.0, in_session: true },
                SirSession { start_day: 155.0, end_day: 225.0, in_session: false },
                SirSession { start_day: 225.0, end_day: 365.0, in_session: true },
            ],
        }
    }

    /// Check the sessions partition `[0, 365)` with no gaps or overlaps.
    pub fn validate(&self) -> Result<()> {
        if self.sessions.is_empty() {
            return Err(Error::config("calendar has no sessions"));
        }
        let mut cursor = 0.0;
        for s in &self.sessions {
            if (s.start_day - cursor).abs() > 1e-12 {
                return Err(Error::config(format!(
                    "calendar gap/overlap at day {}: session starts at {}",
                    cursor, s.start_day
                )));
            }
            if s.end_day <= s.start_day {
                return Err(Error::config("calendar session must have end > start"));
            }
            cursor = s.end_day;
        }
        if (cursor - 365.0).abs() > 1e-12 {
            return Err(Error::config(format!(
                "calendar must cover [0, 365); last session ends at {}",
                cursor
            )));
        }
        Ok(())
    }

    /// Whether day `t` (any nonnegative time) falls in a school session.
    pub fn in_session(&self, t: f64) -> bool {
        let day = t.rem_euclid(365.0);
        for s in &self.sessions {
            if day >= s.start_day && day < s.end_day {
                return s.in_session;
            }
        }
        // day == 365.0 cannot occur with rem_euclid; defensively map to start.
        self.sessions[0].in_session
    }

    /// Session start days within one year, in ascending order.
    pub fn session_starts(&self) -> Vec<f64> {
        self.sessions.iter().map(|s| s.start_day).collect()
    }
}

/// Transmission rate at time `t` (days).
pub fn beta_of_t(t: f64, base_transmission: f64, modulation: f64, calendar: &SirCalendar) -> f64 {
    if calendar.in_session(t) {
        base_transmission * (1.0 + modulation)
    } else {
        base_transmission / (1.0 + modulation)
    }
}

fn sir_rhs(p: &SirParams, beta: f64) -> impl Fn(&[f64; 3]) -> [f64; 3] + '_ {
    move |x| {
        let (s, i, r) = (x[0], x[1], x[2]);
        [
            p.entry_rate * p.population - beta / p.population * i * s - p.exit_rate * s,
            beta / p.population * i * s - (p.recovery_rate + p.exit_rate) * i,
            p.recovery_rate * i - p.exit_rate * r,
        ]
    }
}

/// Number of RK4 substeps per recorded day.
const SIR_SUBSTEPS: usize = 10;

/// Simulate the seasonal SIR model with daily recording.
///
/// Produces `365 * years` samples at t = 0, 1, ..., 365*years - 1. At every
/// session start except t = 0, S, I, and R are independently perturbed by a
/// uniform draw from {-2, -1, 0, 1, 2}; pass `perturbation_seed = None` to
/// disable the perturbations. Negative populations after a perturbation are
/// clamped to zero (and reported on stderr).
pub fn simulate_sir(
    initial_state: [f64; 3],
    params: &SirParams,
    calendar: &SirCalendar,
    years: u32,
    perturbation_seed: Option<u64>,
) -> Result<TrajectorySet> {
    calendar.validate()?;
    if years < 1 {
        return Err(Error::config("years must be >= 1"));
    }
    let total = initial_state.iter().sum::<f64>();
    if (total - params.population).abs() > 1e-6 {
        return Err(Error::config(format!(
            "initial S+I+R = {} must equal the population {}",
            total, params.population
        )));
    }

    let n_samples = 365 * years as usize;
    let mut times = Vec::with_capacity(n_samples);
    let mut labels = Vec::with_capacity(n_samples);
    let mut states = DMatrix::zeros(n_samples, 3);
    let mut derivs = DMatrix::zeros(n_samples, 3);

    let starts = calendar.session_starts();
    let is_session_start = |day: usize| -> bool {
        let d = (day % 365) as f64;
        starts.iter().any(|&s| (s - d).abs() < 1e-12)
    };

    let mut rng = perturbation_seed.map(ChaCha8Rng::seed_from_u64);
    let mut x = initial_state;

    for day in 0..n_samples {
        let t = day as f64;
        if day > 0 {
            // Integrate the previous day with that day's constant beta;
            // session boundaries fall on integer days so no substep straddles
            // a transmission switch.
            let beta = beta_of_t(t - 1.0, params.base_transmission, params.modulation, calendar);
            let rhs = sir_rhs(params, beta);
            let h = 1.0 / SIR_SUBSTEPS as f64;
            for _ in 0..SIR_SUBSTEPS {
                x = rk4_step(&rhs, &x, h);
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::numerical(format!("SIR state diverged near day {}", day)));
            }
            if is_session_start(day) {
                if let Some(rng) = rng.as_mut() {
                    for v in x.iter_mut() {
                        *v += rng.random_range(-2..=2) as f64;
                        if *v < 0.0 {
                            eprintln!(
                                "simulate_sir: clamped negative population {} to 0 at day {}",
                                *v, day
                            );
                            *v = 0.0;
                        }
                    }
                }
            }
        }
        let beta = beta_of_t(t, params.base_transmission, params.modulation, calendar);
        let dx = sir_rhs(params, beta)(&x);
        times.push(t);
        labels.push(if calendar.in_session(t) { SIR_SESSION } else { SIR_BREAK });
        for j in 0..3 {
            states[(day, j)] = x[j];
            derivs[(day, j)] = dx[j];
        }
    }

    TrajectorySet::new(times, states, derivs, vec![0], labels)
}

/// Exact SIR vector field at a state, using the transmission rate for time `t`.
///
/// Exposed so tests can assert the recorded derivatives follow the same
/// arithmetic path as the simulator.
pub fn sir_derivative(
    state: [f64; 3],
    t: f64,
    params: &SirParams,
    calendar: &SirCalendar,
) -> [f64; 3] {
    let beta = beta_of_t(t, params.base_transmission, params.modulation, calendar);
    sir_rhs(params, beta)(&state)
}

// ---------------------------------------------------------------------------
// Measurement noise
// ---------------------------------------------------------------------------

/// Add i.i.d. zero-mean Gaussian noise to the states of a trajectory set.
///
/// Derivatives are left untouched (they are treated as exactly known).
/// Per-trajectory sub-seeds are derived from `seed` so the output does not
/// depend on generation order.
pub fn add_noise(set: &TrajectorySet, noise_std: f64, seed: u64) -> TrajectorySet {
    if noise_std == 0.0 {
        return set.clone();
    }
    let mut out = set.clone();
    let n = set.n_states();
    for traj in 0..set.n_trajectories() {
        let (start, end) = set.trajectory_range(set.boundaries[traj]);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "noise", traj as u64));
        for i in start..end {
            for j in 0..n {
                let z: f64 = StandardNormal.sample(&mut rng);
                out.states[(i, j)] += noise_std * z;
            }
        }
    }
    out
}
