//! Identification of regime-switching nonlinear dynamical systems from
//! time-series data.
//!
//! The method clusters samples in measurement-based coordinates, fits a
//! sparse dynamical model to every cluster by sequentially thresholded least
//! squares over a grid of thresholds, scores each candidate on held-out
//! validation segments with the finite-sample-corrected Akaike information
//! criterion, and aggregates the supported models across clusters into a
//! frequency-ranked catalog. Regions of measurement space that keep electing
//! the same model reveal the regimes of the underlying hybrid system; anchors
//! where no known model wins mark the transitions.
//!
//! The crate ships simulators for two benchmark systems (a spring-mass hopper
//! with a state guard and an SIR disease model with a school-calendar
//! transmission rate), the full identification pipeline, and noise-robustness
//! diagnostics. See the `hybrid-sindy` binary for the command-line front end.

pub mod catalog;
pub mod cluster;
pub mod config;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod features;
pub mod pipeline;
pub mod report;
pub mod selection;
pub mod stlsq;
pub mod traj;

pub use error::{Error, Result};
pub use traj::TrajectorySet;
