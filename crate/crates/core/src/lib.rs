//! Fluorescence readout of qubits whose bright and dark states keep
//! exchanging population during the measurement.
//!
//! The crate covers the whole pipeline:
//!
//! - [`photon`] and [`table`]: the per-sub-bin photon model and its
//!   precomputed observation matrices,
//! - [`sim`]: Monte Carlo measurement records with reproducible per-trial
//!   random streams,
//! - [`classify`]: threshold, double-threshold, single-change and
//!   hidden-Markov time-resolved discrimination, and the π-pulse scheme,
//! - [`estimate`]: decay-curve fitting, lifetime extraction and the
//!   steady-state population model,
//! - [`harness`]: error metrics, threshold optimization and parameter sweeps,
//! - [`io`]: CSV and JSON formats for ensembles, decisions, reports and fits.
//!
//! ```
//! use qubit_readout::{classify, IonState, ObservationTable, RateParams};
//!
//! let table = ObservationTable::with_defaults(RateParams::YB171).unwrap();
//! let counts = [2, 1, 3, 0, 2, 1, 2, 2, 1, 3];
//! let c = classify::generalized_time_resolved_classify(&counts, &table).unwrap();
//! assert_eq!(c.decision.state(), Some(IonState::Bright));
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod error;
pub mod estimate;
pub mod harness;
pub mod io;
pub mod mat2;
pub mod model;
pub mod photon;
pub mod quad;
pub mod sim;
pub mod table;

pub use classify::{Decision, Detector, LikelihoodPair, TransferMatrix};
pub use error::{Error, Result};
pub use model::{IonState, RateParams};
pub use sim::{SimConfig, Trajectory};
pub use table::ObservationTable;
