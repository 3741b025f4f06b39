//! Precomputed per-count observation matrices.
//!
//! For a photon count `n` in one sub-bin, the matrix
//!
//! ```text
//! O(n) = [ W_BB·P_B(n)   X_DB(n)     ]
//!        [ X_BD(n)       W_DD·P_D(n) ]
//! ```
//!
//! has columns indexed by the state before the sub-bin and rows by the state
//! after it. Each column, summed over rows and all `n`, is a probability
//! distribution.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{IonState, RateParams};
use crate::photon::{self, Transition, MIXTURE_QUAD_TOL};

pub use crate::mat2::Mat2;

/// Default per-column truncation tolerance.
pub const DEFAULT_TRUNCATION_TOL: f64 = 1e-9;

const TABLE_FORMAT: &str = "qubit-readout/observation-table";
const TABLE_VERSION: u32 = 1;
const N_MAX_LIMIT: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTable {
    params: RateParams,
    tolerance: f64,
    entries: Vec<Mat2>,
    log_entries: Vec<Mat2>,
    truncation_mass: [f64; 2],
}

fn observation_matrix(params: &RateParams, n: u32) -> Result<Mat2> {
    let w_bb = 1.0 - photon::change_prob(IonState::Bright, params);
    let w_dd = 1.0 - photon::change_prob(IonState::Dark, params);
    Ok([
        [
            w_bb * photon::count_pmf(IonState::Bright, n, params),
            photon::mixed_pmf(Transition::DarkToBright, n, params)?,
        ],
        [
            photon::mixed_pmf(Transition::BrightToDark, n, params)?,
            w_dd * photon::count_pmf(IonState::Dark, n, params),
        ],
    ])
}

fn column_deficit(entries: &[Mat2]) -> [f64; 2] {
    let mut out = [0.0; 2];
    for (c, slot) in out.iter_mut().enumerate() {
        let s: f64 = entries.iter().map(|m| m[0][c] + m[1][c]).sum();
        *slot = (1.0 - s).max(0.0);
    }
    out
}

fn logs(m: &Mat2) -> Mat2 {
    [[m[0][0].ln(), m[0][1].ln()], [m[1][0].ln(), m[1][1].ln()]]
}

impl ObservationTable {
    /// Tabulates `O(n)` for `0 <= n <= n_max`. Fails when the probability
    /// mass beyond `n_max` exceeds `tol` in either column.
    pub fn build(params: RateParams, n_max: usize, tol: f64) -> Result<Self> {
        params.validate()?;
        if params.rate_bright_per_ms <= 0.0 {
            return Err(Error::DegenerateModel);
        }
        if n_max < 1 {
            return Err(crate::error::invalid("n_max", "must be >= 1"));
        }
        if !(tol > 0.0) {
            return Err(crate::error::invalid("tol", "must be > 0"));
        }
        let entries = (0..=n_max)
            .map(|n| observation_matrix(&params, n as u32))
            .collect::<Result<Vec<_>>>()?;
        let truncation_mass = column_deficit(&entries);
        let worst = truncation_mass[0].max(truncation_mass[1]);
        if worst > tol {
            return Err(Error::TableTooSmall {
                mass: worst,
                tol,
                required: required_n_max(&params, tol)?,
            });
        }
        Ok(Self::from_entries(params, tol, entries))
    }

    /// Builds the smallest table whose truncation mass is below `tol`.
    pub fn auto(params: RateParams, tol: f64) -> Result<Self> {
        params.validate()?;
        if params.rate_bright_per_ms <= 0.0 {
            return Err(Error::DegenerateModel);
        }
        let n_max = required_n_max(&params, tol)?;
        Self::build(params, n_max, tol)
    }

    pub fn with_defaults(params: RateParams) -> Result<Self> {
        Self::auto(params, DEFAULT_TRUNCATION_TOL)
    }

    fn from_entries(params: RateParams, tolerance: f64, entries: Vec<Mat2>) -> Self {
        let truncation_mass = column_deficit(&entries);
        let log_entries = entries.iter().map(logs).collect();
        ObservationTable {
            params,
            tolerance,
            entries,
            log_entries,
            truncation_mass,
        }
    }

    pub fn params(&self) -> &RateParams {
        &self.params
    }

    pub fn n_max(&self) -> usize {
        self.entries.len() - 1
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn truncation_mass(&self) -> [f64; 2] {
        self.truncation_mass
    }

    /// Matrix for count `n`, clamping counts above `n_max`. The flag is set
    /// when clamping happened.
    #[inline]
    pub fn get(&self, n: u32) -> (&Mat2, bool) {
        let i = n as usize;
        if i < self.entries.len() {
            (&self.entries[i], false)
        } else {
            (&self.entries[self.entries.len() - 1], true)
        }
    }

    #[inline]
    pub fn get_log(&self, n: u32) -> &Mat2 {
        let i = (n as usize).min(self.log_entries.len() - 1);
        &self.log_entries[i]
    }

    pub fn entries(&self) -> &[Mat2] {
        &self.entries
    }

    pub fn to_document(&self) -> TableDocument {
        TableDocument {
            format: TABLE_FORMAT.to_string(),
            version: TABLE_VERSION,
            params: self.params,
            n_max: self.n_max(),
            truncation_tolerance: self.tolerance,
            quadrature_tolerance: MIXTURE_QUAD_TOL,
            truncation_mass: self.truncation_mass,
            entries: self
                .entries
                .iter()
                .map(|m| [m[0][0], m[0][1], m[1][0], m[1][1]])
                .collect(),
        }
    }

    pub fn from_document(doc: TableDocument) -> Result<Self> {
        if doc.format != TABLE_FORMAT {
            return Err(Error::Config(format!(
                "unexpected table format `{}`",
                doc.format
            )));
        }
        if doc.version != TABLE_VERSION {
            return Err(Error::Version {
                found: doc.version,
                expected: TABLE_VERSION,
            });
        }
        doc.params.validate()?;
        if doc.entries.len() != doc.n_max + 1 {
            return Err(Error::Config(format!(
                "table has {} entries but n_max = {}",
                doc.entries.len(),
                doc.n_max
            )));
        }
        let entries: Vec<Mat2> = doc
            .entries
            .iter()
            .map(|e| [[e[0], e[1]], [e[2], e[3]]])
            .collect();
        if entries
            .iter()
            .flatten()
            .flatten()
            .any(|v| !(0.0..=1.0).contains(v))
        {
            return Err(Error::Config("table entry outside [0, 1]".into()));
        }
        Ok(Self::from_entries(
            doc.params,
            doc.truncation_tolerance,
            entries,
        ))
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_document())?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_document(serde_json::from_str(&text)?)
    }
}

/// Smallest `n_max` whose per-column truncation mass is below `tol`.
pub fn required_n_max(params: &RateParams, tol: f64) -> Result<usize> {
    let mut sums = [0.0f64; 2];
    for n in 0..=N_MAX_LIMIT {
        let m = observation_matrix(params, n as u32)?;
        sums[0] += m[0][0] + m[1][0];
        sums[1] += m[0][1] + m[1][1];
        if n >= 1 && 1.0 - sums[0] <= tol && 1.0 - sums[1] <= tol {
            return Ok(n);
        }
    }
    Err(Error::TableTooSmall {
        mass: (1.0 - sums[0]).max(1.0 - sums[1]),
        tol,
        required: N_MAX_LIMIT,
    })
}

/// Versioned JSON form of an [`ObservationTable`]. Entries are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableDocument {
    pub format: String,
    pub version: u32,
    pub params: RateParams,
    pub n_max: usize,
    pub truncation_tolerance: f64,
    pub quadrature_tolerance: f64,
    pub truncation_mass: [f64; 2],
    pub entries: Vec<[f64; 4]>,
}
