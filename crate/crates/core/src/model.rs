//! Two-state fluorescence model parameters.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Hidden qubit state during a measurement.
///
/// `Bright` is index 0 and `Dark` is index 1 in every vector and matrix of
/// this crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IonState {
    Bright,
    Dark,
}

impl IonState {
    pub const ALL: [IonState; 2] = [IonState::Bright, IonState::Dark];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            IonState::Bright => 0,
            IonState::Dark => 1,
        }
    }

    #[inline]
    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            IonState::Bright
        } else {
            IonState::Dark
        }
    }

    #[inline]
    pub fn flipped(self) -> Self {
        match self {
            IonState::Bright => IonState::Dark,
            IonState::Dark => IonState::Bright,
        }
    }

    /// Single-letter label used in CSV files.
    pub fn label(self) -> &'static str {
        match self {
            IonState::Bright => "B",
            IonState::Dark => "D",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s.trim() {
            "B" | "b" => Some(IonState::Bright),
            "D" | "d" => Some(IonState::Dark),
            _ => None,
        }
    }
}

/// Photon rates, lifetimes and sub-bin duration. Rates are per ms, times in ms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    /// Fluorescence rate of the bright state on top of the background.
    pub rate_bright_per_ms: f64,
    /// Background rate seen by a dark ion.
    pub rate_dark_per_ms: f64,
    pub tau_bright_ms: f64,
    pub tau_dark_ms: f64,
    pub t_sub_ms: f64,
}

impl RateParams {
    /// Simulation parameter set for a 171Yb+ hyperfine qubit.
    pub const YB171: RateParams = RateParams {
        rate_bright_per_ms: 16.0,
        rate_dark_per_ms: 0.3,
        tau_bright_ms: 4.9,
        tau_dark_ms: 56.0,
        t_sub_ms: 0.1,
    };

    /// Lifetimes extracted from the measured decay curves of the same setup.
    pub const YB171_FITTED: RateParams = RateParams {
        rate_bright_per_ms: 16.0,
        rate_dark_per_ms: 0.3,
        tau_bright_ms: 4.92,
        tau_dark_ms: 53.1,
        t_sub_ms: 0.1,
    };

    pub fn new(
        rate_bright_per_ms: f64,
        rate_dark_per_ms: f64,
        tau_bright_ms: f64,
        tau_dark_ms: f64,
        t_sub_ms: f64,
    ) -> Result<Self> {
        let p = RateParams {
            rate_bright_per_ms,
            rate_dark_per_ms,
            tau_bright_ms,
            tau_dark_ms,
            t_sub_ms,
        };
        p.validate()?;
        Ok(p)
    }

    /// Checks the parameter domain. Infinite lifetimes are allowed and mean
    /// the corresponding state never changes.
    pub fn validate(&self) -> Result<()> {
        if !(self.rate_bright_per_ms.is_finite() && self.rate_bright_per_ms >= 0.0) {
            return Err(invalid("rate_bright_per_ms", "must be finite and >= 0"));
        }
        if !(self.rate_dark_per_ms.is_finite() && self.rate_dark_per_ms >= 0.0) {
            return Err(invalid("rate_dark_per_ms", "must be finite and >= 0"));
        }
        if !(self.tau_bright_ms > 0.0) {
            return Err(invalid("tau_bright_ms", "must be > 0"));
        }
        if !(self.tau_dark_ms > 0.0) {
            return Err(invalid("tau_dark_ms", "must be > 0"));
        }
        if !(self.t_sub_ms.is_finite() && self.t_sub_ms > 0.0) {
            return Err(invalid("t_sub_ms", "must be finite and > 0"));
        }
        Ok(())
    }

    /// True when a sub-bin is long enough that the one-change-per-bin
    /// approximation of the observation model degrades noticeably.
    pub fn coarse_sub_bin_warning(&self) -> bool {
        self.t_sub_ms > self.tau_bright_ms / 10.0 || self.t_sub_ms > self.tau_dark_ms / 10.0
    }

    pub fn tau(&self, state: IonState) -> f64 {
        match state {
            IonState::Bright => self.tau_bright_ms,
            IonState::Dark => self.tau_dark_ms,
        }
    }

    /// Total detected photon rate of an ion in `state`.
    pub fn photon_rate(&self, state: IonState) -> f64 {
        match state {
            IonState::Bright => self.rate_bright_per_ms + self.rate_dark_per_ms,
            IonState::Dark => self.rate_dark_per_ms,
        }
    }

    /// Poisson mean of one sub-bin without a state change.
    pub fn sub_bin_mean(&self, state: IonState) -> f64 {
        self.photon_rate(state) * self.t_sub_ms
    }

    /// Collection-efficiency scaling: both photon rates grow linearly,
    /// lifetimes are unchanged.
    pub fn with_efficiency(&self, factor: f64) -> Self {
        RateParams {
            rate_bright_per_ms: self.rate_bright_per_ms * factor,
            rate_dark_per_ms: self.rate_dark_per_ms * factor,
            ..*self
        }
    }

    pub fn with_t_sub(&self, t_sub_ms: f64) -> Self {
        RateParams { t_sub_ms, ..*self }
    }

    /// Number of whole sub-bins in `t_b_ms`, or an error when `t_b_ms` is
    /// not an integer multiple of the sub-bin duration.
    pub fn bins_in(&self, t_b_ms: f64) -> Result<usize> {
        bins_in(t_b_ms, self.t_sub_ms)
    }
}

pub(crate) fn bins_in(t_b_ms: f64, t_sub_ms: f64) -> Result<usize> {
    let ratio = t_b_ms / t_sub_ms;
    let m = ratio.round();
    if !(t_b_ms > 0.0) || !ratio.is_finite() || m < 1.0 || (ratio - m).abs() > 1e-6 * m.max(1.0) {
        return Err(crate::Error::NonIntegralBins {
            t_b: t_b_ms,
            t_sub: t_sub_ms,
        });
    }
    Ok(m as usize)
}
