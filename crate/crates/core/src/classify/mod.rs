//! State discrimination from photon-count sequences.
//!
//! Five methods are provided: single threshold, double threshold (with an
//! abstention band), the single-change time-resolved likelihood ratio, the
//! hidden-Markov time-resolved likelihood ratio built on
//! [`ObservationTable`], and the composition of two detections around a
//! π-pulse. Every single-window method is reachable through [`Detector`],
//! which also supports evaluating all prefixes of a record in one pass.

mod pi_pulse;
mod threshold;
mod time_resolved;

use serde::{Deserialize, Serialize};

pub use pi_pulse::{
    estimate_transfer_matrices, estimate_transfer_matrices_at, pi_pulse_classify, pi_pulse_error,
    pi_pulse_matrix, PiPulseResult, StateOutcome, TransferCounts, TransferMatrix,
};
pub use threshold::{double_threshold_classify, threshold_classify, DoubleThreshold};
pub use time_resolved::{
    generalized_time_resolved_classify, simple_time_resolved_classify, Accumulation,
    GeneralizedTimeResolved, LikelihoodPair, SimpleTimeResolved,
};

use crate::error::Result;
use crate::model::IonState;
use crate::table::ObservationTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Bright,
    Dark,
    Inconclusive,
}

impl Decision {
    pub fn state(self) -> Option<IonState> {
        match self {
            Decision::Bright => Some(IonState::Bright),
            Decision::Dark => Some(IonState::Dark),
            Decision::Inconclusive => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Decision::Bright => "B",
            Decision::Dark => "D",
            Decision::Inconclusive => "I",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s.trim() {
            "B" => Some(Decision::Bright),
            "D" => Some(Decision::Dark),
            "I" => Some(Decision::Inconclusive),
            _ => None,
        }
    }
}

impl From<IonState> for Decision {
    fn from(s: IonState) -> Self {
        match s {
            IonState::Bright => Decision::Bright,
            IonState::Dark => Decision::Dark,
        }
    }
}

/// Outcome when both likelihoods are exactly equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TieRule {
    #[default]
    Dark,
    Bright,
}

impl TieRule {
    #[inline]
    pub(crate) fn decide(self, p_bright: f64, p_dark: f64) -> Decision {
        if p_bright > p_dark {
            Decision::Bright
        } else if p_dark > p_bright {
            Decision::Dark
        } else {
            match self {
                TieRule::Dark => Decision::Dark,
                TieRule::Bright => Decision::Bright,
            }
        }
    }
}

/// Result of classifying one record.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub decision: Decision,
    /// Present for the likelihood-based methods.
    pub likelihoods: Option<LikelihoodPair>,
    /// Counts above the table range that were clamped.
    pub clamped: usize,
    /// The single-change prior `1 - t_b/tau` went negative and was set to 0.
    pub prior_clamped: bool,
}

impl Classification {
    pub(crate) fn plain(decision: Decision) -> Self {
        Classification {
            decision,
            likelihoods: None,
            clamped: 0,
            prior_clamped: false,
        }
    }
}

/// A single-window detection method with its parameters.
#[derive(Debug, Clone)]
pub enum Detector<'a> {
    Threshold { n_c: u64 },
    DoubleThreshold(DoubleThreshold),
    SimpleTimeResolved(SimpleTimeResolved),
    Generalized(GeneralizedTimeResolved<'a>),
}

impl<'a> Detector<'a> {
    pub fn generalized(table: &'a ObservationTable) -> Self {
        Detector::Generalized(GeneralizedTimeResolved::new(table))
    }

    /// Short method name used in reports.
    pub fn name(&self) -> &'static str {
        match self {
            Detector::Threshold { .. } => "threshold",
            Detector::DoubleThreshold(_) => "double_threshold",
            Detector::SimpleTimeResolved(_) => "simple",
            Detector::Generalized(_) => "generalized",
        }
    }

    /// Whether the method can return [`Decision::Inconclusive`].
    pub fn may_abstain(&self) -> bool {
        matches!(self, Detector::DoubleThreshold(_))
    }

    pub fn classify(&self, counts: &[u32]) -> Result<Classification> {
        match self {
            Detector::Threshold { n_c } => {
                Ok(Classification::plain(threshold_classify(counts, *n_c)?))
            }
            Detector::DoubleThreshold(d) => Ok(Classification::plain(d.classify(counts)?)),
            Detector::SimpleTimeResolved(s) => s.classify(counts),
            Detector::Generalized(g) => g.classify(counts),
        }
    }

    /// Decisions for every prefix `counts[..k]`, `k = 1..=counts.len()`,
    /// written into `out` (cleared first).
    pub fn decisions_by_prefix(&self, counts: &[u32], out: &mut Vec<Decision>) {
        out.clear();
        match self {
            Detector::Threshold { n_c } => {
                let mut total = 0u64;
                for &n in counts {
                    total += n as u64;
                    out.push(threshold::threshold_on_total(total, *n_c));
                }
            }
            Detector::DoubleThreshold(d) => {
                let mut total = 0u64;
                for &n in counts {
                    total += n as u64;
                    out.push(d.on_total(total));
                }
            }
            Detector::SimpleTimeResolved(s) => s.decisions_by_prefix(counts, out),
            Detector::Generalized(g) => g.decisions_by_prefix(counts, out),
        }
    }
}
