//! Detection, π-pulse, detection.
//!
//! A single detection is summarised by two transfer matrices: `M_B` holds
//! the probability of the outcome "bright" jointly with the post-measurement
//! state (rows) for each pre-measurement state (columns), `M_D` the same for
//! "dark". Chaining them with the pulse matrix gives the probabilities of
//! the four outcome pairs without enumerating state-change histories.

use serde::{Deserialize, Serialize};

use super::{Decision, Detector};
use crate::error::{invalid, Error, Result};
use crate::mat2::{self, Mat2, Vec2};
use crate::model::IonState;
use crate::sim::Trajectory;

/// Keep opposite outcomes and report the first one; equal outcomes are
/// inconclusive.
pub fn pi_pulse_classify(first: Decision, second: Decision) -> Decision {
    match (first, second) {
        (Decision::Bright, Decision::Dark) => Decision::Bright,
        (Decision::Dark, Decision::Bright) => Decision::Dark,
        _ => Decision::Inconclusive,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix(pub Mat2);

impl TransferMatrix {
    pub fn new(m: Mat2) -> Result<Self> {
        if m.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("transfer matrix", "entries must lie in [0, 1]"));
        }
        Ok(TransferMatrix(m))
    }

    /// Matrix of a detector that never errs and an ion that never changes.
    pub fn ideal(outcome: IonState) -> Self {
        match outcome {
            IonState::Bright => TransferMatrix([[1.0, 0.0], [0.0, 0.0]]),
            IonState::Dark => TransferMatrix([[0.0, 0.0], [0.0, 1.0]]),
        }
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.0
    }
}

/// Pulse matrix: the population is inverted with probability `1 - eps`.
pub fn pi_pulse_matrix(eps: f64) -> Mat2 {
    [[eps, 1.0 - eps], [1.0 - eps, eps]]
}

/// Tally of (initial state, detection outcome, final state) over two
/// ensembles.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransferCounts {
    /// `[outcome][final][initial]`
    counts: [[[u64; 2]; 2]; 2],
    totals: [u64; 2],
}

impl TransferCounts {
    pub fn record(&mut self, initial: IonState, outcome: IonState, final_state: IonState) {
        self.counts[outcome.index()][final_state.index()][initial.index()] += 1;
        self.totals[initial.index()] += 1;
    }

    pub fn merge(&mut self, other: &TransferCounts) {
        for o in 0..2 {
            for f in 0..2 {
                for i in 0..2 {
                    self.counts[o][f][i] += other.counts[o][f][i];
                }
            }
        }
        self.totals[0] += other.totals[0];
        self.totals[1] += other.totals[1];
    }

    pub fn totals(&self) -> [u64; 2] {
        self.totals
    }

    /// `(M_B, M_D)`. Both ensembles must be non-empty.
    pub fn matrices(&self) -> Result<(TransferMatrix, TransferMatrix)> {
        if self.totals.contains(&0) {
            return Err(Error::EmptyEnsemble);
        }
        let m = |o: usize| {
            let mut out = [[0.0; 2]; 2];
            for (f, row) in out.iter_mut().enumerate() {
                for (i, slot) in row.iter_mut().enumerate() {
                    *slot = self.counts[o][f][i] as f64 / self.totals[i] as f64;
                }
            }
            TransferMatrix(out)
        };
        Ok((m(0), m(1)))
    }
}

/// Empirical `M_B`, `M_D` for `detector` applied to the first `bins`
/// sub-bins of each record, using the simulated state after those bins.
pub fn estimate_transfer_matrices_at(
    ensemble_bright: &[Trajectory],
    ensemble_dark: &[Trajectory],
    detector: &Detector<'_>,
    bins: usize,
) -> Result<(TransferMatrix, TransferMatrix)> {
    if ensemble_bright.is_empty() || ensemble_dark.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let mut tally = TransferCounts::default();
    for traj in ensemble_bright.iter().chain(ensemble_dark) {
        let len = bins.min(traj.len());
        let outcome = detector.classify(&traj.counts[..len])?.decision;
        let outcome = outcome.state().ok_or_else(|| {
            invalid(
                "detector",
                "transfer matrices need a non-abstaining detector",
            )
        })?;
        tally.record(traj.initial, outcome, traj.state_after_bins(len));
    }
    tally.matrices()
}

/// Empirical `M_B`, `M_D` over the full records.
pub fn estimate_transfer_matrices(
    ensemble_bright: &[Trajectory],
    ensemble_dark: &[Trajectory],
    detector: &Detector<'_>,
) -> Result<(TransferMatrix, TransferMatrix)> {
    estimate_transfer_matrices_at(ensemble_bright, ensemble_dark, detector, usize::MAX)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateOutcome {
    /// Probability of a wrong kept result, split by final state.
    pub wrong: Vec2,
    /// Probability of a correct kept result, split by final state.
    pub right: Vec2,
    /// Probability the pair is discarded.
    pub ignored: f64,
    /// `wrong / (wrong + right)`; `None` when nothing is kept.
    pub epsilon_rel: Option<f64>,
}

impl StateOutcome {
    pub fn retained(&self) -> f64 {
        self.wrong[0] + self.wrong[1] + self.right[0] + self.right[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiPulseResult {
    pub bright: StateOutcome,
    pub dark: StateOutcome,
    /// Mean of the two relative errors; `None` if either is undefined.
    pub epsilon_rel: Option<f64>,
    /// Mean retained fraction.
    pub n_r: f64,
}

/// Relative error and retained fraction of the π-pulse scheme from the
/// single-detection transfer matrices and the pulse error `eps_pi`.
pub fn pi_pulse_error(
    m_bright: &TransferMatrix,
    m_dark: &TransferMatrix,
    eps_pi: f64,
) -> Result<PiPulseResult> {
    if !(0.0..=1.0).contains(&eps_pi) {
        return Err(invalid("epsilon_pi", "must lie in [0, 1]"));
    }
    let pulse = pi_pulse_matrix(eps_pi);
    let chain = |second: &TransferMatrix, first: &TransferMatrix, v: &Vec2| {
        mat2::apply(&second.0, &mat2::apply(&pulse, &mat2::apply(&first.0, v)))
    };
    let outcome = |state: IonState| {
        let v = mat2::basis(state);
        // first detection names the initial state
        let (correct_first, wrong_first) = match state {
            IonState::Bright => (m_bright, m_dark),
            IonState::Dark => (m_dark, m_bright),
        };
        let right = chain(wrong_first, correct_first, &v);
        let wrong = chain(correct_first, wrong_first, &v);
        let same_b = chain(m_bright, m_bright, &v);
        let same_d = chain(m_dark, m_dark, &v);
        let kept = right[0] + right[1] + wrong[0] + wrong[1];
        StateOutcome {
            wrong,
            right,
            ignored: same_b[0] + same_b[1] + same_d[0] + same_d[1],
            epsilon_rel: (kept > 0.0).then(|| (wrong[0] + wrong[1]) / kept),
        }
    };
    let bright = outcome(IonState::Bright);
    let dark = outcome(IonState::Dark);
    let epsilon_rel = match (bright.epsilon_rel, dark.epsilon_rel) {
        (Some(b), Some(d)) => Some(0.5 * (b + d)),
        _ => None,
    };
    Ok(PiPulseResult {
        bright,
        dark,
        epsilon_rel,
        n_r: 0.5 * (bright.retained() + dark.retained()),
    })
}
