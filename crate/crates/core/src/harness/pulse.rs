//! Detection, π-pulse, detection: transfer-matrix prediction and direct
//! two-window simulation.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{detector_params, ErrorReport, Tally};
use super::sweep::{bins_for, MethodSpec, PairedEnsembles};
use crate::classify::{
    pi_pulse_classify, pi_pulse_error, Decision, Detector, PiPulseResult, TransferCounts,
    TransferMatrix,
};
use crate::error::{invalid, Error, Result};
use crate::model::{IonState, RateParams};
use crate::sim::{simulate_with, trial_rng, StreamDomain};
use crate::table::ObservationTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiPulsePoint {
    /// Length of each detection window.
    pub t_b_ms: f64,
    pub m_bright: TransferMatrix,
    pub m_dark: TransferMatrix,
    pub predicted: PiPulseResult,
}

/// Transfer matrices for every window length in `bins` from one ensemble
/// pair, and the predicted π-pulse error for each.
pub fn pi_pulse_predictions(
    ensembles: &PairedEnsembles,
    detector: &Detector<'_>,
    bins: &[usize],
    eps_pi: f64,
) -> Result<Vec<PiPulsePoint>> {
    if detector.may_abstain() {
        return Err(invalid(
            "detector",
            "transfer matrices need a non-abstaining detector",
        ));
    }
    if ensembles.bright.is_empty() || ensembles.dark.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let len = ensembles.bins();
    if bins.iter().any(|&b| b == 0 || b > len) {
        return Err(Error::Config(format!(
            "requested prefix outside 1..={len} sub-bins"
        )));
    }
    let empty = || vec![TransferCounts::default(); bins.len()];
    let tallies = ensembles
        .bright
        .par_iter()
        .chain(ensembles.dark.par_iter())
        .fold(
            || (empty(), Vec::with_capacity(len)),
            |(mut acc, mut scratch), traj| {
                detector.decisions_by_prefix(&traj.counts, &mut scratch);
                for (slot, &b) in acc.iter_mut().zip(bins) {
                    let outcome = scratch[b - 1].state().expect("non-abstaining");
                    slot.record(traj.initial, outcome, traj.state_after_bins(b));
                }
                (acc, scratch)
            },
        )
        .map(|(acc, _)| acc)
        .reduce(empty, |mut a, b| {
            for (x, y) in a.iter_mut().zip(&b) {
                x.merge(y);
            }
            a
        });
    let t_sub = ensembles.params.t_sub_ms;
    bins.iter()
        .zip(tallies)
        .map(|(&b, counts)| {
            let (m_bright, m_dark) = counts.matrices()?;
            Ok(PiPulsePoint {
                t_b_ms: b as f64 * t_sub,
                predicted: pi_pulse_error(&m_bright, &m_dark, eps_pi)?,
                m_bright,
                m_dark,
            })
        })
        .collect()
}

/// Simulates two detection windows of `bins` sub-bins each around an
/// imperfect pulse that inverts the state with probability `1 - eps_pi`.
/// The tally counts inconclusive pairs as ignored.
pub fn simulate_pi_pulse(
    params: &RateParams,
    detector: &Detector<'_>,
    bins: usize,
    n_trials: usize,
    eps_pi: f64,
    seed: u64,
) -> Result<ErrorReport> {
    params.validate()?;
    if !(0.0..=1.0).contains(&eps_pi) {
        return Err(invalid("epsilon_pi", "must lie in [0, 1]"));
    }
    if bins == 0 || n_trials == 0 {
        return Err(invalid("bins", "need at least one sub-bin and one trial"));
    }
    let window = bins as f64 * params.t_sub_ms;
    let tag = u32::try_from(bins).map_err(|_| invalid("bins", "too many sub-bins"))?;
    let mut tally = Tally::default();
    for initial in IonState::ALL {
        let part = (0..n_trials as u64)
            .into_par_iter()
            .map(|trial| {
                let mut rng = trial_rng(seed, StreamDomain::PulsedPair(initial, tag), trial);
                let first = simulate_with(initial, window, bins, params, &mut rng);
                let mut state = first.final_state();
                if rng.random::<f64>() >= eps_pi {
                    state = state.flipped();
                }
                let second = simulate_with(state, window, bins, params, &mut rng);
                let d1 = detector.classify(&first.counts)?.decision;
                let d2 = detector.classify(&second.counts)?.decision;
                Ok(pi_pulse_classify(d1, d2))
            })
            .try_fold(Tally::default, |mut t, d: Result<Decision>| {
                t.record(initial, d?);
                Ok::<_, Error>(t)
            })
            .try_reduce(Tally::default, |a, b| Ok(a.merge(&b)))?;
        tally = tally.merge(&part);
    }
    Ok(ErrorReport::from_tally(
        "pi_pulse",
        format!("{};eps_pi={eps_pi}", detector_params(detector)),
        window,
        tally,
    ))
}

/// Window-length sweep of the π-pulse scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiPulseSpec {
    pub params: RateParams,
    pub t_b_ms: Vec<f64>,
    pub n_trials: usize,
    pub seed: u64,
    pub method: MethodSpec,
    pub epsilon_pi: f64,
    /// Window lengths at which the two-window simulation is also run.
    #[serde(default)]
    pub cross_check_ms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiPulseRow {
    pub point: PiPulsePoint,
    pub simulated: Option<ErrorReport>,
}

/// Predicted error at every `t_b`, plus direct simulation at the
/// cross-check lengths.
pub fn pi_pulse_sweep(spec: &PiPulseSpec) -> Result<Vec<PiPulseRow>> {
    spec.params.validate()?;
    if spec.n_trials == 0 {
        return Err(invalid("n_trials", "must be >= 1"));
    }
    let bins = bins_for(&spec.t_b_ms, spec.params.t_sub_ms)?;
    let checks = if spec.cross_check_ms.is_empty() {
        Vec::new()
    } else {
        bins_for(&spec.cross_check_ms, spec.params.t_sub_ms)?
    };
    let table = ObservationTable::with_defaults(spec.params)?;
    let detector = spec.method.detector(&spec.params, &table)?;
    let max_bins = *bins.last().expect("non-empty");
    let ens = PairedEnsembles::simulate(
        spec.params,
        max_bins as f64 * spec.params.t_sub_ms,
        spec.n_trials,
        spec.seed,
    )?;
    let points = pi_pulse_predictions(&ens, &detector, &bins, spec.epsilon_pi)?;
    let mut rows = Vec::with_capacity(points.len());
    for (point, &b) in points.into_iter().zip(&bins) {
        let simulated = if checks.contains(&b) {
            Some(simulate_pi_pulse(
                &spec.params,
                &detector,
                b,
                spec.n_trials,
                spec.epsilon_pi,
                spec.seed,
            )?)
        } else {
            None
        };
        rows.push(PiPulseRow { point, simulated });
    }
    if rows.iter().all(|r| r.point.predicted.epsilon_rel.is_none()) {
        return Err(invalid(
            "pi_pulse",
            "no retained trials at any window length",
        ));
    }
    Ok(rows)
}
