use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{Decision, Detector};
use crate::error::{Error, Result};
use crate::model::IonState;
use crate::sim::Trajectory;

/// Wrong / correct / inconclusive counts per prepared state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub correct: [u64; 2],
    pub wrong: [u64; 2],
    pub ignored: [u64; 2],
}

impl Tally {
    #[inline]
    pub fn record(&mut self, initial: IonState, decision: Decision) {
        let i = initial.index();
        match decision.state() {
            None => self.ignored[i] += 1,
            Some(s) if s == initial => self.correct[i] += 1,
            Some(_) => self.wrong[i] += 1,
        }
    }

    pub fn total(&self, initial: IonState) -> u64 {
        let i = initial.index();
        self.correct[i] + self.wrong[i] + self.ignored[i]
    }

    pub fn retained(&self, initial: IonState) -> u64 {
        let i = initial.index();
        self.correct[i] + self.wrong[i]
    }

    pub fn merge(mut self, other: &Tally) -> Tally {
        for i in 0..2 {
            self.correct[i] += other.correct[i];
            self.wrong[i] += other.wrong[i];
            self.ignored[i] += other.ignored[i];
        }
        self
    }
}

/// Error rates of one method at one operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub method: String,
    /// Method parameters in `key=value` form, e.g. `n_c=7`.
    pub params: String,
    pub t_b_ms: f64,
    pub tally: Tally,
    /// Wrong over retained, bright-prepared ions.
    pub epsilon_bright: Option<f64>,
    pub epsilon_dark: Option<f64>,
    /// Mean of the two; `None` if either ensemble kept nothing.
    pub epsilon: Option<f64>,
    /// Binomial standard error of `epsilon`.
    pub std_error: Option<f64>,
    /// Retained fraction over both ensembles.
    pub n_r: f64,
    pub threshold: Option<u64>,
}

fn rate(wrong: u64, retained: u64) -> Option<(f64, f64)> {
    (retained > 0).then(|| {
        let p = wrong as f64 / retained as f64;
        (p, (p * (1.0 - p) / retained as f64).sqrt())
    })
}

impl ErrorReport {
    pub fn from_tally(method: &str, params: String, t_b_ms: f64, tally: Tally) -> Self {
        let b = rate(tally.wrong[0], tally.retained(IonState::Bright));
        let d = rate(tally.wrong[1], tally.retained(IonState::Dark));
        let (epsilon, std_error) = match (b, d) {
            (Some((eb, sb)), Some((ed, sd))) => (
                Some(0.5 * (eb + ed)),
                Some(0.5 * (sb * sb + sd * sd).sqrt()),
            ),
            _ => (None, None),
        };
        let total = tally.total(IonState::Bright) + tally.total(IonState::Dark);
        let retained = tally.retained(IonState::Bright) + tally.retained(IonState::Dark);
        ErrorReport {
            method: method.to_string(),
            params,
            t_b_ms,
            tally,
            epsilon_bright: b.map(|x| x.0),
            epsilon_dark: d.map(|x| x.0),
            epsilon,
            std_error,
            n_r: if total > 0 {
                retained as f64 / total as f64
            } else {
                0.0
            },
            threshold: None,
        }
    }

    pub(crate) fn with_threshold(mut self, t: u64) -> Self {
        self.threshold = Some(t);
        self
    }

    /// `epsilon`, or infinity when undefined. Used for minimization.
    pub fn epsilon_or_inf(&self) -> f64 {
        self.epsilon.unwrap_or(f64::INFINITY)
    }
}

pub(crate) fn detector_params(det: &Detector<'_>) -> String {
    match det {
        Detector::Threshold { n_c } => format!("n_c={n_c}"),
        Detector::DoubleThreshold(d) => format!("n_d={};n_b={}", d.n_dark(), d.n_bright()),
        Detector::SimpleTimeResolved(s) => {
            format!("direction={:?};tau_ms={}", s.direction(), s.tau())
        }
        Detector::Generalized(g) => format!("n_max={}", g.table().n_max()),
    }
}

fn check_pair(bright: &[Trajectory], dark: &[Trajectory]) -> Result<()> {
    if bright.is_empty() || dark.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let (b, d) = (&bright[0], &dark[0]);
    if (b.t_sub_ms - d.t_sub_ms).abs() > 1e-12 || b.len() != d.len() {
        return Err(Error::Config(
            "bright and dark ensembles use different (t_b, t_s)".into(),
        ));
    }
    Ok(())
}

/// Applies `detector` to full records of both ensembles.
pub fn evaluate(
    bright: &[Trajectory],
    dark: &[Trajectory],
    detector: &Detector<'_>,
) -> Result<ErrorReport> {
    check_pair(bright, dark)?;
    let bins = bright[0].len();
    let tally = evaluate_by_prefix(bright, dark, detector, &[bins])?[0];
    let t_b = bins as f64 * bright[0].t_sub_ms;
    Ok(ErrorReport::from_tally(
        detector.name(),
        detector_params(detector),
        t_b,
        tally,
    ))
}

/// Tallies for several record lengths at once, each a prefix of the
/// simulated records. `bins` entries must not exceed the record length.
pub fn evaluate_by_prefix(
    bright: &[Trajectory],
    dark: &[Trajectory],
    detector: &Detector<'_>,
    bins: &[usize],
) -> Result<Vec<Tally>> {
    check_pair(bright, dark)?;
    let len = bright[0].len();
    if bins.iter().any(|&b| b == 0 || b > len) {
        return Err(Error::Config(format!(
            "requested prefix outside 1..={len} sub-bins"
        )));
    }
    let tallies = bright
        .par_iter()
        .chain(dark.par_iter())
        .fold(
            || (vec![Tally::default(); bins.len()], Vec::with_capacity(len)),
            |(mut acc, mut scratch), traj| {
                detector.decisions_by_prefix(&traj.counts, &mut scratch);
                for (slot, &b) in acc.iter_mut().zip(bins) {
                    slot.record(traj.initial, scratch[b - 1]);
                }
                (acc, scratch)
            },
        )
        .map(|(acc, _)| acc)
        .reduce(
            || vec![Tally::default(); bins.len()],
            |a, b| a.iter().zip(&b).map(|(x, y)| x.merge(y)).collect(),
        );
    Ok(tallies)
}
