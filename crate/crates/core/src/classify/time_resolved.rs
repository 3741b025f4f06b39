use serde::{Deserialize, Serialize};

use super::{Classification, Decision, TieRule};
use crate::error::{invalid, Error, Result};
use crate::mat2::{self, Mat2, IDENTITY};
use crate::model::{IonState, RateParams};
use crate::photon::{poisson_pmf, Transition};
use crate::table::ObservationTable;

/// Accumulated path probabilities for one record.
///
/// `matrix[r][c]` times `exp(ln_scale)` is the probability of the record
/// together with final state `r`, given initial state `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodPair {
    pub matrix: Mat2,
    pub ln_scale: f64,
}

impl LikelihoodPair {
    pub fn p_bright(&self) -> f64 {
        mat2::column_sums(&self.matrix)[0] * self.ln_scale.exp()
    }

    pub fn p_dark(&self) -> f64 {
        mat2::column_sums(&self.matrix)[1] * self.ln_scale.exp()
    }

    pub fn ln_p_bright(&self) -> f64 {
        mat2::column_sums(&self.matrix)[0].ln() + self.ln_scale
    }

    pub fn ln_p_dark(&self) -> f64 {
        mat2::column_sums(&self.matrix)[1].ln() + self.ln_scale
    }

    /// `ln p_B - ln p_D`.
    pub fn log_ratio(&self) -> f64 {
        let s = mat2::column_sums(&self.matrix);
        s[0].ln() - s[1].ln()
    }

    pub(crate) fn decide(&self, tie: TieRule) -> Decision {
        let s = mat2::column_sums(&self.matrix);
        tie.decide(s[0], s[1])
    }
}

/// Arithmetic used for the product of observation matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Accumulation {
    /// Plain products; underflows on long records.
    Linear,
    /// Log-sum-exp over the table's log entries.
    Log,
    /// Log above 30 sub-bins, linear otherwise.
    #[default]
    Auto,
}

impl Accumulation {
    fn use_log(self, bins: usize) -> bool {
        match self {
            Accumulation::Linear => false,
            Accumulation::Log => true,
            Accumulation::Auto => bins > 30,
        }
    }
}

#[inline]
fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Hidden-Markov time-resolved discrimination: the record likelihood for
/// each initial state is a column sum of `O(n_M)···O(n_2)·O(n_1)`.
#[derive(Debug, Clone, Copy)]
pub struct GeneralizedTimeResolved<'a> {
    table: &'a ObservationTable,
    pub tie: TieRule,
    pub accumulation: Accumulation,
}

impl<'a> GeneralizedTimeResolved<'a> {
    pub fn new(table: &'a ObservationTable) -> Self {
        GeneralizedTimeResolved {
            table,
            tie: TieRule::default(),
            accumulation: Accumulation::default(),
        }
    }

    pub fn with_accumulation(mut self, accumulation: Accumulation) -> Self {
        self.accumulation = accumulation;
        self
    }

    pub fn table(&self) -> &ObservationTable {
        self.table
    }

    pub fn likelihoods(&self, counts: &[u32]) -> Result<(LikelihoodPair, usize)> {
        if counts.is_empty() {
            return Err(Error::EmptySequence);
        }
        let clamped = counts
            .iter()
            .filter(|&&n| n as usize > self.table.n_max())
            .count();
        if self.accumulation.use_log(counts.len()) {
            return Ok((self.log_likelihoods(counts), clamped));
        }
        let mut acc = IDENTITY;
        for &n in counts {
            acc = mat2::mul(self.table.get(n).0, &acc);
        }
        Ok((
            LikelihoodPair {
                matrix: acc,
                ln_scale: 0.0,
            },
            clamped,
        ))
    }

    fn log_likelihoods(&self, counts: &[u32]) -> LikelihoodPair {
        let ninf = f64::NEG_INFINITY;
        let mut acc = [[0.0, ninf], [ninf, 0.0]];
        for &n in counts {
            let o = self.table.get_log(n);
            let mut next = [[ninf; 2]; 2];
            for (r, row) in next.iter_mut().enumerate() {
                for (c, slot) in row.iter_mut().enumerate() {
                    *slot = log_add(o[r][0] + acc[0][c], o[r][1] + acc[1][c]);
                }
            }
            acc = next;
        }
        let ln_scale = acc.iter().flatten().copied().fold(ninf, f64::max);
        let matrix = [
            [(acc[0][0] - ln_scale).exp(), (acc[0][1] - ln_scale).exp()],
            [(acc[1][0] - ln_scale).exp(), (acc[1][1] - ln_scale).exp()],
        ];
        LikelihoodPair { matrix, ln_scale }
    }

    pub fn classify(&self, counts: &[u32]) -> Result<Classification> {
        let (lk, clamped) = self.likelihoods(counts)?;
        Ok(Classification {
            decision: lk.decide(self.tie),
            likelihoods: Some(lk),
            clamped,
            prior_clamped: false,
        })
    }

    /// Decision after every sub-bin.
    pub fn decisions_by_prefix(&self, counts: &[u32], out: &mut Vec<Decision>) {
        let mut acc = IDENTITY;
        for &n in counts {
            acc = mat2::mul(self.table.get(n).0, &acc);
            let s = mat2::max_entry(&acc);
            if s > 0.0 && s < RESCALE_BELOW {
                acc = mat2::scale(&acc, 1.0 / s);
            }
            let cols = mat2::column_sums(&acc);
            out.push(self.tie.decide(cols[0], cols[1]));
        }
    }
}

/// Hidden-Markov classification with default settings.
pub fn generalized_time_resolved_classify(
    counts: &[u32],
    table: &ObservationTable,
) -> Result<Classification> {
    GeneralizedTimeResolved::new(table).classify(counts)
}

const PMF_CACHE: usize = 64;

/// Running products are renormalized once their largest entry drops below
/// this; every factor is a probability, so they never grow.
const RESCALE_BELOW: f64 = 1e-100;

/// Time-resolved discrimination allowing at most one state change, in a
/// single direction, during the whole record.
///
/// With `direction = DarkToBright` the dark hypothesis is
/// `(1 - t_b/tau)·ΠP_D + (t_s/tau)·Σ_k Π_{j<k}P_D·Π_{j>=k}P_B` and the bright
/// hypothesis is `ΠP_B`. `BrightToDark` is the mirror image.
#[derive(Debug, Clone)]
pub struct SimpleTimeResolved {
    params: RateParams,
    tau: f64,
    direction: Transition,
    pub tie: TieRule,
    pmf: [Vec<f64>; 2],
}

impl SimpleTimeResolved {
    pub fn new(params: RateParams, tau: f64, direction: Transition) -> Result<Self> {
        params.validate()?;
        if !(tau > 0.0) {
            return Err(invalid("tau", "must be > 0"));
        }
        let table = |s: IonState| {
            (0..PMF_CACHE as u32)
                .map(|n| poisson_pmf(params.sub_bin_mean(s), n))
                .collect::<Vec<_>>()
        };
        Ok(SimpleTimeResolved {
            params,
            tau,
            direction,
            tie: TieRule::default(),
            pmf: [table(IonState::Bright), table(IonState::Dark)],
        })
    }

    /// Dark-to-bright variant with the dark lifetime as `tau`.
    pub fn dark_decay(params: RateParams) -> Result<Self> {
        Self::new(params, params.tau_dark_ms, Transition::DarkToBright)
    }

    /// Bright-to-dark variant with the bright lifetime as `tau`.
    pub fn bright_decay(params: RateParams) -> Result<Self> {
        Self::new(params, params.tau_bright_ms, Transition::BrightToDark)
    }

    pub fn direction(&self) -> Transition {
        self.direction
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    #[inline]
    fn pmf(&self, state: IonState, n: u32) -> f64 {
        match self.pmf[state.index()].get(n as usize) {
            Some(&p) => p,
            None => poisson_pmf(self.params.sub_bin_mean(state), n),
        }
    }

    fn states(&self) -> (IonState, IonState) {
        let origin = self.direction.from_state();
        (origin, origin.flipped())
    }

    fn prior(&self, bins: usize) -> (f64, bool) {
        let p = 1.0 - bins as f64 * self.params.t_sub_ms / self.tau;
        if p < 0.0 {
            (0.0, true)
        } else {
            (p, false)
        }
    }

    /// One step of the recurrence over (stay, changed, other) path sums.
    #[inline]
    fn step(&self, acc: &mut [f64; 3], n: u32) {
        let (origin, other) = self.states();
        let p_o = self.pmf(origin, n);
        let p_x = self.pmf(other, n);
        acc[1] = p_x * (acc[1] + acc[0]);
        acc[0] *= p_o;
        acc[2] *= p_x;
    }

    fn finish(&self, acc: &[f64; 3], bins: usize) -> (Mat2, bool) {
        let (prior, clamped) = self.prior(bins);
        let stay = prior * acc[0];
        let changed = self.params.t_sub_ms / self.tau * acc[1];
        let m = match self.direction {
            Transition::DarkToBright => [[acc[2], changed], [0.0, stay]],
            Transition::BrightToDark => [[stay, 0.0], [changed, acc[2]]],
        };
        (m, clamped)
    }

    pub fn likelihoods(&self, counts: &[u32]) -> Result<(LikelihoodPair, bool)> {
        if counts.is_empty() {
            return Err(Error::EmptySequence);
        }
        let mut acc = [1.0, 0.0, 1.0];
        let mut ln_scale = 0.0;
        for &n in counts {
            self.step(&mut acc, n);
            let s = acc[0].max(acc[1]).max(acc[2]);
            if s > 0.0 && s < RESCALE_BELOW {
                acc.iter_mut().for_each(|v| *v /= s);
                ln_scale += s.ln();
            }
        }
        let (matrix, clamped) = self.finish(&acc, counts.len());
        Ok((LikelihoodPair { matrix, ln_scale }, clamped))
    }

    pub fn classify(&self, counts: &[u32]) -> Result<Classification> {
        let (lk, prior_clamped) = self.likelihoods(counts)?;
        Ok(Classification {
            decision: lk.decide(self.tie),
            likelihoods: Some(lk),
            clamped: 0,
            prior_clamped,
        })
    }

    pub fn decisions_by_prefix(&self, counts: &[u32], out: &mut Vec<Decision>) {
        let mut acc = [1.0, 0.0, 1.0];
        for (k, &n) in counts.iter().enumerate() {
            self.step(&mut acc, n);
            let s = acc[0].max(acc[1]).max(acc[2]);
            if s > 0.0 && s < RESCALE_BELOW {
                acc.iter_mut().for_each(|v| *v /= s);
            }
            let (m, _) = self.finish(&acc, k + 1);
            let cols = mat2::column_sums(&m);
            out.push(self.tie.decide(cols[0], cols[1]));
        }
    }
}

/// Single-change classification in its original form: dark ions may turn
/// bright once with lifetime `tau`, bright ions are stable.
pub fn simple_time_resolved_classify(
    counts: &[u32],
    params: &RateParams,
    tau: f64,
) -> Result<Classification> {
    SimpleTimeResolved::new(*params, tau, Transition::DarkToBright)?.classify(counts)
}
