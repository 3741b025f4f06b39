//! Monte Carlo generation of measurement records.
//!
//! A record is produced in two steps: first the times at which the ion
//! changes state are drawn from alternating exponential dwell times, then a
//! Poisson count is drawn for every sub-bin with mean
//! `R_D·t_s + R_B·(bright dwell inside the sub-bin)`.
//!
//! Every trial owns a ChaCha8 stream keyed by `(seed, domain, trial)`, so an
//! ensemble is bit-identical no matter how many worker threads produce it.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{bins_in, IonState, RateParams};

/// Independent random-stream families derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamDomain {
    /// Single-window ensemble prepared in the given state.
    Ensemble(IonState),
    /// Two-window (detection, pulse, detection) ensemble with the given
    /// number of sub-bins per window.
    PulsedPair(IonState, u32),
}

impl StreamDomain {
    fn tag(self) -> u64 {
        match self {
            StreamDomain::Ensemble(s) => s.index() as u64,
            StreamDomain::PulsedPair(s, bins) => 0x10 + s.index() as u64 + ((bins as u64) << 8),
        }
    }
}

/// Random stream for one trial.
pub fn trial_rng(seed: u64, domain: StreamDomain, trial: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.tag().to_le_bytes());
    key[16..24].copy_from_slice(b"readout1");
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(trial);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub initial: IonState,
    /// Absolute times of state changes, strictly increasing, in (0, t_b].
    pub change_times: Vec<f64>,
    /// One photon count per sub-bin.
    pub counts: Vec<u32>,
    pub t_b_ms: f64,
    pub t_sub_ms: f64,
}

impl Trajectory {
    /// State at time `t`: the initial state flipped once per change at or
    /// before `t`.
    pub fn state_at(&self, t: f64) -> IonState {
        let flips = self.change_times.iter().take_while(|&&c| c <= t).count();
        if flips % 2 == 0 {
            self.initial
        } else {
            self.initial.flipped()
        }
    }

    pub fn final_state(&self) -> IonState {
        if self.change_times.len().is_multiple_of(2) {
            self.initial
        } else {
            self.initial.flipped()
        }
    }

    /// State after the first `bins` sub-bins.
    pub fn state_after_bins(&self, bins: usize) -> IonState {
        self.state_at(bins as f64 * self.t_sub_ms)
    }

    /// Number of sub-bins.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().map(|&n| n as u64).sum()
    }

    /// Time spent bright within [0, t_b].
    pub fn bright_dwell(&self) -> f64 {
        bright_dwell_per_bin(self.initial, &self.change_times, self.t_sub_ms, self.len())
            .iter()
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_trials: usize,
    pub t_b_ms: f64,
    pub seed: u64,
    pub params: RateParams,
}

impl SimConfig {
    pub fn validate(&self) -> Result<usize> {
        self.params.validate()?;
        if self.n_trials < 1 {
            return Err(invalid("n_trials", "must be >= 1"));
        }
        bins_in(self.t_b_ms, self.params.t_sub_ms)
    }
}

/// Draws state-change times on (0, t_b] from alternating exponential dwell
/// times with means `tau_B` (bright) and `tau_D` (dark).
pub fn sample_change_times<R: Rng + ?Sized>(
    initial: IonState,
    t_b_ms: f64,
    params: &RateParams,
    rng: &mut R,
) -> Vec<f64> {
    let mut times = Vec::new();
    let mut state = initial;
    let mut t = 0.0;
    loop {
        let tau = params.tau(state);
        if tau.is_infinite() {
            break;
        }
        let dwell: f64 = Exp1.sample(rng);
        t += dwell * tau;
        if t > t_b_ms {
            break;
        }
        // Exp1 can return exactly 0; keep the sequence strictly increasing.
        if t > 0.0 && times.last().is_none_or(|&last| t > last) {
            times.push(t);
            state = state.flipped();
        }
    }
    times
}

/// Bright time inside each of `bins` consecutive sub-bins.
pub fn bright_dwell_per_bin(
    initial: IonState,
    change_times: &[f64],
    t_sub_ms: f64,
    bins: usize,
) -> Vec<f64> {
    let mut dwell = vec![0.0; bins];
    let end = bins as f64 * t_sub_ms;
    let mut state = initial;
    let mut seg_start = 0.0;
    let mut changes = change_times
        .iter()
        .copied()
        .chain(std::iter::once(f64::INFINITY));
    while seg_start < end {
        let seg_end = changes.next().unwrap_or(f64::INFINITY).min(end);
        if state == IonState::Bright && seg_end > seg_start {
            let first = ((seg_start / t_sub_ms).floor() as usize).min(bins - 1);
            let last = ((seg_end / t_sub_ms).ceil() as usize).min(bins);
            for (k, slot) in dwell.iter_mut().enumerate().take(last).skip(first) {
                let lo = (k as f64 * t_sub_ms).max(seg_start);
                let hi = ((k + 1) as f64 * t_sub_ms).min(seg_end);
                if hi > lo {
                    *slot += hi - lo;
                }
            }
        }
        seg_start = seg_end;
        state = state.flipped();
    }
    dwell
}

fn draw_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("finite positive Poisson mean");
    d.sample(rng) as u32
}

/// Draws one Poisson count per sub-bin given the state-change history.
/// Sub-bins with several changes use their exact bright dwell time.
pub fn sample_counts<R: Rng + ?Sized>(
    initial: IonState,
    change_times: &[f64],
    bins: usize,
    params: &RateParams,
    rng: &mut R,
) -> Vec<u32> {
    let background = params.rate_dark_per_ms * params.t_sub_ms;
    bright_dwell_per_bin(initial, change_times, params.t_sub_ms, bins)
        .into_iter()
        .map(|bright| draw_poisson(background + params.rate_bright_per_ms * bright, rng))
        .collect()
}

/// Simulates a single trial from an explicit random stream.
pub fn simulate_with<R: Rng + ?Sized>(
    initial: IonState,
    t_b_ms: f64,
    bins: usize,
    params: &RateParams,
    rng: &mut R,
) -> Trajectory {
    let change_times = sample_change_times(initial, t_b_ms, params, rng);
    let counts = sample_counts(initial, &change_times, bins, params, rng);
    Trajectory {
        initial,
        change_times,
        counts,
        t_b_ms,
        t_sub_ms: params.t_sub_ms,
    }
}

/// Simulates trial `trial` of the ensemble prepared in `initial`.
pub fn simulate_trial(
    config: &SimConfig,
    bins: usize,
    initial: IonState,
    trial: u64,
) -> Trajectory {
    let mut rng = trial_rng(config.seed, StreamDomain::Ensemble(initial), trial);
    simulate_with(initial, config.t_b_ms, bins, &config.params, &mut rng)
}

/// `config.n_trials` independent trajectories prepared in `initial`.
pub fn simulate_ensemble(config: &SimConfig, initial: IonState) -> Result<Vec<Trajectory>> {
    let bins = config.validate()?;
    Ok((0..config.n_trials as u64)
        .into_par_iter()
        .map(|i| simulate_trial(config, bins, initial, i))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: RateParams = RateParams::YB171;

    fn cfg(n: usize, t_b: f64, seed: u64) -> SimConfig {
        SimConfig {
            n_trials: n,
            t_b_ms: t_b,
            seed,
            params: P,
        }
    }

    #[test]
    fn no_decay_means_no_changes() {
        let p = RateParams {
            tau_dark_ms: f64::INFINITY,
            ..P
        };
        let mut rng = trial_rng(1, StreamDomain::Ensemble(IonState::Dark), 0);
        for _ in 0..100 {
            assert!(sample_change_times(IonState::Dark, 3.0, &p, &mut rng).is_empty());
        }
    }

    #[test]
    fn change_times_sorted_and_bounded() {
        let p = RateParams {
            tau_bright_ms: 0.05,
            tau_dark_ms: 0.07,
            ..P
        };
        let mut rng = trial_rng(2, StreamDomain::Ensemble(IonState::Bright), 3);
        for _ in 0..200 {
            let t = sample_change_times(IonState::Bright, 1.0, &p, &mut rng);
            assert!(t.windows(2).all(|w| w[0] < w[1]));
            assert!(t.iter().all(|&x| x > 0.0 && x <= 1.0));
        }
    }

    #[test]
    fn dwell_bookkeeping() {
        // bright -> dark at 0.25 in 0.1 ms bins
        let d = bright_dwell_per_bin(IonState::Bright, &[0.25], 0.1, 4);
        let expect = [0.1, 0.1, 0.05, 0.0];
        for (a, b) in d.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        // dark -> bright at 0.13, bright -> dark at 0.17 (two changes in one bin)
        let d = bright_dwell_per_bin(IonState::Dark, &[0.13, 0.17], 0.1, 3);
        assert!((d[0]).abs() < 1e-12);
        assert!((d[1] - 0.04).abs() < 1e-12);
        assert!((d[2]).abs() < 1e-12);
        // change exactly at a bin boundary
        let d = bright_dwell_per_bin(IonState::Bright, &[0.2], 0.1, 3);
        assert!((d[0] - 0.1).abs() < 1e-12 && (d[1] - 0.1).abs() < 1e-12 && d[2].abs() < 1e-12);
        // bright -> dark at the very start of the bin contributes no bright time
        let d = bright_dwell_per_bin(IonState::Bright, &[0.1], 0.1, 2);
        assert!(d[1].abs() < 1e-12);
    }

    #[test]
    fn state_lookup() {
        let t = Trajectory {
            initial: IonState::Bright,
            change_times: vec![0.5, 1.2],
            counts: vec![0; 30],
            t_b_ms: 3.0,
            t_sub_ms: 0.1,
        };
        assert_eq!(t.state_at(0.1), IonState::Bright);
        assert_eq!(t.state_at(0.5), IonState::Dark);
        assert_eq!(t.state_at(2.0), IonState::Bright);
        assert_eq!(t.final_state(), IonState::Bright);
        assert_eq!(t.state_after_bins(6), IonState::Dark);
    }

    #[test]
    fn same_seed_same_ensemble() {
        let a = simulate_ensemble(&cfg(500, 1.0, 42), IonState::Bright).unwrap();
        let b = simulate_ensemble(&cfg(500, 1.0, 42), IonState::Bright).unwrap();
        assert_eq!(a, b);
        let c = simulate_ensemble(&cfg(500, 1.0, 43), IonState::Bright).unwrap();
        assert_ne!(a, c);
        let d = simulate_ensemble(&cfg(500, 1.0, 42), IonState::Dark).unwrap();
        assert_ne!(
            a.iter().map(|t| &t.counts).collect::<Vec<_>>(),
            d.iter().map(|t| &t.counts).collect::<Vec<_>>()
        );
    }

    #[test]
    fn independent_of_thread_count() {
        let c = cfg(2000, 0.5, 9);
        let serial = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| simulate_ensemble(&c, IonState::Dark).unwrap());
        let parallel = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| simulate_ensemble(&c, IonState::Dark).unwrap());
        assert_eq!(serial, parallel);
        // and a trial does not depend on the ensemble size
        let single = simulate_trial(&c, 5, IonState::Dark, 1234);
        assert_eq!(single, serial[1234]);
    }

    #[test]
    fn rejects_fractional_bins() {
        assert!(simulate_ensemble(&cfg(10, 0.25, 1), IonState::Bright).is_err());
        assert!(simulate_ensemble(&cfg(0, 0.3, 1), IonState::Bright).is_err());
    }
}
