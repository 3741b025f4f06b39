//! Per-sub-bin photon statistics: dwell probabilities, Poisson counts and
//! the Poisson mixtures produced by a state change inside a sub-bin.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{IonState, RateParams};
use crate::quad;

/// Absolute tolerance for each mixture integral.
pub const MIXTURE_QUAD_TOL: f64 = 1e-10;

/// Direction of a state change within a sub-bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transition {
    /// Bright ion turning dark.
    BrightToDark,
    /// Dark ion turning bright.
    DarkToBright,
}

impl Transition {
    pub fn from_state(self) -> IonState {
        match self {
            Transition::BrightToDark => IonState::Bright,
            Transition::DarkToBright => IonState::Dark,
        }
    }
}

/// Probability that an ion in `state` is still in it after `t` ms,
/// for `0 <= t <= t_sub`.
pub fn stay_prob(state: IonState, t: f64, params: &RateParams) -> Result<f64> {
    if !(0.0..=params.t_sub_ms).contains(&t) {
        return Err(Error::DurationOutOfRange {
            t,
            t_sub: params.t_sub_ms,
        });
    }
    Ok((-t / params.tau(state)).exp())
}

/// Probability of leaving `state` within a full sub-bin.
pub fn change_prob(state: IonState, params: &RateParams) -> f64 {
    -(-params.t_sub_ms / params.tau(state)).exp_m1()
}

pub fn ln_factorial(n: u32) -> f64 {
    // Exact summation for the counts that occur in practice, Stirling beyond.
    if n < 256 {
        (2..=n).map(|k| (k as f64).ln()).sum()
    } else {
        let x = n as f64 + 1.0;
        (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x)
            - 1.0 / (360.0 * x.powi(3))
    }
}

/// Poisson probability of `n` events at mean `mean`.
pub fn poisson_pmf(mean: f64, n: u32) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    ln_poisson_pmf(mean, n).exp()
}

pub fn ln_poisson_pmf(mean: f64, n: u32) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    n as f64 * mean.ln() - mean - ln_factorial(n)
}

/// Photon-count distribution of one sub-bin without a state change.
pub fn count_pmf(state: IonState, n: u32, params: &RateParams) -> f64 {
    poisson_pmf(params.sub_bin_mean(state), n)
}

/// Count distribution of a sub-bin in which the ion changes state once,
/// weighted by the probability of that change. Summed over all `n` it gives
/// the change probability of the sub-bin.
pub fn mixed_pmf(direction: Transition, n: u32, params: &RateParams) -> Result<f64> {
    let r_b = params.rate_bright_per_ms;
    if r_b <= 0.0 {
        return Err(Error::DegenerateModel);
    }
    let tau = params.tau(direction.from_state());
    if tau.is_infinite() {
        return Ok(0.0);
    }
    let lo = params.rate_dark_per_ms * params.t_sub_ms;
    let hi = lo + r_b * params.t_sub_ms;
    let scale = r_b * tau;
    let ln_nfact = ln_factorial(n);
    let nf = n as f64;
    let integrand = |lambda: f64| {
        let ln_g = match direction {
            Transition::BrightToDark => -(lambda - lo) / scale,
            Transition::DarkToBright => -(hi - lambda) / scale,
        };
        let ln_poisson = if lambda > 0.0 {
            nf * lambda.ln() - lambda - ln_nfact
        } else if n == 0 {
            0.0
        } else {
            return 0.0;
        };
        (ln_g + ln_poisson).exp() / scale
    };
    Ok(quad::integrate(integrand, lo, hi, MIXTURE_QUAD_TOL).max(0.0))
}
