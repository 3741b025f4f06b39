use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{IonState, RateParams};

/// Coefficients of the two-state rate equations
/// `dW_B/dt = -W_B/tau_B + W_D/tau_D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxationWeights {
    /// `tau_D / (tau_B + tau_D)`, the long-time dark occupancy.
    pub a: f64,
    /// `tau_B / (tau_B + tau_D)`, the long-time bright occupancy.
    pub b: f64,
    /// `tau_B tau_D / (tau_B + tau_D)`.
    pub tau_ms: f64,
}

impl RelaxationWeights {
    /// Infinite lifetimes are taken as limits. With both infinite the split
    /// is arbitrary and never affects the occupancies.
    pub fn new(tau_bright_ms: f64, tau_dark_ms: f64) -> Result<Self> {
        if !(tau_bright_ms > 0.0) {
            return Err(invalid("tau_bright_ms", "must be > 0"));
        }
        if !(tau_dark_ms > 0.0) {
            return Err(invalid("tau_dark_ms", "must be > 0"));
        }
        Ok(match (tau_bright_ms.is_finite(), tau_dark_ms.is_finite()) {
            (true, true) => {
                let s = tau_bright_ms + tau_dark_ms;
                RelaxationWeights {
                    a: tau_dark_ms / s,
                    b: tau_bright_ms / s,
                    tau_ms: tau_bright_ms * tau_dark_ms / s,
                }
            }
            (true, false) => RelaxationWeights {
                a: 1.0,
                b: 0.0,
                tau_ms: tau_bright_ms,
            },
            (false, true) => RelaxationWeights {
                a: 0.0,
                b: 1.0,
                tau_ms: tau_dark_ms,
            },
            (false, false) => RelaxationWeights {
                a: 0.5,
                b: 0.5,
                tau_ms: f64::INFINITY,
            },
        })
    }

    fn decay(&self, t: f64) -> f64 {
        if self.tau_ms.is_infinite() {
            1.0
        } else {
            (-t / self.tau_ms).exp()
        }
    }

    /// `tau (e^{dt/tau} - 1)`, equal to `dt` for infinite `tau`.
    fn window_factor(&self, dt: f64) -> f64 {
        if self.tau_ms.is_infinite() {
            dt
        } else {
            self.tau_ms * (dt / self.tau_ms).exp_m1()
        }
    }
}

/// Occupancies `(W_B, W_D)` at time `t` for an ion prepared in `initial`.
pub fn population_dynamics(
    t_ms: f64,
    initial: IonState,
    tau_bright_ms: f64,
    tau_dark_ms: f64,
) -> Result<(f64, f64)> {
    if !(t_ms >= 0.0) {
        return Err(invalid("t_ms", "must be >= 0"));
    }
    let w = RelaxationWeights::new(tau_bright_ms, tau_dark_ms)?;
    let e = w.decay(t_ms);
    let bright = match initial {
        IonState::Bright => w.b + w.a * e,
        IonState::Dark => w.b - w.b * e,
    };
    Ok((bright, 1.0 - bright))
}

/// Expected counts in the window `[t0 - dt, t0]` for an ion prepared in
/// `initial`.
pub fn mean_count_window(
    t0_ms: f64,
    dt_ms: f64,
    params: &RateParams,
    initial: IonState,
) -> Result<f64> {
    if !(dt_ms > 0.0) {
        return Err(invalid("dt_ms", "must be > 0"));
    }
    if !(t0_ms >= dt_ms) {
        return Err(invalid("t0_ms", "window must start at or after t = 0"));
    }
    params.validate()?;
    let w = RelaxationWeights::new(params.tau_bright_ms, params.tau_dark_ms)?;
    let r_b = params.rate_bright_per_ms;
    let base = dt_ms * (r_b * w.b + params.rate_dark_per_ms);
    let k = w.window_factor(dt_ms) * w.decay(t0_ms);
    Ok(match initial {
        IonState::Bright => base + r_b * w.a * k,
        IonState::Dark => base - r_b * w.b * k,
    })
}

/// Decay-curve parameters `(a, b, c, tau)` implied by the rate model for
/// windows of width `dt_ms` ending at `t = j dt`.
pub fn expected_decay_parameters(params: &RateParams, dt_ms: f64) -> Result<[f64; 4]> {
    if !(dt_ms > 0.0) {
        return Err(invalid("dt_ms", "must be > 0"));
    }
    params.validate()?;
    let w = RelaxationWeights::new(params.tau_bright_ms, params.tau_dark_ms)?;
    let r_b = params.rate_bright_per_ms;
    let k = w.window_factor(dt_ms);
    Ok([
        dt_ms * (r_b * w.b + params.rate_dark_per_ms),
        r_b * w.a * k,
        r_b * w.b * k,
        w.tau_ms,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_and_steady_state() {
        let (b, d) = population_dynamics(0.0, IonState::Bright, 4.9, 56.0).unwrap();
        assert_eq!((b, d), (1.0, 0.0));
        let (b, _) = population_dynamics(1e6, IonState::Dark, 4.9, 56.0).unwrap();
        assert!((b - 4.9 / 60.9).abs() < 1e-15);
    }

    #[test]
    fn one_relaxation_time() {
        let w = RelaxationWeights::new(4.9, 56.0).unwrap();
        let (b, _) = population_dynamics(w.tau_ms, IonState::Bright, 4.9, 56.0).unwrap();
        assert!((b - 0.418_739_716).abs() < 1e-8, "{b}");
    }

    #[test]
    fn no_fluorescence_gives_background() {
        let p = RateParams {
            rate_bright_per_ms: 0.0,
            ..RateParams::YB171
        };
        for s in IonState::ALL {
            let n = mean_count_window(0.5, 0.25, &p, s).unwrap();
            assert!((n - 0.25 * 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn long_time_limit_is_shared() {
        let p = RateParams::YB171;
        let a = expected_decay_parameters(&p, 1.0 / 3.0).unwrap()[0];
        for s in IonState::ALL {
            let n = mean_count_window(1e4, 1.0 / 3.0, &p, s).unwrap();
            assert!((n - a).abs() < 1e-12);
        }
    }

    #[test]
    fn infinite_lifetimes() {
        let p = RateParams {
            tau_bright_ms: f64::INFINITY,
            tau_dark_ms: f64::INFINITY,
            ..RateParams::YB171
        };
        let n = mean_count_window(2.0, 0.5, &p, IonState::Bright).unwrap();
        assert!((n - 0.5 * 16.3).abs() < 1e-12);
        let (b, _) = population_dynamics(3.0, IonState::Dark, 4.9, f64::INFINITY).unwrap();
        assert_eq!(b, 0.0);
        let (b, _) = population_dynamics(3.0, IonState::Bright, 4.9, f64::INFINITY).unwrap();
        assert!((b - (-3.0f64 / 4.9).exp()).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_windows() {
        let p = RateParams::YB171;
        assert!(mean_count_window(0.1, 0.2, &p, IonState::Bright).is_err());
        assert!(mean_count_window(0.1, 0.0, &p, IonState::Bright).is_err());
        assert!(population_dynamics(-1.0, IonState::Bright, 1.0, 1.0).is_err());
    }
}
