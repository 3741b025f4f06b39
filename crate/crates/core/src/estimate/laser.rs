use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Laser and detection parameters behind the bright-state photon rate.
/// Frequencies are angular, in 1/ms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserPhysics {
    /// Photon collection efficiency.
    pub eta: f64,
    /// Natural linewidth.
    pub gamma_per_ms: f64,
    pub rabi_per_ms: f64,
    pub detuning_per_ms: f64,
    pub zeeman_per_ms: f64,
}

impl LaserPhysics {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("eta", self.eta),
            ("gamma_per_ms", self.gamma_per_ms),
            ("rabi_per_ms", self.rabi_per_ms),
            ("detuning_per_ms", self.detuning_per_ms),
            ("zeeman_per_ms", self.zeeman_per_ms),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(name, "must be finite and >= 0"));
            }
        }
        if self.rabi_per_ms > 0.0 && self.zeeman_per_ms == 0.0 {
            return Err(invalid(
                "zeeman_per_ms",
                "must be > 0 when driving; the population formula diverges for a coherent dark state",
            ));
        }
        Ok(())
    }

    /// Steady-state excited-state population `p_f`.
    pub fn steady_state_population(&self) -> Result<f64> {
        self.validate()?;
        let om2 = self.rabi_per_ms * self.rabi_per_ms;
        if om2 == 0.0 {
            return Ok(0.0);
        }
        let d = self.zeeman_per_ms;
        let half_width_sq =
            (self.gamma_per_ms / 2.0).powi(2) + (om2 / (36.0 * d * d) + 4.0 * d * d) / 6.0;
        Ok(om2 / 36.0 / (self.detuning_per_ms.powi(2) + half_width_sq))
    }

    /// Detected bright-state rate `eta gamma p_f` in 1/ms.
    pub fn fluorescence_rate(&self) -> Result<f64> {
        Ok(self.eta * self.gamma_per_ms * self.steady_state_population()?)
    }
}
