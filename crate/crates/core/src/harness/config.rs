//! Versioned run configuration. Every dimensional key carries its unit.
//!
//! ```toml
//! version = 1
//! seed = 7
//!
//! [params]
//! rate_bright_per_ms = 16.0
//! rate_dark_per_ms = 0.3
//! tau_bright_ms = 4.9
//! tau_dark_ms = 56.0
//! t_sub_ms = 0.1
//!
//! [sweep]
//! t_b_ms = { from = 0.1, to = 3.0, step = 0.1 }
//! n_trials = 100000
//! methods = [{ method = "threshold" }, { method = "generalized" }]
//! ```

use serde::{Deserialize, Serialize};

use super::pulse::PiPulseSpec;
use super::sweep::{MethodSpec, SweepSpec};
use crate::error::{invalid, Error, Result};
use crate::model::RateParams;
use crate::photon::Transition;

pub const CONFIG_VERSION: u32 = 1;

/// Measurement times as an explicit list or an inclusive arithmetic range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeGrid {
    List(Vec<f64>),
    Range { from: f64, to: f64, step: f64 },
}

impl TimeGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        match *self {
            TimeGrid::List(ref v) => Ok(v.clone()),
            TimeGrid::Range { from, to, step } => {
                if !(step > 0.0) || !(to >= from) || !(from > 0.0) {
                    return Err(invalid("t_b_ms", "range needs 0 < from <= to and step > 0"));
                }
                let n = ((to - from) / step + 1e-9).floor() as usize;
                Ok((0..=n).map(|k| from + k as f64 * step).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub n_trials: usize,
    pub t_b_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifySection {
    pub method: MethodSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub t_b_ms: TimeGrid,
    pub n_trials: usize,
    pub methods: Vec<MethodSpec>,
    #[serde(default = "unit_factor")]
    pub efficiency_factors: Vec<f64>,
}

fn unit_factor() -> Vec<f64> {
    vec![1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub t_b_ms: TimeGrid,
    pub n_trials: usize,
    pub repetitions: usize,
    /// Single-change method to compare; defaults to a single bright-to-dark
    /// change with the bright lifetime.
    #[serde(default)]
    pub simple: Option<MethodSpec>,
    /// Overrides the top-level parameters, e.g. with fitted lifetimes.
    #[serde(default)]
    pub params: Option<RateParams>,
}

impl CompareSection {
    pub fn simple_method(&self) -> MethodSpec {
        self.simple.clone().unwrap_or(MethodSpec::Simple {
            direction: Some(Transition::BrightToDark),
            tau_ms: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiPulseSection {
    pub t_b_ms: TimeGrid,
    pub n_trials: usize,
    pub method: MethodSpec,
    pub epsilon_pi: f64,
    /// Sub-bin width for this sweep; defaults to `params.t_sub_ms`.
    #[serde(default)]
    pub t_sub_ms: Option<f64>,
    #[serde(default)]
    pub cross_check_ms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    /// Consecutive sub-bins summed into one fitting window.
    #[serde(default = "one")]
    pub merge_bins: usize,
}

fn one() -> usize {
    1
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection { merge_bins: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    pub params: RateParams,
    #[serde(default)]
    pub simulate: Option<SimulateSection>,
    #[serde(default)]
    pub classify: Option<ClassifySection>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub compare: Option<CompareSection>,
    #[serde(default)]
    pub pi_pulse: Option<PiPulseSection>,
    #[serde(default)]
    pub fit: Option<FitSection>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            let msg = e.message().to_string();
            Error::Config(match line {
                Some(l) => format!("line {l}: {msg}"),
                None => msg,
            })
        })?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Version {
                found: cfg.version,
                expected: CONFIG_VERSION,
            });
        }
        cfg.params.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T> {
        s.as_ref()
            .ok_or_else(|| Error::Config(format!("missing [{name}] section")))
    }

    pub fn simulate_section(&self) -> Result<&SimulateSection> {
        Self::section(&self.simulate, "simulate")
    }

    pub fn classify_section(&self) -> Result<&ClassifySection> {
        Self::section(&self.classify, "classify")
    }

    pub fn compare_section(&self) -> Result<&CompareSection> {
        Self::section(&self.compare, "compare")
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec> {
        let s = Self::section(&self.sweep, "sweep")?;
        let spec = SweepSpec {
            params: self.params,
            t_b_ms: s.t_b_ms.values()?,
            n_trials: s.n_trials,
            seed: self.seed,
            methods: s.methods.clone(),
            efficiency_factors: s.efficiency_factors.clone(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn pi_pulse_spec(&self) -> Result<PiPulseSpec> {
        let s = Self::section(&self.pi_pulse, "pi_pulse")?;
        let params = match s.t_sub_ms {
            Some(t) => self.params.with_t_sub(t),
            None => self.params,
        };
        params.validate()?;
        Ok(PiPulseSpec {
            params,
            t_b_ms: s.t_b_ms.values()?,
            n_trials: s.n_trials,
            seed: self.seed,
            method: s.method.clone(),
            epsilon_pi: s.epsilon_pi,
            cross_check_ms: s.cross_check_ms.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"
version = 1
seed = 3

[params]
rate_bright_per_ms = 16.0
rate_dark_per_ms = 0.3
tau_bright_ms = 4.9
tau_dark_ms = 56.0
t_sub_ms = 0.1

[sweep]
t_b_ms = { from = 0.1, to = 3.0, step = 0.1 }
n_trials = 1000
methods = [{ method = "threshold" }, { method = "generalized" }]

[pi_pulse]
t_b_ms = [0.1, 0.2]
t_sub_ms = 0.0333333333333333
n_trials = 100
method = { method = "threshold", n_c = 1 }
epsilon_pi = 0.02
"#;

    #[test]
    fn parses_and_expands() {
        let cfg = RunConfig::from_toml(DOC).unwrap();
        let spec = cfg.sweep_spec().unwrap();
        assert_eq!(spec.t_b_ms.len(), 30);
        assert!((spec.t_b_ms[29] - 3.0).abs() < 1e-12);
        assert_eq!(spec.efficiency_factors, vec![1.0]);
        let pp = cfg.pi_pulse_spec().unwrap();
        assert!((pp.params.t_sub_ms - 0.1 / 3.0).abs() < 1e-12);
        assert!(cfg.compare_section().is_err());
    }

    #[test]
    fn echo_round_trips() {
        let cfg = RunConfig::from_toml(DOC).unwrap();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn errors_name_the_line() {
        let bad = DOC.replace("n_trials = 1000", "n_trials = \"many\"");
        match RunConfig::from_toml(&bad) {
            Err(Error::Config(m)) => assert!(m.starts_with("line 14"), "{m}"),
            other => panic!("{other:?}"),
        }
        let bad = DOC.replace("version = 1", "version = 9");
        assert!(matches!(
            RunConfig::from_toml(&bad),
            Err(Error::Version { found: 9, .. })
        ));
        let bad = DOC.replace("tau_dark_ms", "tau_dark");
        assert!(matches!(RunConfig::from_toml(&bad), Err(Error::Config(_))));
    }
}
