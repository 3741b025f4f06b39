//! Measurement-time sweeps, collection-efficiency scaling and the
//! three-way method comparison.

use serde::{Deserialize, Serialize};

use super::optimize::{default_grid, optimize_on_histograms, ThresholdFamily, TotalHistograms};
use super::report::{detector_params, evaluate_by_prefix, ErrorReport};
use crate::classify::{Detector, DoubleThreshold, SimpleTimeResolved};
use crate::error::{invalid, Result};
use crate::model::{bins_in, IonState, RateParams};
use crate::photon::Transition;
use crate::sim::{simulate_ensemble, SimConfig, Trajectory};
use crate::table::ObservationTable;

/// A discrimination method as named in configs and reports. Thresholds set
/// to `None` are optimized per measurement time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodSpec {
    Threshold {
        #[serde(default)]
        n_c: Option<u64>,
    },
    DoubleThreshold {
        n_dark: u64,
        #[serde(default)]
        n_bright: Option<u64>,
    },
    Simple {
        #[serde(default)]
        direction: Option<Transition>,
        #[serde(default)]
        tau_ms: Option<f64>,
    },
    Generalized,
}

impl MethodSpec {
    pub fn name(&self) -> &'static str {
        match self {
            MethodSpec::Threshold { .. } => "threshold",
            MethodSpec::DoubleThreshold { .. } => "double_threshold",
            MethodSpec::Simple { .. } => "simple",
            MethodSpec::Generalized => "generalized",
        }
    }

    /// The single-change method. Without an explicit direction the dark
    /// state decays with the dark lifetime.
    pub fn simple_detector(
        params: &RateParams,
        direction: Option<Transition>,
        tau_ms: Option<f64>,
    ) -> Result<SimpleTimeResolved> {
        let direction = direction.unwrap_or(Transition::DarkToBright);
        let tau = tau_ms.unwrap_or_else(|| params.tau(direction.from_state()));
        SimpleTimeResolved::new(*params, tau, direction)
    }

    /// Concrete detector; fails for thresholds left to the optimizer.
    pub fn detector<'a>(
        &self,
        params: &RateParams,
        table: &'a ObservationTable,
    ) -> Result<Detector<'a>> {
        Ok(match self {
            MethodSpec::Threshold { n_c: Some(n_c) } => Detector::Threshold { n_c: *n_c },
            MethodSpec::DoubleThreshold {
                n_dark,
                n_bright: Some(n_bright),
            } => Detector::DoubleThreshold(DoubleThreshold::new(*n_dark, *n_bright)?),
            MethodSpec::Simple { direction, tau_ms } => {
                Detector::SimpleTimeResolved(Self::simple_detector(params, *direction, *tau_ms)?)
            }
            MethodSpec::Generalized => Detector::generalized(table),
            _ => {
                return Err(invalid(
                    "method",
                    format!("{} needs a fixed threshold here", self.name()),
                ))
            }
        })
    }
}

/// Bright and dark ensembles simulated with the same settings.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedEnsembles {
    pub params: RateParams,
    pub bright: Vec<Trajectory>,
    pub dark: Vec<Trajectory>,
}

impl PairedEnsembles {
    pub fn simulate(params: RateParams, t_b_ms: f64, n_trials: usize, seed: u64) -> Result<Self> {
        let cfg = SimConfig {
            n_trials,
            t_b_ms,
            seed,
            params,
        };
        Ok(PairedEnsembles {
            params,
            bright: simulate_ensemble(&cfg, IonState::Bright)?,
            dark: simulate_ensemble(&cfg, IonState::Dark)?,
        })
    }

    pub fn bins(&self) -> usize {
        self.bright.first().map_or(0, |t| t.len())
    }
}

/// Converts measurement times to ascending sub-bin counts.
pub fn bins_for(t_b_ms: &[f64], t_sub_ms: f64) -> Result<Vec<usize>> {
    let mut bins = t_b_ms
        .iter()
        .map(|&t| bins_in(t, t_sub_ms))
        .collect::<Result<Vec<_>>>()?;
    if bins.is_empty() {
        return Err(invalid("t_b_ms", "need at least one measurement time"));
    }
    bins.sort_unstable();
    bins.dedup();
    Ok(bins)
}

/// Error reports for every method at every prefix length in `bins`.
pub fn sweep_methods(
    ensembles: &PairedEnsembles,
    bins: &[usize],
    methods: &[MethodSpec],
    table: &ObservationTable,
) -> Result<Vec<ErrorReport>> {
    let t_sub = ensembles.params.t_sub_ms;
    let mut rows = Vec::new();
    let mut hist = None;
    for method in methods {
        let family = match method {
            MethodSpec::Threshold { n_c: None } => Some(ThresholdFamily::Single),
            MethodSpec::DoubleThreshold {
                n_dark,
                n_bright: None,
            } => Some(ThresholdFamily::Double { n_dark: *n_dark }),
            _ => None,
        };
        if let Some(family) = family {
            let h: &TotalHistograms = match &hist {
                Some(h) => h,
                None => hist.insert(TotalHistograms::build(
                    &ensembles.bright,
                    &ensembles.dark,
                    bins,
                )?),
            };
            let grid = default_grid(h);
            for prefix in 0..bins.len() {
                rows.push(optimize_on_histograms(h, prefix, family, &grid)?.best);
            }
            continue;
        }
        let det = method.detector(&ensembles.params, table)?;
        let params = detector_params(&det);
        let tallies = evaluate_by_prefix(&ensembles.bright, &ensembles.dark, &det, bins)?;
        for (&b, tally) in bins.iter().zip(tallies) {
            let mut r =
                ErrorReport::from_tally(det.name(), params.clone(), b as f64 * t_sub, tally);
            if let Detector::Threshold { n_c } = det {
                r.threshold = Some(n_c);
            }
            rows.push(r);
        }
    }
    Ok(rows)
}

/// Measurement-time sweep over several methods and efficiency factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub params: RateParams,
    pub t_b_ms: Vec<f64>,
    pub n_trials: usize,
    pub seed: u64,
    pub methods: Vec<MethodSpec>,
    /// Photon rates are multiplied by each factor; lifetimes are kept.
    pub efficiency_factors: Vec<f64>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<Vec<usize>> {
        self.params.validate()?;
        if self.n_trials == 0 {
            return Err(invalid("n_trials", "must be >= 1"));
        }
        if self.efficiency_factors.is_empty() || self.efficiency_factors.iter().any(|&r| !(r > 0.0))
        {
            return Err(invalid(
                "efficiency_factors",
                "need at least one factor, all > 0",
            ));
        }
        if self.methods.is_empty() {
            return Err(invalid("methods", "need at least one method"));
        }
        bins_for(&self.t_b_ms, self.params.t_sub_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub efficiency_factor: f64,
    pub report: ErrorReport,
}

pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let bins = spec.validate()?;
    let max_bins = *bins.last().expect("non-empty");
    let mut out = Vec::new();
    for &r in &spec.efficiency_factors {
        let params = spec.params.with_efficiency(r);
        let table = ObservationTable::with_defaults(params)?;
        let ens = PairedEnsembles::simulate(
            params,
            max_bins as f64 * params.t_sub_ms,
            spec.n_trials,
            spec.seed,
        )?;
        for report in sweep_methods(&ens, &bins, &spec.methods, &table)? {
            out.push(SweepRow {
                efficiency_factor: r,
                report,
            });
        }
    }
    Ok(out)
}

/// Lowest-error row, ties going to the shorter measurement time.
pub fn minimum(rows: &[ErrorReport]) -> Option<&ErrorReport> {
    rows.iter()
        .fold(None, |best: Option<&ErrorReport>, r| match best {
            Some(b) if b.epsilon_or_inf() <= r.epsilon_or_inf() => Some(b),
            _ => Some(r),
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyPoint {
    pub efficiency_factor: f64,
    pub threshold: ErrorReport,
    pub time_resolved: ErrorReport,
    /// `eps_threshold - eps_time_resolved`, both minimized over `t_b`.
    pub advantage: f64,
}

/// Minimum errors of the optimized threshold and the hidden-Markov method
/// for each efficiency factor of `spec`.
pub fn efficiency_sweep(spec: &SweepSpec) -> Result<Vec<EfficiencyPoint>> {
    let spec = SweepSpec {
        methods: vec![MethodSpec::Threshold { n_c: None }, MethodSpec::Generalized],
        ..spec.clone()
    };
    let rows = run_sweep(&spec)?;
    let mut out = Vec::new();
    for &r in &spec.efficiency_factors {
        let pick = |name: &str| {
            let subset: Vec<ErrorReport> = rows
                .iter()
                .filter(|row| row.efficiency_factor == r && row.report.method == name)
                .map(|row| row.report.clone())
                .collect();
            minimum(&subset).cloned()
        };
        let (Some(th), Some(tr)) = (pick("threshold"), pick("generalized")) else {
            continue;
        };
        out.push(EfficiencyPoint {
            efficiency_factor: r,
            advantage: th.epsilon_or_inf() - tr.epsilon_or_inf(),
            threshold: th,
            time_resolved: tr,
        });
    }
    Ok(out)
}

/// Per-repetition minima of the three-way comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRun {
    pub seed: u64,
    pub threshold: ErrorReport,
    pub simple: ErrorReport,
    pub generalized: ErrorReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub runs: Vec<ComparisonRun>,
    /// Mean and sample standard deviation of the per-run minima.
    pub threshold: (f64, f64),
    pub simple: (f64, f64),
    pub generalized: (f64, f64),
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Repeats a sweep `repetitions` times (seeds `seed, seed+1, ...`) and
/// records the minimum over `t_b` of threshold, single-change and
/// hidden-Markov discrimination.
pub fn compare_methods(
    params: RateParams,
    t_b_ms: &[f64],
    n_trials: usize,
    repetitions: usize,
    seed: u64,
    simple: &MethodSpec,
) -> Result<Comparison> {
    if repetitions == 0 {
        return Err(invalid("repetitions", "must be >= 1"));
    }
    if !matches!(simple, MethodSpec::Simple { .. }) {
        return Err(invalid("simple", "expected a single-change method"));
    }
    let methods = [
        MethodSpec::Threshold { n_c: None },
        simple.clone(),
        MethodSpec::Generalized,
    ];
    let table = ObservationTable::with_defaults(params)?;
    let bins = bins_for(t_b_ms, params.t_sub_ms)?;
    let max_bins = *bins.last().expect("non-empty");
    let mut runs = Vec::with_capacity(repetitions);
    for rep in 0..repetitions as u64 {
        let s = seed.wrapping_add(rep);
        let ens =
            PairedEnsembles::simulate(params, max_bins as f64 * params.t_sub_ms, n_trials, s)?;
        let rows = sweep_methods(&ens, &bins, &methods, &table)?;
        let pick = |name: &str| {
            let subset: Vec<ErrorReport> =
                rows.iter().filter(|r| r.method == name).cloned().collect();
            minimum(&subset).cloned().expect("non-empty sweep")
        };
        runs.push(ComparisonRun {
            seed: s,
            threshold: pick("threshold"),
            simple: pick("simple"),
            generalized: pick("generalized"),
        });
    }
    let stat = |f: fn(&ComparisonRun) -> &ErrorReport| {
        mean_sd(
            &runs
                .iter()
                .map(|r| f(r).epsilon_or_inf())
                .collect::<Vec<_>>(),
        )
    };
    Ok(Comparison {
        threshold: stat(|r| &r.threshold),
        simple: stat(|r| &r.simple),
        generalized: stat(|r| &r.generalized),
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_spec_from_toml() {
        #[derive(Deserialize)]
        struct Doc {
            methods: Vec<MethodSpec>,
        }
        let doc: Doc = toml::from_str(
            r#"
            methods = [
              { method = "threshold" },
              { method = "threshold", n_c = 3 },
              { method = "double_threshold", n_dark = 0, n_bright = 4 },
              { method = "simple", direction = "BrightToDark" },
              { method = "generalized" },
            ]
            "#,
        )
        .unwrap();
        assert_eq!(doc.methods[0], MethodSpec::Threshold { n_c: None });
        assert_eq!(
            doc.methods[3],
            MethodSpec::Simple {
                direction: Some(Transition::BrightToDark),
                tau_ms: None
            }
        );
        assert_eq!(doc.methods.len(), 5);
    }

    #[test]
    fn unit_factor_matches_plain_sweep() {
        let spec = SweepSpec {
            params: RateParams::YB171,
            t_b_ms: vec![0.2, 0.5],
            n_trials: 2000,
            seed: 5,
            methods: vec![MethodSpec::Threshold { n_c: None }, MethodSpec::Generalized],
            efficiency_factors: vec![1.0],
        };
        let rows = run_sweep(&spec).unwrap();
        let table = ObservationTable::with_defaults(RateParams::YB171).unwrap();
        let ens = PairedEnsembles::simulate(RateParams::YB171, 0.5, 2000, 5).unwrap();
        let plain = sweep_methods(&ens, &[2, 5], &spec.methods, &table).unwrap();
        assert_eq!(
            rows.iter().map(|r| r.report.clone()).collect::<Vec<_>>(),
            plain
        );
    }

    #[test]
    fn rejects_bad_specs() {
        let spec = SweepSpec {
            params: RateParams::YB171,
            t_b_ms: vec![0.25],
            n_trials: 10,
            seed: 0,
            methods: vec![MethodSpec::Generalized],
            efficiency_factors: vec![1.0],
        };
        assert!(spec.validate().is_err());
        let spec = SweepSpec {
            t_b_ms: vec![0.2],
            efficiency_factors: vec![0.0],
            ..spec
        };
        assert!(spec.validate().is_err());
    }
}
