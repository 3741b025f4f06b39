//! Error-rate evaluation, threshold optimization and parameter sweeps.

mod config;
mod optimize;
mod pulse;
mod report;
mod sweep;

pub use config::{
    ClassifySection, CompareSection, FitSection, PiPulseSection, RunConfig, SimulateSection,
    SweepSection, TimeGrid, CONFIG_VERSION,
};
pub use optimize::{
    default_grid, optimize_on_histograms, optimize_threshold, ThresholdFamily, ThresholdSearch,
    TotalHistograms,
};
pub use pulse::{
    pi_pulse_predictions, pi_pulse_sweep, simulate_pi_pulse, PiPulsePoint, PiPulseRow, PiPulseSpec,
};
pub use report::{evaluate, evaluate_by_prefix, ErrorReport, Tally};
pub use sweep::{
    bins_for, compare_methods, efficiency_sweep, minimum, run_sweep, sweep_methods, Comparison,
    ComparisonRun, EfficiencyPoint, MethodSpec, PairedEnsembles, SweepRow, SweepSpec,
};
