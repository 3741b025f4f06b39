//! Lifetime extraction from averaged fluorescence decay curves, the
//! closed-form population dynamics behind them, and the fluorescence rate
//! of the driven transition.

mod dynamics;
mod fit;
mod laser;

pub use dynamics::{
    expected_decay_parameters, mean_count_window, population_dynamics, RelaxationWeights,
};
pub use fit::{
    derive_lifetimes, fit_decay_curves, fit_decay_curves_with, DecayFit, FitOptions,
    LifetimeEstimate,
};
pub use laser::LaserPhysics;
