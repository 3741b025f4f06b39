use std::sync::atomic::{AtomicUsize, Ordering};

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Joint fit of `n_B(t) = a + b e^{-t/tau}` and `n_D(t) = a - c e^{-t/tau}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub tau_ms: f64,
    /// Root of the summed squared deviations over both series.
    pub residual: f64,
    pub evaluations: usize,
    /// An amplitude is indistinguishable from zero.
    pub degenerate: bool,
}

impl DecayFit {
    pub fn bright(&self, t_ms: f64) -> f64 {
        self.a + self.b * (-t_ms / self.tau_ms).exp()
    }

    pub fn dark(&self, t_ms: f64) -> f64 {
        self.a - self.c * (-t_ms / self.tau_ms).exp()
    }

    pub fn parameters(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.tau_ms]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_evaluations: usize,
    /// Stop once a restart improves the objective by less than this
    /// fraction.
    pub rel_tolerance: f64,
    /// Number of log-spaced starting relaxation times.
    pub tau_starts: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_evaluations: 10_000,
            rel_tolerance: 1e-12,
            tau_starts: 5,
        }
    }
}

/// Amplitudes below this fraction of `a` are treated as zero.
const DEGENERATE_AMPLITUDE: f64 = 1e-6;

struct Objective<'a> {
    bright: &'a [(f64, f64)],
    dark: &'a [(f64, f64)],
    calls: AtomicUsize,
}

impl Objective<'_> {
    fn sum_sq(&self, p: [f64; 4]) -> f64 {
        let [a, b, c, tau] = p;
        let sb: f64 = self
            .bright
            .iter()
            .map(|&(t, n)| (n - a - b * (-t / tau).exp()).powi(2))
            .sum();
        let sd: f64 = self
            .dark
            .iter()
            .map(|&(t, n)| (n - a + c * (-t / tau).exp()).powi(2))
            .sum();
        sb + sd
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

fn unpack(x: &[f64]) -> [f64; 4] {
    [x[0].exp(), x[1].exp(), x[2].exp(), x[3].exp()]
}

impl CostFunction for Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let v = self.sum_sq(unpack(x));
        Ok(if v.is_finite() { v } else { f64::MAX })
    }
}

fn check_series(name: &'static str, s: &[(f64, f64)]) -> Result<()> {
    if s.len() < 3 {
        return Err(invalid(name, "need at least 3 points"));
    }
    if s.iter().any(|&(t, n)| !t.is_finite() || !n.is_finite()) {
        return Err(invalid(name, "non-finite value"));
    }
    Ok(())
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, k) = v.fold((0.0, 0usize), |(s, k), x| (s + x, k + 1));
    s / k as f64
}

/// Least-squares `(a, b, c)` for a fixed `tau`, clamped positive.
fn linear_amplitudes(bright: &[(f64, f64)], dark: &[(f64, f64)], tau: f64, floor: f64) -> [f64; 3] {
    // model: n = a*1 + b*e (bright rows) and n = a*1 - c*e (dark rows)
    let mut ata = [[0.0; 3]; 3];
    let mut atb = [0.0; 3];
    let rows = bright
        .iter()
        .map(|&(t, n)| ([1.0, (-t / tau).exp(), 0.0], n))
        .chain(
            dark.iter()
                .map(|&(t, n)| ([1.0, 0.0, -(-t / tau).exp()], n)),
        );
    for (r, n) in rows {
        for i in 0..3 {
            atb[i] += r[i] * n;
            for j in 0..3 {
                ata[i][j] += r[i] * r[j];
            }
        }
    }
    let det3 = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det3(&ata);
    let mut out = [floor; 3];
    if d.abs() > 1e-300 {
        for (k, slot) in out.iter_mut().enumerate() {
            let mut m = ata;
            for i in 0..3 {
                m[i][k] = atb[i];
            }
            *slot = (det3(&m) / d).max(floor);
        }
    }
    out
}

/// Moment-based start: `a` from the tail means, `tau` from a log-linear
/// regression of the bright excess, `b` and `c` from the first points.
fn warm_start(bright: &[(f64, f64)], dark: &[(f64, f64)], span: f64, floor: f64) -> [f64; 4] {
    let tail = |s: &[(f64, f64)]| {
        let k = s.len().div_ceil(3);
        s[s.len() - k..].iter().map(|p| p.1).collect::<Vec<_>>()
    };
    let a = mean(tail(bright).into_iter().chain(tail(dark))).max(floor);
    let pts: Vec<(f64, f64)> = bright
        .iter()
        .filter(|&&(_, n)| n - a > floor)
        .map(|&(t, n)| (t, (n - a).ln()))
        .collect();
    let mut tau = span / 3.0;
    if pts.len() >= 2 {
        let mt = mean(pts.iter().map(|p| p.0));
        let my = mean(pts.iter().map(|p| p.1));
        let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
        if sxx > 0.0 && sxy < 0.0 {
            tau = -sxx / sxy;
        }
    }
    let (t_b, n_b) = bright[0];
    let (t_d, n_d) = dark[0];
    [
        a,
        ((n_b - a) * (t_b / tau).exp()).max(floor),
        ((a - n_d) * (t_d / tau).exp()).max(floor),
        tau,
    ]
}

fn simplex_around(x: &[f64; 4], step: f64) -> Vec<Vec<f64>> {
    let mut s = vec![x.to_vec()];
    for i in 0..4 {
        let mut v = x.to_vec();
        v[i] += step;
        s.push(v);
    }
    s
}

/// One simplex descent from `x` (log parameters); returns the best point.
fn descend(
    obj: &Objective<'_>,
    x: [f64; 4],
    step: f64,
    max_iters: u64,
    sd_tol: f64,
) -> ([f64; 4], f64) {
    let start_cost = obj.cost(&x.to_vec()).unwrap_or(f64::MAX);
    let solver = match NelderMead::new(simplex_around(&x, step)).with_sd_tolerance(sd_tol) {
        Ok(s) => s,
        Err(_) => return (x, start_cost),
    };
    let run = Executor::new(
        Objective {
            bright: obj.bright,
            dark: obj.dark,
            calls: AtomicUsize::new(0),
        },
        solver,
    )
    .configure(|st| st.max_iters(max_iters))
    .run();
    match run {
        Ok(res) => {
            obj.calls.fetch_add(
                res.problem.problem.as_ref().map_or(0, |p| p.calls()),
                Ordering::Relaxed,
            );
            let state = res.state();
            match state.get_best_param() {
                Some(p) if state.get_best_cost() < start_cost => {
                    ([p[0], p[1], p[2], p[3]], state.get_best_cost())
                }
                _ => (x, start_cost),
            }
        }
        Err(_) => (x, start_cost),
    }
}

/// Fits both decay curves jointly. Series are `(t_ms, mean count)`.
pub fn fit_decay_curves(bright: &[(f64, f64)], dark: &[(f64, f64)]) -> Result<DecayFit> {
    fit_decay_curves_with(bright, dark, &FitOptions::default())
}

pub fn fit_decay_curves_with(
    bright: &[(f64, f64)],
    dark: &[(f64, f64)],
    opts: &FitOptions,
) -> Result<DecayFit> {
    check_series("bright series", bright)?;
    check_series("dark series", dark)?;
    if opts.max_evaluations == 0 || opts.tau_starts == 0 || !(opts.rel_tolerance >= 0.0) {
        return Err(invalid(
            "fit options",
            "budget, starts and tolerance must be positive",
        ));
    }
    let (t_lo, t_hi) = bright
        .iter()
        .chain(dark)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(t, _)| {
            (lo.min(t), hi.max(t))
        });
    let span = (t_hi - t_lo).max(f64::MIN_POSITIVE);
    let scale: f64 = bright
        .iter()
        .chain(dark)
        .map(|p| p.1 * p.1)
        .sum::<f64>()
        .max(f64::MIN_POSITIVE);
    let level = (scale / (bright.len() + dark.len()) as f64).sqrt();
    let floor = level * 1e-12 + f64::MIN_POSITIVE;
    let obj = Objective {
        bright,
        dark,
        calls: AtomicUsize::new(0),
    };
    let sd_tol = scale * 1e-15;

    let mut starts = vec![warm_start(bright, dark, span, floor)];
    let (lo, hi) = ((span / 50.0).ln(), (span * 5.0).ln());
    for k in 0..opts.tau_starts {
        let f = if opts.tau_starts == 1 {
            0.5
        } else {
            k as f64 / (opts.tau_starts - 1) as f64
        };
        let tau = (lo + f * (hi - lo)).exp();
        let [a, b, c] = linear_amplitudes(bright, dark, tau, floor);
        starts.push([a, b, c, tau]);
    }
    // a simplex iteration costs at most 2 + 4 evaluations (shrink step)
    const WORST_PER_ITER: usize = 6;
    let per_start = (opts.max_evaluations / (2 * WORST_PER_ITER * starts.len())) as u64;
    let first = starts[0].map(f64::ln);
    let mut best = (first, obj.sum_sq(starts[0]));
    for s in &starts {
        if per_start == 0 {
            break;
        }
        let x = s.map(f64::ln);
        let r = descend(&obj, x, 0.1, per_start, sd_tol);
        if r.1 < best.1 {
            best = r;
        }
    }

    let mut converged = false;
    let mut step = 0.05;
    loop {
        if best.1 <= scale * 1e-28 {
            converged = true;
            break;
        }
        let iters = (opts.max_evaluations.saturating_sub(obj.calls() + 6) / WORST_PER_ITER) as u64;
        if iters == 0 {
            break;
        }
        let r = descend(&obj, best.0, step, iters, sd_tol * 1e-6);
        let improvement = best.1 - r.1;
        if r.1 < best.1 {
            best = r;
        }
        if improvement <= opts.rel_tolerance * best.1 {
            converged = true;
            break;
        }
        step = (step * 0.5).max(1e-4);
    }
    let [a, b, c, tau] = unpack(&best.0);
    let residual = best.1.sqrt();
    if !converged {
        return Err(Error::NoConvergence {
            evaluations: obj.calls(),
            residual,
            best: [a, b, c, tau],
        });
    }
    Ok(DecayFit {
        a,
        b,
        c,
        tau_ms: tau,
        residual,
        evaluations: obj.calls(),
        degenerate: b < DEGENERATE_AMPLITUDE * a || c < DEGENERATE_AMPLITUDE * a,
    })
}

/// Bright and dark lifetimes from the fitted amplitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifetimeEstimate {
    /// `(b/c) / (1 + b/c)`, equal to `tau_D / (tau_B + tau_D)`.
    pub a: f64,
    /// `1 - a`.
    pub b: f64,
    pub tau_bright_ms: f64,
    pub tau_dark_ms: f64,
}

pub fn derive_lifetimes(fit: &DecayFit) -> Result<LifetimeEstimate> {
    if !(fit.c > 0.0) {
        return Err(Error::DegenerateFit(
            "dark amplitude c is zero; b/c undefined".into(),
        ));
    }
    if !(fit.b > 0.0) || !(fit.tau_ms > 0.0) {
        return Err(Error::DegenerateFit(
            "bright amplitude and tau must be positive".into(),
        ));
    }
    let ratio = fit.b / fit.c;
    let a = ratio / (1.0 + ratio);
    let b = 1.0 / (1.0 + ratio);
    Ok(LifetimeEstimate {
        a,
        b,
        tau_bright_ms: fit.tau_ms / a,
        tau_dark_ms: fit.tau_ms / b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    type Series = Vec<(f64, f64)>;

    fn synth(p: [f64; 4], n: usize, dt: f64) -> (Series, Series) {
        let [a, b, c, tau] = p;
        let ts: Vec<f64> = (1..=n).map(|j| j as f64 * dt).collect();
        (
            ts.iter().map(|&t| (t, a + b * (-t / tau).exp())).collect(),
            ts.iter().map(|&t| (t, a - c * (-t / tau).exp())).collect(),
        )
    }

    fn fit_of(a: f64, b: f64, c: f64, tau: f64) -> DecayFit {
        DecayFit {
            a,
            b,
            c,
            tau_ms: tau,
            residual: 0.0,
            evaluations: 0,
            degenerate: false,
        }
    }

    #[test]
    fn lifetimes_from_fit() {
        let l = derive_lifetimes(&fit_of(0.515, 4.68, 0.434, 4.50)).unwrap();
        assert!((l.tau_bright_ms / 4.92 - 1.0).abs() < 5e-3, "{l:?}");
        assert!((l.tau_dark_ms / 53.1 - 1.0).abs() < 5e-3, "{l:?}");
        assert!((l.a * l.tau_bright_ms - 4.5).abs() < 1e-12);
        assert!((l.b * l.tau_dark_ms - 4.5).abs() < 1e-12);
        assert!((l.a / l.b - 4.68 / 0.434).abs() < 1e-12);
    }

    #[test]
    fn symmetric_amplitudes() {
        let l = derive_lifetimes(&fit_of(1.0, 2.0, 2.0, 3.0)).unwrap();
        assert_eq!(l.a, 0.5);
        assert_eq!(l.tau_bright_ms, 6.0);
        assert_eq!(l.tau_dark_ms, 6.0);
        assert!(derive_lifetimes(&fit_of(1.0, 2.0, 0.0, 3.0)).is_err());
    }

    #[test]
    fn noiseless_round_trip() {
        let truth = [0.515, 4.68, 0.434, 4.50];
        let (b, d) = synth(truth, 30, 1.0 / 3.0);
        let f = fit_decay_curves(&b, &d).unwrap();
        for (x, y) in f.parameters().iter().zip(truth) {
            assert!((x / y - 1.0).abs() < 1e-6, "{f:?}");
        }
        assert!(!f.degenerate);
        assert!(f.evaluations <= 10_000);
    }

    #[test]
    fn flat_dark_series_is_degenerate() {
        let (b, _) = synth([0.5, 3.0, 0.0, 2.0], 20, 0.5);
        let d: Vec<_> = b.iter().map(|&(t, _)| (t, 0.5)).collect();
        let f = fit_decay_curves(&b, &d).unwrap();
        assert!(f.degenerate, "{f:?}");
        assert!((f.tau_ms / 2.0 - 1.0).abs() < 1e-4);
    }

    #[test]
    fn tiny_budget_reports_best_iterate() {
        let (b, d) = synth([0.515, 4.68, 0.434, 4.50], 30, 1.0 / 3.0);
        let opts = FitOptions {
            max_evaluations: 20,
            ..FitOptions::default()
        };
        match fit_decay_curves_with(&b, &d, &opts) {
            Err(Error::NoConvergence {
                evaluations, best, ..
            }) => {
                assert!(evaluations <= 20);
                assert!(best.iter().all(|v| *v > 0.0));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn short_series_rejected() {
        let s = [(0.1, 1.0), (0.2, 0.9)];
        assert!(fit_decay_curves(&s, &s).is_err());
    }
}
