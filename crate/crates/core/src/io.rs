//! CSV and JSON interchange: ensembles, per-trial decisions, error reports
//! and decay fits.
//!
//! CSV numbers use six significant digits. Likelihood columns are written in
//! scientific notation because they routinely fall below `1e-100`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::classify::{Classification, Decision};
use crate::error::{Error, Result};
use crate::estimate::{DecayFit, LifetimeEstimate};
use crate::harness::{ErrorReport, SweepRow};
use crate::model::IonState;
use crate::sim::Trajectory;

/// `x` with six significant digits in plain decimal notation.
pub fn fmt6(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if x == 0.0 {
        return "0".into();
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (5 - mag).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // rounding can carry into a new leading digit, e.g. 9.999999 -> 10.00000
    let carried = s
        .parse::<f64>()
        .is_ok_and(|r| r.abs() >= 10f64.powi(mag + 1));
    if carried && decimals > 0 {
        format!("{x:.prec$}", prec = decimals - 1)
    } else {
        s
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt6).unwrap_or_default()
}

fn data_err(e: &csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Data {
        line,
        reason: match e.kind() {
            csv::ErrorKind::UnequalLengths {
                expected_len, len, ..
            } => {
                format!("expected {expected_len} fields, found {len}")
            }
            _ => e.to_string(),
        },
    }
}

fn csv_write_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io.to_string()),
        other => Error::Io(format!("{other:?}")),
    }
}

/// Writes `trial,initial,n_1,...,n_M`. All trajectories must have the same
/// number of sub-bins.
pub fn write_ensemble_csv<W: Write>(out: W, trajectories: &[Trajectory]) -> Result<()> {
    let m = trajectories.first().map_or(0, |t| t.len());
    if trajectories.iter().any(|t| t.len() != m) {
        return Err(Error::Config("ensemble rows have different lengths".into()));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["trial".to_string(), "initial".to_string()];
    header.extend((1..=m).map(|j| format!("n_{j}")));
    w.write_record(&header).map_err(csv_write_err)?;
    let mut row = Vec::with_capacity(m + 2);
    for (i, t) in trajectories.iter().enumerate() {
        row.clear();
        row.push(i.to_string());
        row.push(t.initial.label().to_string());
        row.extend(t.counts.iter().map(|n| n.to_string()));
        w.write_record(&row).map_err(csv_write_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `trial,initial,change_times_ms` with times separated by `;`.
pub fn write_change_times_csv<W: Write>(out: W, trajectories: &[Trajectory]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trial", "initial", "change_times_ms"])
        .map_err(csv_write_err)?;
    for (i, t) in trajectories.iter().enumerate() {
        let times: Vec<String> = t.change_times.iter().map(|&c| format!("{c:e}")).collect();
        w.write_record([
            i.to_string(),
            t.initial.label().to_string(),
            times.join(";"),
        ])
        .map_err(csv_write_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an ensemble CSV. The state-change history is unknown, so
/// `change_times` is empty unless a sidecar is merged with
/// [`read_change_times_csv`].
pub fn read_ensemble_csv<R: Read>(input: R, t_sub_ms: f64) -> Result<Vec<Trajectory>> {
    if !(t_sub_ms > 0.0) {
        return Err(Error::Config("t_sub_ms must be > 0".into()));
    }
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = r.headers().map_err(|e| data_err(&e))?.clone();
    if header.len() < 3 || &header[0] != "trial" || &header[1] != "initial" {
        return Err(Error::Data {
            line: 1,
            reason: "header must be `trial,initial,n_1,...,n_M`".into(),
        });
    }
    let m = header.len() - 2;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| data_err(&e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |reason: String| Error::Data { line, reason };
        rec[0]
            .parse::<u64>()
            .map_err(|_| bad(format!("trial `{}` is not a non-negative integer", &rec[0])))?;
        let initial = IonState::from_label(&rec[1])
            .ok_or_else(|| bad(format!("initial state `{}` is not B or D", &rec[1])))?;
        let counts = (2..rec.len())
            .map(|k| {
                rec[k].parse::<u32>().map_err(|_| {
                    bad(format!(
                        "count `{}` in column {} is not a non-negative integer",
                        &rec[k],
                        k + 1
                    ))
                })
            })
            .collect::<Result<Vec<u32>>>()?;
        debug_assert_eq!(counts.len(), m);
        out.push(Trajectory {
            initial,
            change_times: Vec::new(),
            counts,
            t_b_ms: m as f64 * t_sub_ms,
            t_sub_ms,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    Ok(out)
}

/// Fills `change_times` from a sidecar written by [`write_change_times_csv`].
pub fn read_change_times_csv<R: Read>(input: R, trajectories: &mut [Trajectory]) -> Result<()> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    for rec in r.records() {
        let rec = rec.map_err(|e| data_err(&e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |reason: String| Error::Data { line, reason };
        let i: usize = rec[0]
            .parse()
            .map_err(|_| bad(format!("bad trial `{}`", &rec[0])))?;
        let traj = trajectories
            .get_mut(i)
            .ok_or_else(|| bad(format!("trial {i} not in the ensemble")))?;
        if IonState::from_label(&rec[1]) != Some(traj.initial) {
            return Err(bad(format!("initial state does not match trial {i}")));
        }
        traj.change_times = rec[2]
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| bad(format!("bad change time `{s}`")))
            })
            .collect::<Result<_>>()?;
    }
    Ok(())
}

/// Bright and dark sub-ensembles of a mixed ensemble.
pub fn split_by_initial(trajectories: Vec<Trajectory>) -> (Vec<Trajectory>, Vec<Trajectory>) {
    trajectories
        .into_iter()
        .partition(|t| t.initial == IonState::Bright)
}

/// Mean count per window for trajectories prepared in `initial`, as
/// `(t_end_ms, mean)` pairs. Consecutive groups of `merge` sub-bins form
/// one window; a trailing partial group is dropped.
pub fn mean_series(
    trajectories: &[Trajectory],
    initial: IonState,
    merge: usize,
) -> Result<Vec<(f64, f64)>> {
    if merge == 0 {
        return Err(Error::Config("merge must be >= 1".into()));
    }
    let chosen: Vec<&Trajectory> = trajectories
        .iter()
        .filter(|t| t.initial == initial)
        .collect();
    let first = chosen.first().ok_or(Error::EmptyEnsemble)?;
    let windows = first.len() / merge;
    let mut sums = vec![0u64; windows];
    for t in &chosen {
        for (w, chunk) in sums.iter_mut().zip(t.counts.chunks_exact(merge)) {
            *w += chunk.iter().map(|&n| n as u64).sum::<u64>();
        }
    }
    let n = chosen.len() as f64;
    let dt = merge as f64 * first.t_sub_ms;
    Ok(sums
        .iter()
        .enumerate()
        .map(|(j, &s)| ((j + 1) as f64 * dt, s as f64 / n))
        .collect())
}

/// Writes `trial,initial,decision,p_B,p_D`.
pub fn write_decisions_csv<W: Write>(
    out: W,
    trajectories: &[Trajectory],
    results: &[Classification],
) -> Result<()> {
    if trajectories.len() != results.len() {
        return Err(Error::Config(
            "one classification per trajectory expected".into(),
        ));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trial", "initial", "decision", "p_B", "p_D"])
        .map_err(csv_write_err)?;
    for (i, (t, c)) in trajectories.iter().zip(results).enumerate() {
        let (pb, pd) = match &c.likelihoods {
            Some(l) => (
                format!("{:.5e}", l.p_bright()),
                format!("{:.5e}", l.p_dark()),
            ),
            None => (String::new(), String::new()),
        };
        w.write_record([
            i.to_string(),
            t.initial.label().to_string(),
            c.decision.label().to_string(),
            pb,
            pd,
        ])
        .map_err(csv_write_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the `trial,initial,decision` columns of a decisions CSV.
pub fn read_decisions_csv<R: Read>(input: R) -> Result<Vec<(IonState, Decision)>> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| data_err(&e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |reason: String| Error::Data { line, reason };
        let s = IonState::from_label(&rec[1])
            .ok_or_else(|| bad(format!("bad initial `{}`", &rec[1])))?;
        let d = Decision::from_label(&rec[2])
            .ok_or_else(|| bad(format!("bad decision `{}`", &rec[2])))?;
        out.push((s, d));
    }
    Ok(out)
}

pub const REPORT_HEADER: [&str; 16] = [
    "efficiency_factor",
    "method",
    "params",
    "t_b_ms",
    "epsilon_bright",
    "epsilon_dark",
    "epsilon",
    "std_error",
    "n_r",
    "threshold",
    "correct_b",
    "wrong_b",
    "ignored_b",
    "correct_d",
    "wrong_d",
    "ignored_d",
];

fn report_record(r: f64, e: &ErrorReport) -> Vec<String> {
    let t = &e.tally;
    vec![
        fmt6(r),
        e.method.clone(),
        e.params.clone(),
        fmt6(e.t_b_ms),
        fmt_opt(e.epsilon_bright),
        fmt_opt(e.epsilon_dark),
        fmt_opt(e.epsilon),
        fmt_opt(e.std_error),
        fmt6(e.n_r),
        e.threshold.map(|x| x.to_string()).unwrap_or_default(),
        t.correct[0].to_string(),
        t.wrong[0].to_string(),
        t.ignored[0].to_string(),
        t.correct[1].to_string(),
        t.wrong[1].to_string(),
        t.ignored[1].to_string(),
    ]
}

/// Error reports as plot-ready CSV.
pub fn write_reports_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER).map_err(csv_write_err)?;
    for row in rows {
        w.write_record(report_record(row.efficiency_factor, &row.report))
            .map_err(csv_write_err)?;
    }
    w.flush()?;
    Ok(())
}

pub const FIT_FORMAT: &str = "qubit-readout/decay-fit";
pub const FIT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub format: String,
    pub version: u32,
    pub fit: DecayFit,
    /// Absent when the fit is degenerate.
    pub lifetimes: Option<LifetimeEstimate>,
    /// Window width of the fitted series.
    pub window_ms: f64,
    pub points: usize,
}

impl FitDocument {
    pub fn new(
        fit: DecayFit,
        lifetimes: Option<LifetimeEstimate>,
        window_ms: f64,
        points: usize,
    ) -> Self {
        FitDocument {
            format: FIT_FORMAT.into(),
            version: FIT_VERSION,
            fit,
            lifetimes,
            window_ms,
            points,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: FitDocument = serde_json::from_str(s)?;
        if doc.format != FIT_FORMAT {
            return Err(Error::Data {
                line: 1,
                reason: format!("unexpected format `{}`", doc.format),
            });
        }
        if doc.version != FIT_VERSION {
            return Err(Error::Version {
                found: doc.version,
                expected: FIT_VERSION,
            });
        }
        Ok(doc)
    }
}
