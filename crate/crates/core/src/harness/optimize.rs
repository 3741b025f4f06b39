//! Exhaustive threshold search over histograms of total counts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{ErrorReport, Tally};
use crate::error::{invalid, Error, Result};
use crate::model::IonState;
use crate::sim::Trajectory;

/// Histogram of total photon counts per prepared state, for several record
/// lengths (prefixes of the same records).
#[derive(Debug, Clone, PartialEq)]
pub struct TotalHistograms {
    pub bins: Vec<usize>,
    pub t_sub_ms: f64,
    /// `hist[prefix][state][total]`
    hist: Vec<[Vec<u64>; 2]>,
}

fn add_hist(a: &mut Vec<u64>, total: usize) {
    if a.len() <= total {
        a.resize(total + 1, 0);
    }
    a[total] += 1;
}

fn merge_hist(a: &mut Vec<u64>, b: &[u64]) {
    if a.len() < b.len() {
        a.resize(b.len(), 0);
    }
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

impl TotalHistograms {
    pub fn build(bright: &[Trajectory], dark: &[Trajectory], bins: &[usize]) -> Result<Self> {
        if bright.is_empty() || dark.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        let len = bright[0].len().min(dark[0].len());
        if bins.iter().any(|&b| b == 0 || b > len) {
            return Err(Error::Config(format!(
                "requested prefix outside 1..={len} sub-bins"
            )));
        }
        let mut sorted = bins.to_vec();
        sorted.sort_unstable();
        if sorted != bins {
            return Err(invalid("bins", "must be ascending"));
        }
        let empty = || vec![[Vec::new(), Vec::new()]; bins.len()];
        let hist = bright
            .par_iter()
            .chain(dark.par_iter())
            .fold(empty, |mut acc, traj| {
                let s = traj.initial.index();
                let mut total = 0usize;
                let mut next = 0;
                for (k, &n) in traj.counts.iter().enumerate() {
                    total += n as usize;
                    while next < bins.len() && bins[next] == k + 1 {
                        add_hist(&mut acc[next][s], total);
                        next += 1;
                    }
                }
                acc
            })
            .reduce(empty, |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    merge_hist(&mut x[0], &y[0]);
                    merge_hist(&mut x[1], &y[1]);
                }
                a
            });
        Ok(TotalHistograms {
            bins: bins.to_vec(),
            t_sub_ms: bright[0].t_sub_ms,
            hist,
        })
    }

    fn count_range(&self, prefix: usize, state: IonState, lo: u64, hi: Option<u64>) -> u64 {
        let h = &self.hist[prefix][state.index()];
        let lo = lo as usize;
        let hi = hi.map_or(h.len(), |h_| (h_ as usize + 1).min(h.len()));
        if lo >= hi {
            0
        } else {
            h[lo..hi].iter().sum()
        }
    }

    /// Tally of a double threshold: dark for `total <= n_dark`, bright for
    /// `total > n_bright`. `n_dark == n_bright` is the single threshold.
    pub fn tally(&self, prefix: usize, n_dark: u64, n_bright: u64) -> Tally {
        let mut t = Tally::default();
        for s in IonState::ALL {
            let dark = self.count_range(prefix, s, 0, Some(n_dark));
            let band = self.count_range(prefix, s, n_dark + 1, Some(n_bright));
            let bright = self.count_range(prefix, s, n_bright + 1, None);
            let (right, wrong) = match s {
                IonState::Bright => (bright, dark),
                IonState::Dark => (dark, bright),
            };
            t.correct[s.index()] = right;
            t.wrong[s.index()] = wrong;
            t.ignored[s.index()] = band;
        }
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThresholdFamily {
    /// Single threshold; the grid runs over `n_c`.
    Single,
    /// Fixed lower threshold; the grid runs over the upper one.
    Double { n_dark: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSearch {
    pub best: ErrorReport,
    pub landscape: Vec<ErrorReport>,
}

/// Grid search at one prefix of a histogram set. Ties go to the smaller
/// threshold.
pub fn optimize_on_histograms(
    hist: &TotalHistograms,
    prefix: usize,
    family: ThresholdFamily,
    grid: &[u64],
) -> Result<ThresholdSearch> {
    if grid.is_empty() {
        return Err(invalid("grid", "must not be empty"));
    }
    let mut grid = grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let t_b = hist.bins[prefix] as f64 * hist.t_sub_ms;
    let mut landscape = Vec::with_capacity(grid.len());
    for &g in &grid {
        let (method, params, lo, hi) = match family {
            ThresholdFamily::Single => ("threshold", format!("n_c={g}"), g, g),
            ThresholdFamily::Double { n_dark } => {
                if g < n_dark {
                    continue;
                }
                (
                    "double_threshold",
                    format!("n_d={n_dark};n_b={g}"),
                    n_dark,
                    g,
                )
            }
        };
        landscape.push(
            ErrorReport::from_tally(method, params, t_b, hist.tally(prefix, lo, hi))
                .with_threshold(g),
        );
    }
    let best = landscape
        .iter()
        .fold(None::<&ErrorReport>, |best, r| match best {
            Some(b) if b.epsilon_or_inf() <= r.epsilon_or_inf() => Some(b),
            _ => Some(r),
        })
        .ok_or_else(|| invalid("grid", "no admissible threshold"))?
        .clone();
    Ok(ThresholdSearch { best, landscape })
}

/// Grid search over full records.
pub fn optimize_threshold(
    bright: &[Trajectory],
    dark: &[Trajectory],
    family: ThresholdFamily,
    grid: &[u64],
) -> Result<ThresholdSearch> {
    if bright.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let hist = TotalHistograms::build(bright, dark, &[bright[0].len()])?;
    optimize_on_histograms(&hist, 0, family, grid)
}

/// Default search grid for totals of records up to `bins` sub-bins.
pub fn default_grid(hist: &TotalHistograms) -> Vec<u64> {
    let top = hist
        .hist
        .iter()
        .flat_map(|h| [h[0].len(), h[1].len()])
        .max()
        .unwrap_or(1);
    (0..top as u64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(initial: IonState, counts: Vec<u32>) -> Trajectory {
        Trajectory {
            initial,
            change_times: vec![],
            counts,
            t_b_ms: 0.3,
            t_sub_ms: 0.1,
        }
    }

    #[test]
    fn perfectly_separable() {
        let b: Vec<_> = (0..10)
            .map(|i| traj(IonState::Bright, vec![1, i % 3, 2]))
            .collect();
        let d: Vec<_> = (0..10)
            .map(|_| traj(IonState::Dark, vec![0, 0, 0]))
            .collect();
        let s = optimize_threshold(&b, &d, ThresholdFamily::Single, &[0, 1, 2, 3, 4]).unwrap();
        assert_eq!(s.best.threshold, Some(0));
        assert_eq!(s.best.epsilon, Some(0.0));
        assert_eq!(s.best.n_r, 1.0);
        assert_eq!(s.landscape.len(), 5);
    }

    #[test]
    fn single_point_grid() {
        let b = vec![traj(IonState::Bright, vec![1, 0, 0])];
        let d = vec![traj(IonState::Dark, vec![0, 1, 1])];
        let s = optimize_threshold(&b, &d, ThresholdFamily::Single, &[7]).unwrap();
        assert_eq!(s.best.threshold, Some(7));
        assert!(optimize_threshold(&b, &d, ThresholdFamily::Single, &[]).is_err());
    }

    #[test]
    fn prefixes_and_bands() {
        let b = vec![traj(IonState::Bright, vec![3, 0, 2])];
        let d = vec![traj(IonState::Dark, vec![0, 1, 0])];
        let h = TotalHistograms::build(&b, &d, &[1, 2, 3]).unwrap();
        let t = h.tally(2, 0, 4);
        assert_eq!(t.correct, [1, 0]);
        assert_eq!(t.ignored, [0, 1]);
        let t = h.tally(0, 0, 2);
        assert_eq!(t.correct, [1, 1]);
        assert!(TotalHistograms::build(&b, &d, &[2, 1]).is_err());
        assert!(TotalHistograms::build(&b, &d, &[4]).is_err());
    }
}
