use serde::{Deserialize, Serialize};

use super::Decision;
use crate::error::{invalid, Error, Result};

#[inline]
pub(crate) fn threshold_on_total(total: u64, n_c: u64) -> Decision {
    if total > n_c {
        Decision::Bright
    } else {
        Decision::Dark
    }
}

/// Bright iff more than `n_c` photons were counted in total.
pub fn threshold_classify(counts: &[u32], n_c: u64) -> Result<Decision> {
    if counts.is_empty() {
        return Err(Error::EmptySequence);
    }
    Ok(threshold_on_total(
        counts.iter().map(|&n| n as u64).sum(),
        n_c,
    ))
}

/// Dark at or below `n_dark`, bright above `n_bright`, inconclusive between.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DoubleThreshold {
    n_dark: u64,
    n_bright: u64,
}

impl DoubleThreshold {
    pub fn new(n_dark: u64, n_bright: u64) -> Result<Self> {
        if n_dark > n_bright {
            return Err(invalid(
                "n_dark",
                format!("{n_dark} exceeds n_bright = {n_bright}"),
            ));
        }
        Ok(DoubleThreshold { n_dark, n_bright })
    }

    pub fn n_dark(&self) -> u64 {
        self.n_dark
    }

    pub fn n_bright(&self) -> u64 {
        self.n_bright
    }

    #[inline]
    pub(crate) fn on_total(&self, total: u64) -> Decision {
        if total <= self.n_dark {
            Decision::Dark
        } else if total > self.n_bright {
            Decision::Bright
        } else {
            Decision::Inconclusive
        }
    }

    pub fn classify(&self, counts: &[u32]) -> Result<Decision> {
        if counts.is_empty() {
            return Err(Error::EmptySequence);
        }
        Ok(self.on_total(counts.iter().map(|&n| n as u64).sum()))
    }
}

pub fn double_threshold_classify(counts: &[u32], n_dark: u64, n_bright: u64) -> Result<Decision> {
    DoubleThreshold::new(n_dark, n_bright)?.classify(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_threshold_is_strict() {
        assert_eq!(threshold_classify(&[0, 0, 0], 1).unwrap(), Decision::Dark);
        assert_eq!(threshold_classify(&[1, 0, 1], 1).unwrap(), Decision::Bright);
        assert_eq!(threshold_classify(&[0, 1, 0], 1).unwrap(), Decision::Dark);
        assert_eq!(threshold_classify(&[], 1), Err(Error::EmptySequence));
    }

    #[test]
    fn double_threshold_bands() {
        assert_eq!(
            double_threshold_classify(&[0, 0], 0, 4).unwrap(),
            Decision::Dark
        );
        assert_eq!(
            double_threshold_classify(&[1, 2], 0, 4).unwrap(),
            Decision::Inconclusive
        );
        assert_eq!(
            double_threshold_classify(&[4], 0, 4).unwrap(),
            Decision::Inconclusive
        );
        assert_eq!(
            double_threshold_classify(&[3, 2], 0, 4).unwrap(),
            Decision::Bright
        );
        assert!(double_threshold_classify(&[0], 5, 4).is_err());
    }

    #[test]
    fn equal_thresholds_never_abstain() {
        let d = DoubleThreshold::new(2, 2).unwrap();
        for total in 0..10u32 {
            let single = threshold_classify(&[total], 2).unwrap();
            assert_eq!(d.classify(&[total]).unwrap(), single);
        }
    }
}
