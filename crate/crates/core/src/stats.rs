//! Small descriptive-statistics helpers.

use serde::{Deserialize, Serialize};

/// Mean and sample standard deviation (n - 1 denominator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub n: usize,
    pub mean: f64,
    /// `None` when fewer than two observations.
    pub std: Option<f64>,
}

/// Mean and sample std computed on data shifted by the first observation.
///
/// Identical inputs give `mean == x[0]` and `std == 0.0` exactly.
pub fn mean_std(xs: &[f64]) -> Option<MeanStd> {
    let first = *xs.first()?;
    let n = xs.len();
    let shifted_sum: f64 = xs.iter().map(|x| x - first).sum();
    let shifted_mean = shifted_sum / n as f64;
    let mean = first + shifted_mean;
    let std = (n > 1).then(|| {
        let ss: f64 = xs
            .iter()
            .map(|x| {
                let d = (x - first) - shifted_mean;
                d * d
            })
            .sum();
        (ss / (n - 1) as f64).sqrt()
    });
    Some(MeanStd { n, mean, std })
}

/// Percentile with linear interpolation between order statistics
/// (`q` in `[0, 1]`). `sorted` must be ascending and non-empty.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let q = q.clamp(0.0, 1.0);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = pos - lo as f64;
        sorted[lo] + (sorted[hi] - sorted[lo]) * w
    }
}

/// Median of unsorted data; `None` when empty.
pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Some(percentile_sorted(&v, 0.5))
}
