use std::collections::{BTreeMap, HashMap};

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Metric, RatingError, RatingRecord};
use crate::seed::item_rng;
use crate::stats::percentile_sorted;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterBootstrapPoint {
    pub n_raters: usize,
    pub mean: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    /// Iterations in which no sampled rater had rated any sampled sentence.
    pub empty_draws: usize,
}

impl RaterBootstrapPoint {
    pub fn ci_width(&self) -> f64 {
        self.ci95_high - self.ci95_low
    }
}

/// How the mean score of one model moves as more raters are pooled.
///
/// Each iteration draws `n_raters` raters with replacement and
/// `n_sentences` of the model's rated items without replacement, then
/// averages `metric` over the (rater, item) cells that exist. Grid point `g`
/// uses its own RNG stream `(seed, g)`.
pub fn rater_bootstrap(
    ratings: &[RatingRecord],
    model_id: &str,
    metric: Metric,
    rater_grid: &[usize],
    n_sentences: usize,
    iterations: usize,
    seed: u64,
) -> Result<Vec<RaterBootstrapPoint>, RatingError> {
    if rater_grid.contains(&0) {
        return Err(RatingError::InvalidInput("rater grid contains 0".into()));
    }
    if iterations == 0 || n_sentences == 0 {
        return Err(RatingError::InvalidInput(
            "iterations and n_sentences must be positive".into(),
        ));
    }
    let mut cells: HashMap<(usize, usize), f64> = HashMap::new();
    let mut raters: BTreeMap<&str, usize> = BTreeMap::new();
    let mut items: BTreeMap<&str, usize> = BTreeMap::new();
    let rows: Vec<_> = ratings
        .iter()
        .filter(|r| r.model_id == model_id)
        .filter_map(|r| metric.get(r).map(|v| (r, v)))
        .collect();
    for (r, _) in &rows {
        raters.entry(&r.rater_id).or_insert(0);
        items.entry(&r.item_id).or_insert(0);
    }
    for (i, v) in raters.values_mut().enumerate() {
        *v = i;
    }
    for (i, v) in items.values_mut().enumerate() {
        *v = i;
    }
    for (r, v) in &rows {
        cells.insert((raters[r.rater_id.as_str()], items[r.item_id.as_str()]), *v as f64);
    }
    let (n_r, n_i) = (raters.len(), items.len());
    if n_r == 0 {
        return Err(RatingError::EmptyGroup(format!("no {} ratings for {model_id}", metric.name())));
    }
    if n_sentences > n_i {
        return Err(RatingError::InvalidInput(format!(
            "n_sentences {n_sentences} exceeds the {n_i} rated items"
        )));
    }

    Ok(rater_grid
        .par_iter()
        .enumerate()
        .map(|(g, &k)| {
            let mut rng = item_rng(seed, g as u64);
            let mut means = Vec::with_capacity(iterations);
            let mut empty = 0;
            for _ in 0..iterations {
                let chosen: Vec<usize> = (0..k).map(|_| rng.random_range(0..n_r)).collect();
                let sentences = sample(&mut rng, n_i, n_sentences);
                let (mut sum, mut count) = (0.0, 0usize);
                for s in sentences.iter() {
                    for &r in &chosen {
                        if let Some(v) = cells.get(&(r, s)) {
                            sum += v;
                            count += 1;
                        }
                    }
                }
                if count == 0 {
                    empty += 1;
                } else {
                    means.push(sum / count as f64);
                }
            }
            means.sort_by(f64::total_cmp);
            let (mean, lo, hi) = if means.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                (
                    means.iter().sum::<f64>() / means.len() as f64,
                    percentile_sorted(&means, 0.025),
                    percentile_sorted(&means, 0.975),
                )
            };
            RaterBootstrapPoint {
                n_raters: k,
                mean,
                ci95_low: lo,
                ci95_high: hi,
                empty_draws: empty,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratings::testutil::text_record;

    fn two_extreme_raters(items: usize) -> Vec<RatingRecord> {
        let mut rs = Vec::new();
        for i in 0..items {
            rs.push(text_record(&format!("s{i}"), "low", "m", 1));
            rs.push(text_record(&format!("s{i}"), "high", "m", 7));
        }
        rs
    }

    #[test]
    fn constant_raters_have_zero_width() {
        let mut rs = Vec::new();
        for r in ["a", "b", "c"] {
            for i in 0..60 {
                rs.push(text_record(&format!("s{i}"), r, "m", 5));
            }
        }
        let pts = rater_bootstrap(&rs, "m", Metric::Readability, &[1, 2, 3, 5], 50, 200, 1).unwrap();
        for p in pts {
            assert_eq!(p.ci_width(), 0.0);
            assert_eq!(p.mean, 5.0);
        }
    }

    #[test]
    fn extreme_raters_average_to_midpoint() {
        // With two raters scoring everything 1 and 7, a draw's mean is
        // 1 + 6 * (#high / k), with #high ~ Binomial(k, 1/2); its expectation is 4.
        let rs = two_extreme_raters(60);
        let pts = rater_bootstrap(&rs, "m", Metric::Readability, &[1, 2, 3, 4, 8], 50, 4000, 9).unwrap();
        for p in &pts {
            assert!((p.mean - 4.0).abs() < 0.15, "{p:?}");
        }
        for w in pts.windows(2) {
            assert!(w[1].ci_width() <= w[0].ci_width() + 1e-12);
        }
        assert!(pts[4].ci_width() < pts[0].ci_width());
    }

    #[test]
    fn zero_grid_value_rejected() {
        let rs = two_extreme_raters(5);
        assert!(matches!(
            rater_bootstrap(&rs, "m", Metric::Readability, &[0, 1], 3, 10, 0),
            Err(RatingError::InvalidInput(_))
        ));
    }

    #[test]
    fn too_many_sentences_rejected() {
        let rs = two_extreme_raters(5);
        assert!(rater_bootstrap(&rs, "m", Metric::Readability, &[1], 6, 10, 0).is_err());
    }

    #[test]
    fn reproducible() {
        let rs = two_extreme_raters(60);
        let a = rater_bootstrap(&rs, "m", Metric::Readability, &[1, 3], 20, 100, 5).unwrap();
        let b = rater_bootstrap(&rs, "m", Metric::Readability, &[1, 3], 20, 100, 5).unwrap();
        assert_eq!(a, b);
    }
}
