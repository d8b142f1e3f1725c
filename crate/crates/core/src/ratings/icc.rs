//! ICC(2,k): two-way random effects, absolute agreement, average of k raters.

use std::collections::{BTreeMap, HashMap};

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Metric, RatingError, RatingRecord};
use crate::seed::item_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IccBand {
    Poor,
    Moderate,
    Good,
    Excellent,
}

impl IccBand {
    pub fn of(icc: f64) -> Self {
        if icc < 0.5 {
            IccBand::Poor
        } else if icc < 0.75 {
            IccBand::Moderate
        } else if icc <= 0.9 {
            IccBand::Good
        } else {
            IccBand::Excellent
        }
    }
}

/// Sentences × raters matrix of one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingMatrix {
    pub sentences: Vec<String>,
    pub raters: Vec<String>,
    /// Row-major, `sentences.len()` rows of `raters.len()` values.
    pub values: Vec<Vec<f64>>,
}

impl RatingMatrix {
    pub fn from_rows(values: Vec<Vec<f64>>) -> Self {
        let k = values.first().map_or(0, Vec::len);
        RatingMatrix {
            sentences: (0..values.len()).map(|i| format!("s{i}")).collect(),
            raters: (0..k).map(|j| format!("r{j}")).collect(),
            values,
        }
    }

    /// Build from rating records of one model.
    ///
    /// Missing cells are an error unless `listwise` is set, in which case
    /// every sentence lacking a rating from some rater is dropped.
    pub fn from_ratings(
        ratings: &[RatingRecord],
        model_id: &str,
        metric: Metric,
        listwise: bool,
    ) -> Result<Self, RatingError> {
        let mut cells: HashMap<(&str, &str), f64> = HashMap::new();
        let mut sentences: BTreeMap<&str, ()> = BTreeMap::new();
        let mut raters: BTreeMap<&str, ()> = BTreeMap::new();
        for r in ratings.iter().filter(|r| r.model_id == model_id) {
            if let Some(v) = metric.get(r) {
                cells.insert((&r.item_id, &r.rater_id), v as f64);
                sentences.insert(&r.item_id, ());
                raters.insert(&r.rater_id, ());
            }
        }
        let raters: Vec<&str> = raters.into_keys().collect();
        let mut missing = 0;
        let mut kept = Vec::new();
        let mut values = Vec::new();
        for s in sentences.into_keys() {
            let row: Vec<Option<f64>> = raters.iter().map(|r| cells.get(&(s, *r)).copied()).collect();
            let gaps = row.iter().filter(|v| v.is_none()).count();
            missing += gaps;
            if gaps == 0 {
                kept.push(s.to_string());
                values.push(row.into_iter().map(Option::unwrap).collect());
            }
        }
        if missing > 0 && !listwise {
            return Err(RatingError::IncompleteMatrix { missing });
        }
        Ok(RatingMatrix {
            sentences: kept,
            raters: raters.into_iter().map(String::from).collect(),
            values,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.values.len()
    }

    pub fn n_cols(&self) -> usize {
        self.raters.len()
    }

    fn select(&self, rows: &[usize], cols: &[usize]) -> Vec<Vec<f64>> {
        rows.iter()
            .map(|&i| cols.iter().map(|&j| self.values[i][j]).collect())
            .collect()
    }
}

/// ICC(2,k) of a complete matrix given as rows of equal length.
pub fn icc_2k(rows: &[Vec<f64>]) -> Result<f64, RatingError> {
    let n = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    if n < 2 || k < 2 {
        return Err(RatingError::InvalidInput(format!(
            "need at least 2 sentences and 2 raters, got {n}x{k}"
        )));
    }
    if rows.iter().any(|r| r.len() != k) {
        return Err(RatingError::InvalidInput("ragged rating matrix".into()));
    }
    let row_means: Vec<f64> = rows.iter().map(|r| r.iter().sum::<f64>() / k as f64).collect();
    let col_means: Vec<f64> = (0..k)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;

    let ss_rows = k as f64 * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_cols = n as f64 * col_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let mut ss_err = 0.0;
    for (i, r) in rows.iter().enumerate() {
        for (j, x) in r.iter().enumerate() {
            ss_err += (x - row_means[i] - col_means[j] + grand).powi(2);
        }
    }
    let ms_rows = ss_rows / (n - 1) as f64;
    let ms_cols = ss_cols / (k - 1) as f64;
    let ms_err = ss_err / ((n - 1) * (k - 1)) as f64;

    let denom = ms_rows + (ms_cols - ms_err) / n as f64;
    if denom.abs() < 1e-12 {
        return Err(RatingError::Undefined(
            "no between-sentence variance".into(),
        ));
    }
    Ok((ms_rows - ms_err) / denom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IccCell {
    pub n_raters: usize,
    pub n_sentences: usize,
    /// `None` if every draw was undefined.
    pub mean_icc: Option<f64>,
    pub band: Option<IccBand>,
    /// Draws that produced a defined ICC.
    pub valid_draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IccGridResult {
    pub cells: Vec<IccCell>,
    pub iterations: usize,
    /// Fewest raters, then fewest sentences, with mean ICC ≥ 0.5.
    pub threshold: Option<(usize, usize)>,
}

fn strictly_increasing(xs: &[usize]) -> bool {
    xs.windows(2).all(|w| w[0] < w[1])
}

/// Mean ICC(2,k) over random subsets of raters and sentences.
///
/// For each grid cell, every iteration draws `n_raters` raters and
/// `n_sentences` sentences without replacement. Draws whose ICC is
/// undefined (no between-sentence variance) are skipped and counted. Cell
/// `c` in row-major order (raters outer) uses the RNG stream `(seed, c)`.
pub fn icc_grid(
    matrix: &RatingMatrix,
    rater_grid: &[usize],
    sentence_grid: &[usize],
    iterations: usize,
    seed: u64,
) -> Result<IccGridResult, RatingError> {
    if rater_grid.is_empty() || sentence_grid.is_empty() {
        return Err(RatingError::InvalidInput("empty grid".into()));
    }
    if !strictly_increasing(rater_grid) || !strictly_increasing(sentence_grid) {
        return Err(RatingError::InvalidInput("grid axes must be strictly increasing".into()));
    }
    if rater_grid[0] < 2 || sentence_grid[0] < 2 {
        return Err(RatingError::InvalidInput("grid values must be at least 2".into()));
    }
    let (max_r, max_s) = (*rater_grid.last().unwrap(), *sentence_grid.last().unwrap());
    if max_r > matrix.n_cols() || max_s > matrix.n_rows() {
        return Err(RatingError::InvalidInput(format!(
            "grid maximum {max_r}x{max_s} exceeds data {}x{}",
            matrix.n_cols(),
            matrix.n_rows()
        )));
    }
    if iterations == 0 {
        return Err(RatingError::InvalidInput("iterations must be positive".into()));
    }

    let coords: Vec<(usize, usize)> = rater_grid
        .iter()
        .flat_map(|&r| sentence_grid.iter().map(move |&s| (r, s)))
        .collect();
    let cells: Vec<IccCell> = coords
        .par_iter()
        .enumerate()
        .map(|(c, &(nr, ns))| {
            let mut rng = item_rng(seed, c as u64);
            let (mut sum, mut valid) = (0.0, 0usize);
            for _ in 0..iterations {
                let cols = sample(&mut rng, matrix.n_cols(), nr).into_vec();
                let rows = sample(&mut rng, matrix.n_rows(), ns).into_vec();
                if let Ok(v) = icc_2k(&matrix.select(&rows, &cols)) {
                    sum += v;
                    valid += 1;
                }
            }
            let mean_icc = (valid > 0).then(|| sum / valid as f64);
            IccCell {
                n_raters: nr,
                n_sentences: ns,
                mean_icc,
                band: mean_icc.map(IccBand::of),
                valid_draws: valid,
            }
        })
        .collect();
    let threshold = cells
        .iter()
        .find(|c| c.mean_icc.is_some_and(|m| m >= 0.5))
        .map(|c| (c.n_raters, c.n_sentences));
    Ok(IccGridResult {
        cells,
        iterations,
        threshold,
    })
}
