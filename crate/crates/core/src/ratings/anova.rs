//! Two-way main-effects ANOVA with model and rater as categorical factors.
//!
//! Raters typically score overlapping but unbalanced item sets, so the
//! interaction is not estimable and is left out. Sums of squares are Type II:
//! each factor's SS is the drop in residual SS when it is added to a model
//! already holding the other factor.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use super::{Metric, RatingError, RatingRecord};
use crate::stats::mean_std;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaRow {
    pub source: String,
    pub sum_of_squares: f64,
    pub df: usize,
    pub mean_square: f64,
    /// Absent on the residual row. Infinite when the residual is exactly 0.
    pub f: Option<f64>,
    pub p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaTable {
    pub response: String,
    pub n: usize,
    pub llm: AnovaRow,
    pub rater: AnovaRow,
    pub residual: AnovaRow,
    /// Total SS about the grand mean.
    pub total_ss: f64,
}

impl AnovaTable {
    /// True when rater identity explains more variance than the model.
    pub fn rater_dominates(&self) -> bool {
        self.rater.sum_of_squares > self.llm.sum_of_squares
    }
}

/// Dummy-coded design: intercept, then `a - 1` and `b - 1` indicator columns.
fn design(levels: &[(usize, usize)], n_a: usize, n_b: usize, use_a: bool, use_b: bool) -> DMatrix<f64> {
    let cols = 1 + if use_a { n_a - 1 } else { 0 } + if use_b { n_b - 1 } else { 0 };
    let mut x = DMatrix::zeros(levels.len(), cols);
    for (row, &(a, b)) in levels.iter().enumerate() {
        x[(row, 0)] = 1.0;
        let mut offset = 1;
        if use_a {
            if a > 0 {
                x[(row, offset + a - 1)] = 1.0;
            }
            offset += n_a - 1;
        }
        if use_b && b > 0 {
            x[(row, offset + b - 1)] = 1.0;
        }
    }
    x
}

/// Residual sum of squares and rank of the least-squares fit.
fn fit(x: DMatrix<f64>, y: &DVector<f64>) -> Result<(f64, usize), RatingError> {
    let svd = x.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let eps = max_sv * 1e-10 * x.nrows().max(x.ncols()) as f64;
    let rank = svd.rank(eps);
    let beta = svd
        .solve(y, eps)
        .map_err(|e| RatingError::DegenerateDesign(e.to_string()))?;
    let resid = y - x * beta;
    Ok((resid.norm_squared(), rank))
}

fn p_value(f: f64, df1: usize, df2: usize) -> f64 {
    if f.is_nan() || f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    FisherSnedecor::new(df1 as f64, df2 as f64)
        .map(|d| d.sf(f))
        .unwrap_or(1.0)
}

fn factor_row(source: &str, ss: f64, df: usize, ms_resid: f64, df_resid: usize) -> AnovaRow {
    let ms = ss / df as f64;
    let f = if ms == 0.0 {
        0.0
    } else if ms_resid == 0.0 {
        f64::INFINITY
    } else {
        ms / ms_resid
    };
    AnovaRow {
        source: source.into(),
        sum_of_squares: ss,
        df,
        mean_square: ms,
        f: Some(f),
        p: Some(p_value(f, df, df_resid)),
    }
}

/// Two-way ANOVA of `response` on model id and rater id.
pub fn anova_two_way(ratings: &[RatingRecord], response: Metric) -> Result<AnovaTable, RatingError> {
    let rows: Vec<(&str, &str, f64)> = ratings
        .iter()
        .filter_map(|r| response.get(r).map(|v| (r.model_id.as_str(), r.rater_id.as_str(), v as f64)))
        .collect();
    let index = |values: Vec<&str>| -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for v in values {
            m.entry(v.to_string()).or_insert(0);
        }
        for (i, v) in m.values_mut().enumerate() {
            *v = i;
        }
        m
    };
    let models = index(rows.iter().map(|r| r.0).collect());
    let raters = index(rows.iter().map(|r| r.1).collect());
    let (n_a, n_b) = (models.len(), raters.len());
    if n_a < 2 || n_b < 2 {
        return Err(RatingError::InvalidInput(format!(
            "need >= 2 levels per factor, got {n_a} models and {n_b} raters"
        )));
    }
    let n = rows.len();
    let params = 1 + (n_a - 1) + (n_b - 1);
    if n <= params {
        return Err(RatingError::DegenerateDesign(format!(
            "{n} observations leave no residual degrees of freedom for {params} parameters"
        )));
    }

    let levels: Vec<(usize, usize)> = rows.iter().map(|r| (models[r.0], raters[r.1])).collect();
    let values: Vec<f64> = rows.iter().map(|r| r.2).collect();
    // Centering leaves every SS unchanged (the intercept absorbs it) and makes
    // a constant response exactly zero.
    let grand = mean_std(&values).expect("non-empty").mean;
    let y = DVector::from_iterator(n, values.iter().map(|v| v - grand));

    let (rss_full, rank_full) = fit(design(&levels, n_a, n_b, true, true), &y)?;
    if rank_full < params {
        return Err(RatingError::DegenerateDesign(
            "model and rater factors are confounded".into(),
        ));
    }
    let (rss_b_only, _) = fit(design(&levels, n_a, n_b, false, true), &y)?;
    let (rss_a_only, _) = fit(design(&levels, n_a, n_b, true, false), &y)?;

    let df_resid = n - params;
    let ss_a = (rss_b_only - rss_full).max(0.0);
    let ss_b = (rss_a_only - rss_full).max(0.0);
    let ms_resid = rss_full / df_resid as f64;

    Ok(AnovaTable {
        response: response.name().into(),
        n,
        llm: factor_row("LLM", ss_a, n_a - 1, ms_resid, df_resid),
        rater: factor_row("RaterID", ss_b, n_b - 1, ms_resid, df_resid),
        residual: AnovaRow {
            source: "Residual".into(),
            sum_of_squares: rss_full,
            df: df_resid,
            mean_square: ms_resid,
            f: None,
            p: None,
        },
        total_ss: y.norm_squared(),
    })
}
