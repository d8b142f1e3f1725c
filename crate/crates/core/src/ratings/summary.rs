use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{Metric, RatingError, RatingRecord};
use crate::stats::mean_std;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample std; `None` for a single observation.
    pub std: Option<f64>,
}

impl MetricSummary {
    /// `mean ± std` with two decimals, the usual table format.
    pub fn display(&self) -> String {
        match self.std {
            Some(s) => format!("{:.2} ± {:.2}", self.mean, s),
            None => format!("{:.2}", self.mean),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub language: String,
    pub model_id: String,
    pub metrics: BTreeMap<String, MetricSummary>,
}

/// Per-model mean ± sample std of every metric present in `ratings`.
///
/// The rating file is assumed to cover a single language, given as
/// `language`; rows come out ordered by model id.
pub fn summarize(ratings: &[RatingRecord], language: &str) -> Result<Vec<SummaryRow>, RatingError> {
    if ratings.is_empty() {
        return Err(RatingError::EmptyGroup(format!("no ratings for {language}")));
    }
    let mut by_model: BTreeMap<&str, Vec<&RatingRecord>> = BTreeMap::new();
    for r in ratings {
        by_model.entry(&r.model_id).or_default().push(r);
    }
    Ok(by_model
        .into_iter()
        .map(|(model, rows)| {
            let metrics = Metric::ALL
                .into_iter()
                .filter_map(|m| {
                    let values: Vec<f64> =
                        rows.iter().filter_map(|r| m.get(r)).map(f64::from).collect();
                    mean_std(&values).map(|ms| {
                        (
                            m.name().to_string(),
                            MetricSummary {
                                n: ms.n,
                                mean: ms.mean,
                                std: ms.std,
                            },
                        )
                    })
                })
                .collect();
            SummaryRow {
                language: language.to_string(),
                model_id: model.to_string(),
                metrics,
            }
        })
        .collect())
}

/// `language,model_id,metric,n,mean,std` rows.
pub fn write_summary_csv<W: Write>(out: W, rows: &[SummaryRow]) -> Result<(), RatingError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["language", "model_id", "metric", "n", "mean", "std"])?;
    for row in rows {
        for (metric, s) in &row.metrics {
            w.write_record([
                row.language.clone(),
                row.model_id.clone(),
                metric.clone(),
                s.n.to_string(),
                s.mean.to_string(),
                s.std.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
