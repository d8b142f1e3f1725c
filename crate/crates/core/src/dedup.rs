//! Exact deduplication of generated corpora and the unique-rate versus
//! batch-count simulation.
//!
//! The simulation unit is the batch request: for each batch count `k`, random
//! subsets of `k` batches are drawn without replacement and the unique rate
//! of their pooled sentences is recorded. When the number of distinct
//! `k`-subsets does not exceed the requested subsample count, every subset is
//! enumerated instead and the point is exact.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;
use crate::stats::mean_std;
use crate::text::normalize_key;
use crate::textgen::SentencePair;

#[derive(Debug, Error)]
pub enum DedupError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchCount {
    pub total: usize,
    pub unique: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupReport {
    pub total: usize,
    pub unique: usize,
    /// `unique / total`; 1.0 for an empty corpus.
    pub unique_rate: f64,
    /// Per batch: pair count and distinct normalized targets within it.
    pub per_batch: BTreeMap<String, BatchCount>,
}

/// Keep the first occurrence of every normalized target text, in order.
pub fn dedup(pairs: &[SentencePair]) -> (Vec<SentencePair>, DedupReport) {
    let mut seen = HashSet::new();
    let kept: Vec<SentencePair> = pairs
        .iter()
        .filter(|p| seen.insert(normalize_key(&p.target_text)))
        .cloned()
        .collect();

    let mut per_batch_keys: BTreeMap<String, (usize, HashSet<String>)> = BTreeMap::new();
    for p in pairs {
        let entry = per_batch_keys.entry(p.batch_id.clone()).or_default();
        entry.0 += 1;
        entry.1.insert(normalize_key(&p.target_text));
    }
    let per_batch = per_batch_keys
        .into_iter()
        .map(|(k, (total, keys))| {
            (
                k,
                BatchCount {
                    total,
                    unique: keys.len(),
                },
            )
        })
        .collect();

    let report = DedupReport {
        total: pairs.len(),
        unique: kept.len(),
        unique_rate: rate(kept.len(), pairs.len()),
        per_batch,
    };
    (kept, report)
}

fn rate(unique: usize, total: usize) -> f64 {
    if total == 0 {
        1.0
    } else {
        unique as f64 / total as f64
    }
}

/// Unique rate of the union of the given batches of pre-normalized keys.
fn pooled_rate(batches: &[Vec<u32>], chosen: impl Iterator<Item = usize>) -> f64 {
    let mut seen = HashSet::new();
    let mut total = 0usize;
    for b in chosen {
        total += batches[b].len();
        seen.extend(batches[b].iter().copied());
    }
    rate(seen.len(), total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub batch_count: usize,
    pub mean_unique_rate: f64,
    /// Sample std over the drawn subsets (population std when exhaustive).
    pub std: f64,
    pub subsets: usize,
    pub exhaustive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessCurve {
    pub points: Vec<CurvePoint>,
    pub subsamples_per_point: usize,
}

impl UniquenessCurve {
    /// Write `batch_count,mean_unique_rate,std` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), DedupError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["batch_count", "mean_unique_rate", "std"])
            .map_err(csv_io)?;
        for p in &self.points {
            w.write_record([
                p.batch_count.to_string(),
                p.mean_unique_rate.to_string(),
                p.std.to_string(),
            ])
            .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> DedupError {
    DedupError::Io(std::io::Error::other(e))
}

/// Group pairs into batches of sentence texts, keyed by batch id.
pub fn group_by_batch(pairs: &[SentencePair]) -> BTreeMap<String, Vec<String>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for p in pairs {
        out.entry(p.batch_id.clone())
            .or_default()
            .push(p.target_text.clone());
    }
    out
}

fn binomial(n: usize, k: usize) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// Visit every `k`-subset of `0..n` in lexicographic order.
fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Mean and spread of the unique rate as a function of batch count.
pub fn uniqueness_curve(
    batches: &BTreeMap<String, Vec<String>>,
    batch_counts: &[usize],
    subsamples: usize,
    seed: u64,
) -> Result<UniquenessCurve, DedupError> {
    if subsamples == 0 {
        return Err(DedupError::InvalidInput("subsamples must be >= 1".into()));
    }
    if batch_counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DedupError::InvalidInput(
            "batch counts must be strictly increasing".into(),
        ));
    }
    let n = batches.len();
    if let Some(&bad) = batch_counts.iter().find(|&&k| k == 0 || k > n) {
        return Err(DedupError::InvalidInput(format!(
            "batch count {bad} outside 1..={n} available batches"
        )));
    }

    // Intern normalized keys once.
    let mut ids: HashMap<String, u32> = HashMap::new();
    let interned: Vec<Vec<u32>> = batches
        .values()
        .map(|texts| {
            texts
                .iter()
                .map(|t| {
                    let next = ids.len() as u32;
                    *ids.entry(normalize_key(t)).or_insert(next)
                })
                .collect()
        })
        .collect();

    let points = batch_counts
        .par_iter()
        .enumerate()
        .map(|(point_index, &k)| {
            let exhaustive = binomial(n, k).is_some_and(|c| c <= subsamples as u128);
            let rates: Vec<f64> = if exhaustive {
                let mut v = Vec::new();
                for_each_subset(n, k, |s| v.push(pooled_rate(&interned, s.iter().copied())));
                v
            } else {
                let mut rng = seed::item_rng(seed, point_index as u64);
                (0..subsamples)
                    .map(|_| pooled_rate(&interned, index::sample(&mut rng, n, k).into_iter()))
                    .collect()
            };
            let ms = mean_std(&rates).expect("at least one subset");
            let std = if exhaustive {
                // Every subset is present: report the population spread.
                let var = rates.iter().map(|r| (r - ms.mean).powi(2)).sum::<f64>()
                    / rates.len() as f64;
                var.sqrt()
            } else {
                ms.std.unwrap_or(0.0)
            };
            CurvePoint {
                batch_count: k,
                mean_unique_rate: ms.mean,
                std,
                subsets: rates.len(),
                exhaustive,
            }
        })
        .collect();

    Ok(UniquenessCurve {
        points,
        subsamples_per_point: subsamples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use time::OffsetDateTime;

    fn pair(text: &str, batch: &str) -> SentencePair {
        SentencePair {
            id: format!("{batch}-{text}"),
            target_text: text.into(),
            english_text: String::new(),
            theme: "t".into(),
            model_id: "m".into(),
            batch_id: batch.into(),
            is_question: false,
            created_at: OffsetDateTime::UNIX_EPOCH,
        }
    }

    #[test]
    fn keeps_first_occurrence() {
        let (kept, report) = dedup(&[pair("a", "1"), pair("b", "1"), pair(" A ", "2")]);
        assert_eq!(
            kept.iter().map(|p| p.target_text.as_str()).collect::<Vec<_>>(),
            ["a", "b"]
        );
        assert!((report.unique_rate - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(report.per_batch["1"], BatchCount { total: 2, unique: 2 });
        assert_eq!(report.per_batch["2"], BatchCount { total: 1, unique: 1 });
    }

    #[test]
    fn all_distinct_is_identity() {
        let pairs = vec![pair("a", "1"), pair("b", "1"), pair("c", "2")];
        let (kept, report) = dedup(&pairs);
        assert_eq!(kept, pairs);
        assert_eq!(report.unique_rate, 1.0);
    }

    #[test]
    fn dedup_is_idempotent() {
        let pairs = vec![pair("a", "1"), pair("a", "2"), pair("b", "2"), pair("B", "3")];
        let (kept, _) = dedup(&pairs);
        let (again, report) = dedup(&kept);
        assert_eq!(again, kept);
        assert_eq!(report.unique_rate, 1.0);
    }

    #[test]
    fn reconstruction_of_large_duplicated_corpus() {
        // 700,000 generated, 259,000 distinct: a 37% unique rate.
        let pairs: Vec<SentencePair> = (0..700_000)
            .map(|i| pair(&format!("s{}", i % 259_000), "b"))
            .collect();
        let (kept, report) = dedup(&pairs);
        assert_eq!(kept.len(), 259_000);
        assert!((report.unique_rate - 0.37).abs() < 1e-12);
    }

    #[test]
    fn subset_enumeration_counts() {
        let mut count = 0;
        for_each_subset(5, 3, |_| count += 1);
        assert_eq!(count, 10);
        assert_eq!(binomial(5, 3), Some(10));
        assert_eq!(binomial(60, 30), Some(118264581564861424));
    }

    #[test]
    fn distinct_corpus_curve_is_flat() {
        let batches: BTreeMap<String, Vec<String>> = (0..8)
            .map(|b| (format!("b{b}"), (0..5).map(|i| format!("{b}-{i}")).collect()))
            .collect();
        let curve = uniqueness_curve(&batches, &[1, 2, 4, 8], 50, 1).unwrap();
        for p in &curve.points {
            assert_eq!(p.mean_unique_rate, 1.0);
            assert_eq!(p.std, 0.0);
        }
    }

    #[test]
    fn identical_batches_give_reciprocal_rate() {
        let batches: BTreeMap<String, Vec<String>> = (0..3)
            .map(|b| (format!("b{b}"), vec!["x".into(), "y".into(), "z".into()]))
            .collect();
        let curve = uniqueness_curve(&batches, &[1, 2, 3], 1000, 0).unwrap();
        for p in &curve.points {
            assert!(p.exhaustive);
            assert!((p.mean_unique_rate - 1.0 / p.batch_count as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_batch_counts() {
        let batches: BTreeMap<String, Vec<String>> =
            [("a".to_string(), vec!["x".to_string()])].into();
        assert!(uniqueness_curve(&batches, &[2], 10, 0).is_err());
        assert!(uniqueness_curve(&batches, &[0], 10, 0).is_err());
        assert!(uniqueness_curve(&batches, &[1, 1], 10, 0).is_err());
    }

    #[test]
    fn sampled_curve_is_reproducible() {
        let batches: BTreeMap<String, Vec<String>> = (0..40)
            .map(|b| (format!("b{b:02}"), (0..5).map(|i| format!("s{}", (b * 3 + i) % 60)).collect()))
            .collect();
        let a = uniqueness_curve(&batches, &[2, 10, 20], 200, 9).unwrap();
        let b = uniqueness_curve(&batches, &[2, 10, 20], 200, 9).unwrap();
        assert_eq!(a, b);
        assert!(!a.points[1].exhaustive);
    }

    #[test]
    fn csv_export() {
        let curve = UniquenessCurve {
            points: vec![CurvePoint {
                batch_count: 2,
                mean_unique_rate: 0.5,
                std: 0.1,
                subsets: 3,
                exhaustive: true,
            }],
            subsamples_per_point: 1000,
        };
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "batch_count,mean_unique_rate,std\n2,0.5,0.1\n"
        );
    }
}
