use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{check_lengths, edit_align, EditOp, EvalError, Normalizer};

const MAX_SAMPLES: usize = 3;

pub const ADJUDICATION_HEADER: [&str; 5] = [
    "language",
    "evaluation_transcript",
    "model_output",
    "assessment",
    "comments",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InventoryRow {
    pub reference_word: String,
    pub occurrences: usize,
    pub times_correct: usize,
    pub always_failed: bool,
    /// Up to three (reference, hypothesis) sentence pairs where the word was missed.
    pub sample_pairs: Vec<(String, String)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorInventory {
    pub rows: Vec<InventoryRow>,
}

/// Reference words the model missed at least once.
///
/// Rows are ordered always-failed first, then by occurrences descending, then
/// alphabetically; `top_k` truncates the list.
pub fn error_inventory(
    refs: &[String],
    hyps: &[String],
    norm: &Normalizer,
    top_k: Option<usize>,
) -> Result<ErrorInventory, EvalError> {
    check_lengths(refs, hyps)?;
    norm.validate()?;
    #[derive(Default)]
    struct Acc {
        occurrences: usize,
        correct: usize,
        samples: Vec<(String, String)>,
    }
    let mut acc: HashMap<String, Acc> = HashMap::new();
    for (r, h) in refs.iter().zip(hyps) {
        let (rw, hw) = (norm.words(r), norm.words(h));
        let alignment = edit_align(&rw, &hw);
        for op in alignment.ops {
            let (ri, hit) = match op {
                EditOp::Match { r, .. } => (r, true),
                EditOp::Sub { r, .. } | EditOp::Del { r } => (r, false),
                EditOp::Ins { .. } => continue,
            };
            let a = acc.entry(rw[ri].clone()).or_default();
            a.occurrences += 1;
            if hit {
                a.correct += 1;
            } else {
                let pair = (r.clone(), h.clone());
                if a.samples.len() < MAX_SAMPLES && !a.samples.contains(&pair) {
                    a.samples.push(pair);
                }
            }
        }
    }
    let mut rows: Vec<InventoryRow> = acc
        .into_iter()
        .filter(|(_, a)| a.correct < a.occurrences)
        .map(|(w, a)| InventoryRow {
            reference_word: w,
            occurrences: a.occurrences,
            times_correct: a.correct,
            always_failed: a.correct == 0,
            sample_pairs: a.samples,
        })
        .collect();
    rows.sort_by(|a, b| {
        b.always_failed
            .cmp(&a.always_failed)
            .then(b.occurrences.cmp(&a.occurrences))
            .then(a.reference_word.cmp(&b.reference_word))
    });
    if let Some(k) = top_k {
        rows.truncate(k);
    }
    Ok(ErrorInventory { rows })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjudicationRow {
    pub language: String,
    pub evaluation_transcript: String,
    pub model_output: String,
    #[serde(default)]
    pub assessment: String,
    #[serde(default)]
    pub comments: String,
}

impl AdjudicationRow {
    pub fn key(&self) -> (&str, &str) {
        (&self.evaluation_transcript, &self.model_output)
    }
}

/// One blank review row per distinct sentence pair, in inventory order.
pub fn adjudication_rows(inventory: &ErrorInventory, language: &str) -> Vec<AdjudicationRow> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in &inventory.rows {
        for (r, h) in &row.sample_pairs {
            if seen.insert((r.clone(), h.clone())) {
                out.push(AdjudicationRow {
                    language: language.to_string(),
                    evaluation_transcript: r.clone(),
                    model_output: h.clone(),
                    assessment: String::new(),
                    comments: String::new(),
                });
            }
        }
    }
    out
}

pub fn write_adjudication_csv<W: Write>(out: W, rows: &[AdjudicationRow]) -> Result<(), EvalError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(ADJUDICATION_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a reviewed sheet and return its rows keyed by
/// (evaluation transcript, model output).
pub fn read_adjudication_csv<R: Read>(input: R) -> Result<BTreeMap<(String, String), AdjudicationRow>, EvalError> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ADJUDICATION_HEADER {
        return Err(EvalError::InvalidInput(format!("unexpected header {headers:?}")));
    }
    let mut out = BTreeMap::new();
    for row in rdr.deserialize() {
        let row: AdjudicationRow = row?;
        let key = (row.evaluation_transcript.clone(), row.model_output.clone());
        if out.insert(key.clone(), row).is_some() {
            return Err(EvalError::InvalidInput(format!("duplicate row for {key:?}")));
        }
    }
    Ok(out)
}
