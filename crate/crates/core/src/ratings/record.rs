use std::collections::HashSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::RatingError;

pub const RATINGS_CSV_HEADER: [&str; 11] = [
    "item_id",
    "rater_id",
    "model_id",
    "modality",
    "readability",
    "grammatical",
    "real_words",
    "notable_error",
    "adequacy",
    "intelligibility",
    "naturalness_5",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Text,
    TtsAudio,
}

/// One rater's judgment of one item.
///
/// Text items require the five text metrics; audio items require
/// intelligibility and five-point naturalness. Metrics outside the item's
/// modality may be left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub item_id: String,
    pub rater_id: String,
    pub model_id: String,
    pub modality: Modality,
    pub readability: Option<u8>,
    pub grammatical: Option<u8>,
    pub real_words: Option<u8>,
    pub notable_error: Option<u8>,
    pub adequacy: Option<u8>,
    pub intelligibility: Option<u8>,
    pub naturalness_5: Option<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Readability,
    Grammatical,
    RealWords,
    NotableError,
    Adequacy,
    Intelligibility,
    Naturalness5,
}

impl Metric {
    pub const TEXT: [Metric; 5] = [
        Metric::Readability,
        Metric::Grammatical,
        Metric::RealWords,
        Metric::NotableError,
        Metric::Adequacy,
    ];
    pub const AUDIO: [Metric; 2] = [Metric::Intelligibility, Metric::Naturalness5];
    pub const ALL: [Metric; 7] = [
        Metric::Readability,
        Metric::Grammatical,
        Metric::RealWords,
        Metric::NotableError,
        Metric::Adequacy,
        Metric::Intelligibility,
        Metric::Naturalness5,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Readability => "readability",
            Metric::Grammatical => "grammatical",
            Metric::RealWords => "real_words",
            Metric::NotableError => "notable_error",
            Metric::Adequacy => "adequacy",
            Metric::Intelligibility => "intelligibility",
            Metric::Naturalness5 => "naturalness_5",
        }
    }

    /// Inclusive valid range.
    pub fn range(self) -> (u8, u8) {
        match self {
            Metric::Readability | Metric::Adequacy => (1, 7),
            Metric::Grammatical | Metric::RealWords | Metric::NotableError => (0, 1),
            Metric::Intelligibility | Metric::Naturalness5 => (1, 5),
        }
    }

    pub fn for_modality(modality: Modality) -> &'static [Metric] {
        match modality {
            Modality::Text => &Self::TEXT,
            Modality::TtsAudio => &Self::AUDIO,
        }
    }

    pub fn get(self, r: &RatingRecord) -> Option<u8> {
        match self {
            Metric::Readability => r.readability,
            Metric::Grammatical => r.grammatical,
            Metric::RealWords => r.real_words,
            Metric::NotableError => r.notable_error,
            Metric::Adequacy => r.adequacy,
            Metric::Intelligibility => r.intelligibility,
            Metric::Naturalness5 => r.naturalness_5,
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = RatingError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| RatingError::InvalidInput(format!("unknown metric {s:?}")))
    }
}

impl RatingRecord {
    pub fn validate(&self) -> Result<(), RatingError> {
        let mut fields = Vec::new();
        if self.item_id.trim().is_empty() {
            fields.push("item_id".to_string());
        }
        if self.rater_id.trim().is_empty() {
            fields.push("rater_id".to_string());
        }
        let required = Metric::for_modality(self.modality);
        for m in Metric::ALL {
            let (lo, hi) = m.range();
            match m.get(self) {
                Some(v) if v < lo || v > hi => fields.push(m.name().to_string()),
                None if required.contains(&m) => fields.push(m.name().to_string()),
                _ => {}
            }
        }
        if fields.is_empty() {
            Ok(())
        } else {
            Err(RatingError::Validation { fields })
        }
    }
}

/// Read, validate, and check `(item_id, rater_id)` uniqueness.
pub fn read_ratings_csv<R: Read>(input: R) -> Result<Vec<RatingRecord>, RatingError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for row in rdr.deserialize() {
        let rec: RatingRecord = row?;
        rec.validate()?;
        if !seen.insert((rec.item_id.clone(), rec.rater_id.clone())) {
            return Err(RatingError::DuplicateRating {
                item_id: rec.item_id,
                rater_id: rec.rater_id,
            });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_ratings_csv<W: Write>(out: W, records: &[RatingRecord]) -> Result<(), RatingError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(RATINGS_CSV_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
