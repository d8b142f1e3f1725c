//! Utterance manifests, speaker- and transcript-exclusive splits, and
//! real/synthetic mixing.
//!
//! Durations are kept as sample counts so totals are exact rationals; the
//! float `duration` field is for readers of the manifest.

mod mix;
mod split;

pub use mix::{mix, MixMode, MixReport, MixSpec};
pub use split::{check_split, split, LeftoverPolicy, SplitOutput, SplitReport, SplitSpec, SplitStats};

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
/// Virtual sample rate for imported rows that only carry a duration.
pub const IMPORT_SAMPLE_RATE: u32 = 1_000_000;

pub type Duration = Ratio<u128>;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported manifest schema version {0}")]
    SchemaVersion(u32),
    #[error("group of {hours:.3} h cannot fit any split (speakers: {speakers:?}; transcripts: {transcripts:?})")]
    UnsplittableGroup {
        hours: f64,
        speakers: Vec<String>,
        transcripts: Vec<String>,
    },
    #[error("insufficient data for {what}: need {needed_hours:.3} h, have {available_hours:.3} h (short {deficit_hours:.3} h)")]
    InsufficientData {
        what: String,
        needed_hours: f64,
        available_hours: f64,
        deficit_hours: f64,
    },
    #[error("split verification failed: {0}")]
    Verification(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Male,
    Female,
    #[default]
    Unknown,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
            Gender::Unknown => "unknown",
        }
    }

    /// Lenient parse for imported data; anything unrecognized is unknown.
    pub fn parse_loose(s: &str) -> Self {
        match s.trim().to_lowercase().as_str() {
            "m" | "male" | "man" => Gender::Male,
            "f" | "female" | "woman" => Gender::Female,
            _ => Gender::Unknown,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Real,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub transcript: String,
    /// Path relative to the manifest's directory.
    pub audio: String,
    /// Seconds; always `num_samples / sample_rate`.
    pub duration: f64,
    pub num_samples: u64,
    pub sample_rate: u32,
    pub speaker_id: String,
    #[serde(default)]
    pub gender: Gender,
    pub origin: Origin,
    #[serde(default)]
    pub dataset_tag: String,
    /// Fields this crate does not interpret (e.g. model hypotheses).
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl Utterance {
    pub fn new(
        id: impl Into<String>,
        transcript: impl Into<String>,
        audio: impl Into<String>,
        num_samples: u64,
        sample_rate: u32,
        speaker_id: impl Into<String>,
        origin: Origin,
    ) -> Self {
        Utterance {
            id: id.into(),
            transcript: transcript.into(),
            audio: audio.into(),
            duration: num_samples as f64 / sample_rate as f64,
            num_samples,
            sample_rate,
            speaker_id: speaker_id.into(),
            gender: Gender::Unknown,
            origin,
            dataset_tag: String::new(),
            extra: BTreeMap::new(),
        }
    }

    pub fn exact_duration(&self) -> Duration {
        Ratio::new(self.num_samples as u128, self.sample_rate as u128)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::InvalidInput(format!("utterance {:?}: {m}", self.id)));
        if self.id.is_empty() {
            return bad("empty id".into());
        }
        if self.transcript.trim().is_empty() {
            return bad("empty transcript".into());
        }
        if self.num_samples == 0 || self.sample_rate == 0 {
            return bad("duration must be positive".into());
        }
        let exact = self.num_samples as f64 / self.sample_rate as f64;
        if (self.duration - exact).abs() > 1e-6 * exact.max(1.0) {
            return bad(format!("duration {} disagrees with sample count ({exact})", self.duration));
        }
        Ok(())
    }
}

pub fn total_duration(utts: &[Utterance]) -> Duration {
    utts.iter().map(Utterance::exact_duration).sum()
}

pub fn to_secs(d: Duration) -> f64 {
    *d.numer() as f64 / *d.denom() as f64
}

pub fn to_hours(d: Duration) -> f64 {
    to_secs(d) / 3600.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub schema_version: u32,
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
}

impl Default for ManifestHeader {
    fn default() -> Self {
        ManifestHeader {
            schema_version: MANIFEST_SCHEMA_VERSION,
            provenance: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub utterances: Vec<Utterance>,
}

impl Manifest {
    pub fn new(utterances: Vec<Utterance>) -> Self {
        Manifest {
            header: ManifestHeader::default(),
            utterances,
        }
    }

    pub fn read<R: Read>(input: R) -> Result<Self, CorpusError> {
        let reader = std::io::BufReader::new(input);
        let mut header = None;
        let mut utterances = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |e: serde_json::Error| CorpusError::Parse {
                line: i + 1,
                message: e.to_string(),
            };
            if header.is_none() {
                let h: ManifestHeader = serde_json::from_str(&line).map_err(parse_err)?;
                if h.schema_version != MANIFEST_SCHEMA_VERSION {
                    return Err(CorpusError::SchemaVersion(h.schema_version));
                }
                header = Some(h);
                continue;
            }
            let u: Utterance = serde_json::from_str(&line).map_err(parse_err)?;
            u.validate().map_err(|e| CorpusError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            utterances.push(u);
        }
        let header = header.ok_or_else(|| CorpusError::Parse {
            line: 0,
            message: "missing manifest header".into(),
        })?;
        Ok(Manifest { header, utterances })
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<(), CorpusError> {
        serde_json::to_writer(&mut out, &self.header).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
        for u in &self.utterances {
            serde_json::to_writer(&mut out, u).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_path(path: &std::path::Path) -> Result<Self, CorpusError> {
        Self::read(std::fs::File::open(path)?)
    }

    pub fn write_path(&self, path: &std::path::Path) -> Result<(), CorpusError> {
        self.write(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn total_duration(&self) -> Duration {
        total_duration(&self.utterances)
    }
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    path: String,
    transcript: String,
    speaker: String,
    #[serde(default)]
    gender: String,
    duration: f64,
}

/// Import `path,transcript,speaker,gender,duration` rows.
///
/// Durations (seconds) are stored at microsecond resolution. Ids are the
/// dataset tag followed by the row number.
pub fn import_csv<R: Read>(input: R, origin: Origin, dataset_tag: &str) -> Result<Vec<Utterance>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize().enumerate() {
        let row: CsvRow = row?;
        if !(row.duration > 0.0 && row.duration.is_finite()) {
            return Err(CorpusError::Parse {
                line: i + 2,
                message: format!("duration must be positive, got {}", row.duration),
            });
        }
        let samples = (row.duration * IMPORT_SAMPLE_RATE as f64).round() as u64;
        let mut u = Utterance::new(
            format!("{dataset_tag}-{:06}", i + 1),
            row.transcript,
            row.path,
            samples,
            IMPORT_SAMPLE_RATE,
            row.speaker,
            origin,
        );
        u.gender = Gender::parse_loose(&row.gender);
        u.dataset_tag = dataset_tag.to_string();
        u.validate().map_err(|e| CorpusError::Parse {
            line: i + 2,
            message: e.to_string(),
        })?;
        out.push(u);
    }
    Ok(out)
}

/// Partition by gender. Every utterance lands in exactly one bucket.
pub fn disaggregate(utts: &[Utterance]) -> BTreeMap<Gender, Vec<Utterance>> {
    let mut out: BTreeMap<Gender, Vec<Utterance>> = BTreeMap::new();
    for u in utts {
        out.entry(u.gender).or_default().push(u.clone());
    }
    out
}

#[cfg(test)]
pub(crate) fn test_utt(id: &str, transcript: &str, speaker: &str, secs: u64) -> Utterance {
    Utterance::new(id, transcript, format!("{id}.wav"), secs * 16000, 16000, speaker, Origin::Real)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_roundtrip_keeps_extra_fields() {
        let mut u = test_utt("a", "hello", "s1", 2);
        u.extra.insert("hyp_whisper".into(), serde_json::json!("helo"));
        let mut m = Manifest::new(vec![u, test_utt("b", "bye", "s2", 1)]);
        m.header.provenance.insert("seed".into(), "7".into());
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("{\"schema_version\":1"));
        assert_eq!(Manifest::read(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn bad_schema_version() {
        let text = "{\"schema_version\":9}\n";
        assert!(matches!(Manifest::read(text.as_bytes()), Err(CorpusError::SchemaVersion(9))));
    }

    #[test]
    fn exact_durations_sum() {
        let a = Utterance::new("a", "x", "a.wav", 1, 3, "s", Origin::Real);
        let b = Utterance::new("b", "y", "b.wav", 2, 3, "s", Origin::Real);
        assert_eq!(total_duration(&[a, b]), Ratio::from_integer(1));
    }

    #[test]
    fn csv_import() {
        let csv = "path,transcript,speaker,gender,duration\na.wav,Hi there,spk1,F,1.5\nb.wav,yo,spk2,,0.25\n";
        let utts = import_csv(csv.as_bytes(), Origin::Real, "ext").unwrap();
        assert_eq!(utts.len(), 2);
        assert_eq!(utts[0].gender, Gender::Female);
        assert_eq!(utts[1].gender, Gender::Unknown);
        assert_eq!(utts[0].exact_duration(), Ratio::new(3, 2));
        assert_eq!(utts[1].id, "ext-000002");
        let bad = "path,transcript,speaker,gender,duration\na.wav,Hi,spk1,F,0\n";
        assert!(import_csv(bad.as_bytes(), Origin::Real, "ext").is_err());
    }

    #[test]
    fn disaggregate_partitions() {
        let mut utts: Vec<_> = (0..7).map(|i| test_utt(&format!("u{i}"), "t", "s", 1)).collect();
        assert_eq!(disaggregate(&utts).len(), 1);
        utts[0].gender = Gender::Male;
        utts[1].gender = Gender::Female;
        let parts = disaggregate(&utts);
        assert_eq!(parts.values().map(Vec::len).sum::<usize>(), 7);
        assert_eq!(parts[&Gender::Unknown].len(), 5);
    }
}
