//! Mono PCM clips and 16-bit WAV input/output.
//!
//! Samples are held as `f64` in `[-1, 1]` full scale. The wire format used by
//! the model endpoints is raw little-endian signed 16-bit PCM.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("wav error on {path}: {source}")]
    Wav {
        path: String,
        #[source]
        source: hound::Error,
    },
    #[error("{path}: expected mono audio, found {channels} channels")]
    NotMono { path: String, channels: u16 },
    #[error("{path}: unsupported sample format ({bits}-bit {kind})")]
    Format { path: String, bits: u16, kind: String },
    #[error("raw PCM byte count {0} is not a multiple of 2")]
    OddByteCount(usize),
}

/// A mono clip.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Clip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self { samples, sample_rate }
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Decode raw little-endian i16 PCM.
    pub fn from_pcm16_le(bytes: &[u8], sample_rate: u32) -> Result<Self, AudioError> {
        if bytes.len() % 2 != 0 {
            return Err(AudioError::OddByteCount(bytes.len()));
        }
        let samples = bytes
            .chunks_exact(2)
            .map(|c| i16_to_f64(i16::from_le_bytes([c[0], c[1]])))
            .collect();
        Ok(Self::new(samples, sample_rate))
    }

    /// Encode as raw little-endian i16 PCM, saturating out-of-range samples.
    pub fn to_pcm16_le(&self) -> Vec<u8> {
        self.samples
            .iter()
            .flat_map(|&s| f64_to_i16(s).to_le_bytes())
            .collect()
    }

    /// Number of samples that would saturate when quantized to 16 bits.
    pub fn clipped_samples(&self) -> usize {
        self.samples.iter().filter(|s| s.abs() > 1.0).count()
    }
}

pub fn i16_to_f64(s: i16) -> f64 {
    s as f64 / 32768.0
}

pub fn f64_to_i16(s: f64) -> i16 {
    (s * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

/// Read a mono WAV file (16-bit integer or 32-bit float PCM).
pub fn read_wav(path: &Path) -> Result<Clip, AudioError> {
    let p = path.display().to_string();
    let mut reader = hound::WavReader::open(path).map_err(|source| AudioError::Wav {
        path: p.clone(),
        source,
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(AudioError::NotMono {
            path: p,
            channels: spec.channels,
        });
    }
    let samples: Result<Vec<f64>, hound::Error> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(i16_to_f64))
            .collect(),
        (hound::SampleFormat::Float, 32) => {
            reader.samples::<f32>().map(|s| s.map(f64::from)).collect()
        }
        (kind, bits) => {
            return Err(AudioError::Format {
                path: p,
                bits,
                kind: format!("{kind:?}"),
            })
        }
    };
    let samples = samples.map_err(|source| AudioError::Wav {
        path: p.clone(),
        source,
    })?;
    Ok(Clip::new(samples, spec.sample_rate))
}

/// Write a mono 16-bit PCM WAV file. Out-of-range samples saturate.
pub fn write_wav(path: &Path, clip: &Clip) -> Result<(), AudioError> {
    let p = path.display().to_string();
    let wrap = |source| AudioError::Wav {
        path: p.clone(),
        source,
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wrap)?;
    for &s in &clip.samples {
        writer.write_sample(f64_to_i16(s)).map_err(wrap)?;
    }
    writer.finalize().map_err(wrap)
}

/// Encode a clip as an in-memory WAV file.
pub fn wav_bytes(clip: &Clip) -> Vec<u8> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut cursor = std::io::Cursor::new(Vec::new());
    {
        let mut writer =
            hound::WavWriter::new(&mut cursor, spec).expect("in-memory wav header write");
        for &s in &clip.samples {
            writer
                .write_sample(f64_to_i16(s))
                .expect("in-memory wav write");
        }
        writer.finalize().expect("in-memory wav finalize");
    }
    cursor.into_inner()
}
