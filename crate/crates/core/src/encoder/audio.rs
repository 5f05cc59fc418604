//! WAV decoding and content hashing for audio clips.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::EncoderError;

/// What a backend does to audio before encoding; recorded with each run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub sample_rate: u32,
    pub mono: bool,
    pub clip_policy: String,
}

/// A decoded clip, mixed down to mono at its native rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub path: PathBuf,
    /// SHA-256 of the decoded interleaved samples plus rate and channel count.
    pub content_hash: String,
    pub sample_rate: u32,
    pub channels: u16,
    pub samples: Vec<f32>,
}

fn decode_err(path: &Path, e: impl ToString) -> EncoderError {
    EncoderError::AudioDecode {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

impl AudioClip {
    pub fn load(path: &Path) -> Result<Self, EncoderError> {
        let reader = hound::WavReader::open(path).map_err(|e| decode_err(path, e))?;
        let spec = reader.spec();
        let interleaved: Vec<f32> = match spec.sample_format {
            hound::SampleFormat::Float => reader
                .into_samples::<f32>()
                .collect::<Result<_, _>>()
                .map_err(|e| decode_err(path, e))?,
            hound::SampleFormat::Int => {
                let scale = 1.0 / (1i64 << (spec.bits_per_sample - 1)) as f32;
                reader
                    .into_samples::<i32>()
                    .map(|s| s.map(|v| v as f32 * scale))
                    .collect::<Result<_, _>>()
                    .map_err(|e| decode_err(path, e))?
            }
        };
        if interleaved.is_empty() {
            return Err(decode_err(path, "no samples"));
        }
        Ok(Self::from_interleaved(path, spec.sample_rate, spec.channels, &interleaved))
    }

    pub fn from_interleaved(path: &Path, sample_rate: u32, channels: u16, interleaved: &[f32]) -> Self {
        let mut h = Sha256::new();
        h.update(sample_rate.to_le_bytes());
        h.update(channels.to_le_bytes());
        for s in interleaved {
            h.update(s.to_le_bytes());
        }
        let ch = channels.max(1) as usize;
        let samples = interleaved
            .chunks(ch)
            .map(|frame| frame.iter().sum::<f32>() / frame.len() as f32)
            .collect();
        Self {
            path: path.to_path_buf(),
            content_hash: hex::encode(h.finalize()),
            sample_rate,
            channels,
            samples,
        }
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Linear-interpolation resample of the mono signal.
    pub fn resampled(&self, rate: u32) -> Vec<f32> {
        if rate == self.sample_rate || self.samples.len() < 2 {
            return self.samples.clone();
        }
        let ratio = self.sample_rate as f64 / rate as f64;
        let n = ((self.samples.len() as f64) / ratio).floor().max(1.0) as usize;
        let last = self.samples.len() - 1;
        (0..n)
            .map(|i| {
                let pos = i as f64 * ratio;
                let j = (pos.floor() as usize).min(last);
                let frac = (pos - j as f64) as f32;
                let next = self.samples[(j + 1).min(last)];
                self.samples[j] * (1.0 - frac) + next * frac
            })
            .collect()
    }
}

/// Writes a 16-bit mono WAV.
pub fn write_wav(path: &Path, sample_rate: u32, samples: &[f32]) -> Result<(), EncoderError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| decode_err(path, e))?;
    for s in samples {
        let v = (s.clamp(-1.0, 1.0) * i16::MAX as f32).round() as i16;
        w.write_sample(v).map_err(|e| decode_err(path, e))?;
    }
    w.finalize().map_err(|e| decode_err(path, e))
}
