//! Deterministic stand-in encoder for tests and offline runs.
//!
//! Hashed mode maps each text or clip to a Gaussian vector seeded from
//! sha256(seed, content). Planted mode gives class `c` the basis direction
//! `e_c`: any text mentioning the label embeds near `e_c`, and a clip whose
//! dominant tone sits at [`planted_frequency`]`(c)` embeds exactly as `e_c`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::{AudioClip, Capabilities, EncoderBackend, EncoderError, Preprocessing};

pub const DEFAULT_DIMENSION: usize = 64;
pub const MOCK_SAMPLE_RATE: u32 = 16_000;
/// Planted tones must stay below Nyquist at 16 kHz.
pub const MAX_PLANTED_CLASSES: usize = 52;
/// Norm of the perturbation added to planted text embeddings.
pub const PLANTED_NOISE: f64 = 0.05;

/// Tone frequency (Hz) that identifies planted class `class`.
pub fn planted_frequency(class: usize) -> f64 {
    200.0 + 150.0 * class as f64
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    dimension: usize,
    seed: u64,
    planted: Option<Vec<String>>,
}

impl MockBackend {
    pub fn new(dimension: usize, seed: u64) -> Result<Self, EncoderError> {
        if dimension == 0 {
            return Err(EncoderError::BackendLoad("mock dimension must be at least 1".into()));
        }
        Ok(Self {
            dimension,
            seed,
            planted: None,
        })
    }

    /// Planted mode over `labels` (label texts, in class order).
    pub fn planted(labels: Vec<String>, dimension: usize, seed: u64) -> Result<Self, EncoderError> {
        if labels.is_empty() || labels.len() > MAX_PLANTED_CLASSES {
            return Err(EncoderError::BackendLoad(format!(
                "planted mode needs 1..={MAX_PLANTED_CLASSES} classes, got {}",
                labels.len()
            )));
        }
        if dimension < labels.len() {
            return Err(EncoderError::BackendLoad(format!(
                "planted mode needs dimension >= {} classes, got {dimension}",
                labels.len()
            )));
        }
        let labels: Vec<String> = labels.iter().map(|l| l.to_lowercase()).collect();
        for (i, l) in labels.iter().enumerate() {
            if l.trim().is_empty() || labels[..i].contains(l) {
                return Err(EncoderError::BackendLoad(format!("planted label `{l}` is empty or repeated")));
            }
        }
        Ok(Self {
            dimension,
            seed,
            planted: Some(labels),
        })
    }

    pub fn is_planted(&self) -> bool {
        self.planted.is_some()
    }

    fn gaussian(&self, domain: &str, content: &[u8]) -> Vec<f64> {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(domain.as_bytes());
        h.update([0]);
        h.update(content);
        let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
        (0..self.dimension).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn basis(&self, class: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.dimension];
        v[class] = 1.0;
        v
    }

    /// Class named by `text`. The label slot right after "sound of" is tried
    /// first, so a source like "train station" cannot outvote the label;
    /// otherwise any whole-word occurrence counts. Longest label wins, then
    /// lowest index.
    fn text_class(&self, text: &str) -> Option<usize> {
        let labels = self.planted.as_ref()?;
        let lower = text.to_lowercase();
        if let Some(at) = lower.find("sound of ") {
            let mut slot = &lower[at + "sound of ".len()..];
            for article in ["a ", "an ", "the "] {
                slot = slot.strip_prefix(article).unwrap_or(slot);
            }
            let hit = longest_match(labels, |label| {
                slot.strip_prefix(label)
                    .is_some_and(|rest| !rest.chars().next().is_some_and(char::is_alphanumeric))
            });
            if hit.is_some() {
                return hit;
            }
        }
        longest_match(labels, |label| {
            lower.match_indices(label).any(|(at, m)| {
                let before = lower[..at].chars().next_back();
                let after = lower[at + m.len()..].chars().next();
                !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
            })
        })
    }

    fn audio_class(&self, clip: &AudioClip) -> Option<usize> {
        let n = self.planted.as_ref()?.len();
        let signal = clip.resampled(MOCK_SAMPLE_RATE);
        let energy: f64 = signal.iter().map(|&s| (s as f64).powi(2)).sum();
        if energy <= 1e-9 {
            return None;
        }
        (0..n)
            .map(|c| (c, goertzel_power(&signal, planted_frequency(c), MOCK_SAMPLE_RATE)))
            .fold(None, |best: Option<(usize, f64)>, (c, p)| match best {
                Some((_, bp)) if bp >= p => best,
                _ => Some((c, p)),
            })
            .map(|(c, _)| c)
    }
}

fn longest_match(labels: &[String], found: impl Fn(&str) -> bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (c, label) in labels.iter().enumerate() {
        if found(label) && best.is_none_or(|b| labels[b].len() < label.len()) {
            best = Some(c);
        }
    }
    best
}

/// Signal power at `freq` Hz.
pub fn goertzel_power(signal: &[f32], freq: f64, sample_rate: u32) -> f64 {
    let w = 2.0 * std::f64::consts::PI * freq / sample_rate as f64;
    let coeff = 2.0 * w.cos();
    let (mut s1, mut s2) = (0.0f64, 0.0f64);
    for &x in signal {
        let s = x as f64 + coeff * s1 - s2;
        s2 = s1;
        s1 = s;
    }
    s1 * s1 + s2 * s2 - coeff * s1 * s2
}

impl EncoderBackend for MockBackend {
    fn backend_id(&self) -> &str {
        if self.is_planted() {
            "mock-planted"
        } else {
            "mock"
        }
    }

    fn fingerprint(&self) -> String {
        let mode = match &self.planted {
            Some(labels) => {
                let digest = Sha256::digest(labels.join("\n").as_bytes());
                format!("planted-{}", &hex::encode(digest)[..16])
            }
            None => "hashed".into(),
        };
        format!("mock-d{}-s{}-{mode}", self.dimension, self.seed)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::BOTH
    }

    fn preprocessing(&self) -> Preprocessing {
        Preprocessing {
            sample_rate: MOCK_SAMPLE_RATE,
            mono: true,
            clip_policy: "full clip, linear resample".into(),
        }
    }

    fn encode_text(&self, texts: &[String], _seed: u64) -> Result<Vec<Vec<f64>>, EncoderError> {
        Ok(texts
            .iter()
            .map(|t| {
                let noise = self.gaussian("text", t.as_bytes());
                match self.text_class(t) {
                    Some(c) => {
                        let scale = PLANTED_NOISE / (self.dimension as f64).sqrt();
                        self.basis(c).iter().zip(noise).map(|(b, n)| b + scale * n).collect()
                    }
                    None => noise,
                }
            })
            .collect())
    }

    fn encode_audio(&self, clips: &[AudioClip], _seed: u64) -> Result<Vec<Vec<f64>>, EncoderError> {
        Ok(clips
            .iter()
            .map(|clip| match self.audio_class(clip) {
                Some(c) => self.basis(c),
                None => self.gaussian("audio", clip.content_hash.as_bytes()),
            })
            .collect())
    }
}
