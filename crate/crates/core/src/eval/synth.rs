//! Synthetic tone datasets for the planted mock backend.
//!
//! Clip `i` belongs to class `i mod N` and is a sine at
//! [`planted_frequency`] of its class with random amplitude and phase plus a
//! little white noise. The output directory is a dataset root holding
//! `clips/`, `manifest.csv`, and a one-entry `taxonomy.toml`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{DatasetManifest, EvalDataset, EvalError, ManifestRow};
use crate::encoder::audio::write_wav;
use crate::encoder::mock::MOCK_SAMPLE_RATE;
use crate::encoder::{planted_frequency, MAX_PLANTED_CLASSES};
use crate::taxonomy::{CategoryId, Taxonomy};

pub const SYNTH_DATASET_ID: &str = "Synthetic";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub dataset_id: String,
    pub category: CategoryId,
    /// `(label_id, display text)` in class order.
    pub labels: Vec<(String, String)>,
    /// Total clip count across all classes.
    pub clips: usize,
    pub seconds: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// Borrows the category and first `classes` labels of a taxonomy dataset.
    pub fn from_dataset(
        taxonomy: &Taxonomy,
        source: &str,
        classes: usize,
        clips: usize,
        seed: u64,
    ) -> Result<Self, EvalError> {
        let descriptor = taxonomy.dataset(source)?;
        let labels = taxonomy.labeled_texts(source)?;
        if classes == 0 || classes > labels.len() {
            return Err(EvalError::InvalidArgument(format!(
                "{source} has {} labels, {classes} requested",
                labels.len()
            )));
        }
        Ok(Self {
            dataset_id: SYNTH_DATASET_ID.into(),
            category: descriptor.category,
            labels: labels.into_iter().take(classes).collect(),
            clips,
            seconds: 0.25,
            seed,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub root: PathBuf,
    pub taxonomy_path: PathBuf,
    pub taxonomy: Taxonomy,
    pub dataset: EvalDataset,
}

#[derive(Serialize)]
struct TaxonomyFile<'a> {
    dataset: Vec<TaxonomyEntry<'a>>,
}

#[derive(Serialize)]
struct TaxonomyEntry<'a> {
    id: &'a str,
    category: &'a str,
    manifest: &'a str,
    split: &'a str,
    labels: Vec<&'a str>,
    display: BTreeMap<&'a str, &'a str>,
}

fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

pub fn generate(spec: &SynthSpec, root: &Path) -> Result<SynthDataset, EvalError> {
    let n = spec.labels.len();
    if n == 0 || n > MAX_PLANTED_CLASSES {
        return Err(EvalError::InvalidArgument(format!(
            "synthetic datasets need 1..={MAX_PLANTED_CLASSES} classes, got {n}"
        )));
    }
    if spec.clips < n {
        return Err(EvalError::InvalidArgument(format!("{} clips cannot cover {n} classes", spec.clips)));
    }
    if spec.seconds.is_nan() || spec.seconds <= 0.0 {
        return Err(EvalError::InvalidArgument("clip length must be positive".into()));
    }
    let clips_dir = root.join("clips");
    std::fs::create_dir_all(&clips_dir).map_err(|e| EvalError::io(&clips_dir, e))?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let len = (spec.seconds * MOCK_SAMPLE_RATE as f64).round() as usize;
    let mut rows = Vec::with_capacity(spec.clips);
    for i in 0..spec.clips {
        let class = i % n;
        let (label_id, _) = &spec.labels[class];
        let freq = planted_frequency(class);
        let amp: f64 = rng.random_range(0.3..0.8);
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let samples: Vec<f32> = (0..len)
            .map(|t| {
                let x = amp * (std::f64::consts::TAU * freq * t as f64 / MOCK_SAMPLE_RATE as f64 + phase).sin();
                (x + rng.random_range(-0.01..0.01)) as f32
            })
            .collect();
        let rel = PathBuf::from("clips").join(format!("{i:04}_{}.wav", slug(label_id)));
        write_wav(&root.join(&rel), MOCK_SAMPLE_RATE, &samples)?;
        rows.push(ManifestRow {
            clip_path: rel,
            label: label_id.clone(),
        });
    }

    let manifest = DatasetManifest {
        dataset_id: spec.dataset_id.clone(),
        split: "synthetic".into(),
        root: root.to_path_buf(),
        rows,
    };
    manifest.write(&root.join("manifest.csv"))?;

    let file = TaxonomyFile {
        dataset: vec![TaxonomyEntry {
            id: &spec.dataset_id,
            category: spec.category.as_str(),
            manifest: "manifest.csv",
            split: "synthetic",
            labels: spec.labels.iter().map(|(id, _)| id.as_str()).collect(),
            display: spec.labels.iter().map(|(id, t)| (id.as_str(), t.as_str())).collect(),
        }],
    };
    let text = format!(
        "# Synthetic planted-tone dataset (seed {}).\n\n{}",
        spec.seed,
        toml::to_string(&file).expect("taxonomy serializes")
    );
    let taxonomy_path = root.join("taxonomy.toml");
    std::fs::write(&taxonomy_path, &text).map_err(|e| EvalError::io(&taxonomy_path, e))?;
    let taxonomy = Taxonomy::from_toml_str(&text)?;
    let dataset = EvalDataset::load(&taxonomy, &spec.dataset_id, root)?;
    Ok(SynthDataset {
        root: root.to_path_buf(),
        taxonomy_path,
        taxonomy,
        dataset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::AudioClip;

    #[test]
    fn writes_balanced_reloadable_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec::from_dataset(&Taxonomy::shipped(), "VocalSound", 5, 100, 7).unwrap();
        let synth = generate(&spec, dir.path()).unwrap();
        let m = &synth.dataset.manifest;
        assert_eq!(m.rows.len(), 100);
        for (id, _) in &spec.labels {
            assert_eq!(m.rows.iter().filter(|r| &r.label == id).count(), 20);
        }
        assert_eq!(synth.dataset.labels[3], ("throatclearing".to_string(), "throat clearing".to_string()));
        assert_eq!(synth.dataset.descriptor.category, CategoryId::NonVerbalVocal);
        m.check_files().unwrap();
        let clip = AudioClip::load(&m.clip_paths()[0]).unwrap();
        assert_eq!(clip.samples.len(), 4000);

        let again = tempfile::tempdir().unwrap();
        generate(&spec, again.path()).unwrap();
        let a = std::fs::read(dir.path().join(&m.rows[42].clip_path)).unwrap();
        let b = std::fs::read(again.path().join(&m.rows[42].clip_path)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_specs() {
        let tax = Taxonomy::shipped();
        assert!(SynthSpec::from_dataset(&tax, "SESA", 5, 100, 0).is_err());
        let mut spec = SynthSpec::from_dataset(&tax, "SESA", 4, 100, 0).unwrap();
        spec.clips = 3;
        assert!(generate(&spec, Path::new("/nonexistent")).is_err());
    }
}
