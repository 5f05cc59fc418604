//! Builds manifests from each dataset's distributed layout.
//!
//! `root` is the directory the archive was unpacked into:
//!
//! | dataset | layout read |
//! |---|---|
//! | ESC50 | `meta/esc50.csv` (`filename`, `category`), clips in `audio/` |
//! | USD8K | `metadata/UrbanSound8K.csv` (`slice_file_name`, `fold`, `class`), clips in `audio/fold<N>/` |
//! | NSynthInstrument, NSynthSource | `examples.json` of one split, clips in `audio/` |
//! | TUT | `meta.txt`, tab-separated `path<TAB>scene` |
//! | BeijingOpera, Cochlscene, GTZAN, MridangamTonic | one folder per class, any depth |
//! | MridangamStroke, SESA, VocalSound | class name as a `_`/`-` separated token of the file name |
//!
//! Clips whose class cannot be determined are skipped and counted.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use tracing::warn;

use super::{DatasetManifest, EvalError, ManifestRow};
use crate::taxonomy::Taxonomy;

fn read_err(path: &Path, e: impl std::fmt::Display) -> EvalError {
    EvalError::Manifest(format!("{}: {e}", path.display()))
}

fn wav_files(root: &Path) -> Result<Vec<PathBuf>, EvalError> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), EvalError> {
        for entry in std::fs::read_dir(dir).map_err(|e| EvalError::io(dir, e))? {
            let p = entry.map_err(|e| EvalError::io(dir, e))?.path();
            if p.is_dir() {
                walk(&p, out)?;
            } else if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
                out.push(p);
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, &mut out)?;
    out.sort();
    Ok(out)
}

/// Case-insensitive lookup from spelling to label id.
fn label_index(labels: &[String]) -> HashMap<String, String> {
    labels.iter().map(|l| (l.to_lowercase(), l.clone())).collect()
}

fn relative(root: &Path, p: &Path) -> PathBuf {
    p.strip_prefix(root).unwrap_or(p).to_path_buf()
}

#[derive(Deserialize)]
struct Esc50Row {
    filename: String,
    category: String,
}

#[derive(Deserialize)]
struct Us8kRow {
    slice_file_name: String,
    fold: u32,
    class: String,
}

#[derive(Deserialize)]
struct NsynthNote {
    instrument_family_str: String,
    instrument_source_str: String,
}

fn from_csv<T, F>(path: &Path, mut row: F) -> Result<Vec<(PathBuf, String)>, EvalError>
where
    T: for<'de> Deserialize<'de>,
    F: FnMut(T) -> (PathBuf, String),
{
    let mut r = csv::Reader::from_path(path).map_err(|e| read_err(path, e))?;
    r.deserialize::<T>()
        .map(|rec| rec.map(&mut row).map_err(|e| read_err(path, e)))
        .collect()
}

fn by_folder(root: &Path, labels: &[String]) -> Result<Vec<(PathBuf, String)>, EvalError> {
    let index = label_index(labels);
    Ok(wav_files(root)?
        .into_iter()
        .filter_map(|p| {
            let rel = relative(root, &p);
            let parent = rel.parent()?;
            let label = parent
                .components()
                .rev()
                .find_map(|c| index.get(&c.as_os_str().to_string_lossy().to_lowercase()))?;
            Some((rel, label.clone()))
        })
        .collect())
}

fn by_filename_token(root: &Path, labels: &[String]) -> Result<Vec<(PathBuf, String)>, EvalError> {
    let index = label_index(labels);
    Ok(wav_files(root)?
        .into_iter()
        .filter_map(|p| {
            let stem = p.file_stem()?.to_string_lossy().to_lowercase();
            let mut hits: Vec<&String> = stem.split(['_', '-']).filter_map(|t| index.get(t)).collect();
            hits.dedup();
            match hits.as_slice() {
                [one] => Some((relative(root, &p), (*one).clone())),
                _ => None,
            }
        })
        .collect())
}

/// Scans `root` for `dataset_id` and returns its manifest (not yet written).
pub fn prepare(taxonomy: &Taxonomy, dataset_id: &str, root: &Path) -> Result<DatasetManifest, EvalError> {
    let descriptor = taxonomy.dataset(dataset_id)?;
    let labels = &descriptor.class_labels;
    let pairs = match dataset_id {
        "ESC50" => from_csv(&root.join("meta/esc50.csv"), |r: Esc50Row| {
            (PathBuf::from("audio").join(r.filename), r.category)
        })?,
        "USD8K" => from_csv(&root.join("metadata/UrbanSound8K.csv"), |r: Us8kRow| {
            (PathBuf::from(format!("audio/fold{}", r.fold)).join(r.slice_file_name), r.class)
        })?,
        "NSynthInstrument" | "NSynthSource" => {
            let path = root.join("examples.json");
            let text = std::fs::read_to_string(&path).map_err(|e| EvalError::io(&path, e))?;
            let notes: BTreeMap<String, NsynthNote> = serde_json::from_str(&text).map_err(|e| read_err(&path, e))?;
            notes
                .into_iter()
                .map(|(key, n)| {
                    let label = if dataset_id == "NSynthInstrument" {
                        n.instrument_family_str
                    } else {
                        n.instrument_source_str
                    };
                    (PathBuf::from("audio").join(format!("{key}.wav")), label)
                })
                .collect()
        }
        "TUT" => {
            let path = root.join("meta.txt");
            let text = std::fs::read_to_string(&path).map_err(|e| EvalError::io(&path, e))?;
            text.lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| {
                    let mut cols = l.split('\t');
                    match (cols.next(), cols.next()) {
                        (Some(p), Some(s)) => Ok((PathBuf::from(p.trim()), s.trim().to_string())),
                        _ => Err(read_err(&path, format!("malformed line `{l}`"))),
                    }
                })
                .collect::<Result<_, _>>()?
        }
        "BeijingOpera" | "Cochlscene" | "GTZAN" | "MridangamTonic" => by_folder(root, labels)?,
        "MridangamStroke" | "SESA" | "VocalSound" => by_filename_token(root, labels)?,
        other => {
            return Err(EvalError::InvalidArgument(format!(
                "no adapter for `{other}`; write its manifest by hand"
            )))
        }
    };

    let index = label_index(labels);
    let total = pairs.len();
    let mut rows: Vec<ManifestRow> = pairs
        .into_iter()
        .filter_map(|(clip_path, label)| {
            index.get(&label.to_lowercase()).map(|l| ManifestRow {
                clip_path,
                label: l.clone(),
            })
        })
        .collect();
    rows.sort_by(|a, b| a.clip_path.cmp(&b.clip_path));
    rows.dedup_by(|a, b| a.clip_path == b.clip_path);
    if rows.len() < total {
        warn!(dataset = dataset_id, skipped = total - rows.len(), "entries with unknown labels skipped");
    }
    if rows.is_empty() {
        return Err(EvalError::Manifest(format!(
            "{dataset_id}: no labelled clips found under {}",
            root.display()
        )));
    }
    Ok(DatasetManifest {
        dataset_id: dataset_id.into(),
        split: descriptor.split.clone(),
        root: root.to_path_buf(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch(root: &Path, rel: &str) {
        let p = root.join(rel);
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(p, b"").unwrap();
    }

    fn labels_of(m: &DatasetManifest) -> Vec<(String, String)> {
        m.rows
            .iter()
            .map(|r| (r.clip_path.display().to_string(), r.label.clone()))
            .collect()
    }

    #[test]
    fn esc50_and_us8k_metadata() {
        let tax = Taxonomy::shipped();
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), "meta/x");
        std::fs::write(
            dir.path().join("meta/esc50.csv"),
            "filename,fold,target,category,esc10,src_file,take\n1-100038-A-14.wav,1,14,chirping_birds,False,100038,A\n1-100032-A-0.wav,1,0,dog,True,100032,A\n",
        )
        .unwrap();
        let m = prepare(&tax, "ESC50", dir.path()).unwrap();
        assert_eq!(
            labels_of(&m),
            [
                ("audio/1-100032-A-0.wav".into(), "dog".into()),
                ("audio/1-100038-A-14.wav".into(), "chirping_birds".into())
            ]
        );

        touch(dir.path(), "metadata/x");
        std::fs::write(
            dir.path().join("metadata/UrbanSound8K.csv"),
            "slice_file_name,fsID,start,end,salience,fold,classID,class\n100032-3-0-0.wav,100032,0.0,0.3,1,5,3,dog_bark\n",
        )
        .unwrap();
        let m = prepare(&tax, "USD8K", dir.path()).unwrap();
        assert_eq!(labels_of(&m), [("audio/fold5/100032-3-0-0.wav".into(), "dog_bark".into())]);
    }

    #[test]
    fn nsynth_both_views() {
        let tax = Taxonomy::shipped();
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("examples.json"),
            r#"{"bass_synthetic_033-022-050": {"instrument_family_str": "bass", "instrument_source_str": "synthetic", "pitch": 22}}"#,
        )
        .unwrap();
        let i = prepare(&tax, "NSynthInstrument", dir.path()).unwrap();
        let s = prepare(&tax, "NSynthSource", dir.path()).unwrap();
        assert_eq!(i.rows[0].label, "bass");
        assert_eq!(s.rows[0].label, "synthetic");
        assert_eq!(i.rows[0].clip_path, PathBuf::from("audio/bass_synthetic_033-022-050.wav"));
    }

    #[test]
    fn tut_meta() {
        let tax = Taxonomy::shipped();
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("meta.txt"),
            "audio/1028.wav\tcafe/restaurant\n audio/1029.wav\tbeach\nbad line\n",
        )
        .unwrap();
        assert!(prepare(&tax, "TUT", dir.path()).is_err());
        std::fs::write(dir.path().join("meta.txt"), "audio/1028.wav\tcafe/restaurant\naudio/1029.wav\tbeach\n").unwrap();
        let m = prepare(&tax, "TUT", dir.path()).unwrap();
        assert_eq!(m.rows[0].label, "cafe/restaurant");
        assert_eq!(m.split, "evaluation");
    }

    #[test]
    fn folder_and_filename_layouts() {
        let tax = Taxonomy::shipped();
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), "genres_original/hiphop/hiphop.00001.wav");
        touch(dir.path(), "genres_original/blues/blues.00000.wav");
        touch(dir.path(), "genres_original/README.wav");
        let m = prepare(&tax, "GTZAN", dir.path()).unwrap();
        assert_eq!(m.rows.len(), 2);
        assert_eq!(m.rows[1].label, "hiphop");

        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), "Test/SubwayStation/a.wav");
        touch(dir.path(), "Test/Bus/b.wav");
        let m = prepare(&tax, "Cochlscene", dir.path()).unwrap();
        assert_eq!(m.rows[1].label, "SubwayStation");

        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), "mridangam/C#/224030__akshaylaya__bheem-c#-001.wav");
        touch(dir.path(), "mridangam/B/224031__akshaylaya__thi-b-002.wav");
        let stroke = prepare(&tax, "MridangamStroke", dir.path()).unwrap();
        let tonic = prepare(&tax, "MridangamTonic", dir.path()).unwrap();
        assert_eq!(stroke.rows.iter().map(|r| r.label.as_str()).collect::<Vec<_>>(), ["thi", "bheem"]);
        assert_eq!(tonic.rows.iter().map(|r| r.label.as_str()).collect::<Vec<_>>(), ["B", "C#"]);

        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), "audio_16k/f0003_0_throatclearing.wav");
        touch(dir.path(), "audio_16k/m0001_1_cough.wav");
        let m = prepare(&tax, "VocalSound", dir.path()).unwrap();
        assert_eq!(m.rows[0].label, "throatclearing");
    }

    #[test]
    fn empty_tree_is_manifest_error() {
        let tax = Taxonomy::shipped();
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(prepare(&tax, "SESA", dir.path()).unwrap_err().kind(), "ManifestError");
        assert!(prepare(&tax, "Nope", dir.path()).is_err());
    }
}
