//! Task categories, the label registry and the dataset -> category mapping.
//!
//! The mapping is loaded from a TOML file (see `data/taxonomy.toml` for the
//! shipped version and its schema). Once loaded a [`Taxonomy`] is read-only.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The shipped taxonomy configuration.
pub const SHIPPED_TAXONOMY: &str = include_str!("../data/taxonomy.toml");

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("UnknownDataset: no dataset registered with id `{0}`")]
    UnknownDataset(String),
    #[error("UnknownLabel: dataset `{dataset}` has no label `{label}`")]
    UnknownLabel { dataset: String, label: String },
    #[error("UnknownCategory: `{0}` is not a task category")]
    UnknownCategory(String),
    #[error("taxonomy parse error: {0}")]
    Parse(String),
    #[error("taxonomy error at line {line}, field `{field}`: {message}")]
    Invalid {
        line: usize,
        field: &'static str,
        message: String,
    },
    #[error("failed to read taxonomy file {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl TaxonomyError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::UnknownDataset(_) => "UnknownDataset",
            Self::UnknownLabel { .. } => "UnknownLabel",
            Self::UnknownCategory(_) => "UnknownCategory",
            Self::Parse(_) | Self::Invalid { .. } => "TaxonomyParseError",
            Self::Io { .. } => "IoError",
        }
    }
}

/// Identifier of one of the five task categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CategoryId {
    MusicalInstruments,
    AcousticScene,
    MusicGenre,
    ImpactEmergency,
    NonVerbalVocal,
}

impl CategoryId {
    pub const ALL: [CategoryId; 5] = [
        CategoryId::MusicalInstruments,
        CategoryId::AcousticScene,
        CategoryId::MusicGenre,
        CategoryId::ImpactEmergency,
        CategoryId::NonVerbalVocal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::MusicalInstruments => "MusicalInstruments",
            Self::AcousticScene => "AcousticScene",
            Self::MusicGenre => "MusicGenre",
            Self::ImpactEmergency => "ImpactEmergency",
            Self::NonVerbalVocal => "NonVerbalVocal",
        }
    }

    /// Snake-case stem used for pool identifiers and file names.
    pub fn slug(self) -> &'static str {
        match self {
            Self::MusicalInstruments => "musical_instruments",
            Self::AcousticScene => "acoustic_scene",
            Self::MusicGenre => "music_genre",
            Self::ImpactEmergency => "impact_emergency",
            Self::NonVerbalVocal => "non_verbal_vocal",
        }
    }

    pub fn category(self) -> TaskCategory {
        let (name, description) = match self {
            Self::MusicalInstruments => (
                "Musical Instruments Recognition",
                "Sounds of musical instruments such as piano, guitar, cymbals and drums, \
                 played in settings like opera, street performances and theater.",
            ),
            Self::AcousticScene => (
                "Acoustic Scene Understanding",
                "Urban and everyday sounds: vehicles, jackhammers, dog barks, sirens, \
                 crowded streets, cafes, trams, beaches, parks and city centers.",
            ),
            Self::MusicGenre => (
                "Music Genre Classification",
                "Music recordings to be sorted into genres such as classical, country, \
                 disco, hip-hop and blues.",
            ),
            Self::ImpactEmergency => (
                "Impact and Emergency Sound",
                "Loud, sudden sounds such as explosions, gunshots and sirens.",
            ),
            Self::NonVerbalVocal => (
                "Non-Verbal Vocalization Sound",
                "Non-verbal vocal sounds such as coughing, sneezing, throat clearing, \
                 sniffing, sighing and laughter.",
            ),
        };
        TaskCategory {
            id: self,
            name,
            description,
            attribute_pool_ref: format!("{}.attributes", self.slug()),
            source_pool_ref: format!("{}.sources", self.slug()),
        }
    }
}

impl fmt::Display for CategoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CategoryId {
    type Err = TaxonomyError;

    /// Accepts the canonical name as well as snake/kebab case, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let squashed: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        CategoryId::ALL
            .into_iter()
            .find(|c| c.as_str().to_ascii_lowercase() == squashed)
            .ok_or_else(|| TaxonomyError::UnknownCategory(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskCategory {
    pub id: CategoryId,
    pub name: &'static str,
    pub description: &'static str,
    pub attribute_pool_ref: String,
    pub source_pool_ref: String,
}

impl TaskCategory {
    pub fn all() -> Vec<TaskCategory> {
        CategoryId::ALL.iter().map(|c| c.category()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabelEntry {
    pub label_id: String,
    pub display_text: String,
    pub dataset_id: String,
}

/// Every (label, dataset) pair known to the taxonomy. A label shared by two
/// datasets gets two independent entries.
#[derive(Debug, Clone, Default)]
pub struct LabelRegistry {
    entries: Vec<LabelEntry>,
}

impl LabelRegistry {
    pub fn entries(&self) -> &[LabelEntry] {
        &self.entries
    }

    pub fn get(&self, dataset_id: &str, label_id: &str) -> Option<&LabelEntry> {
        self.entries
            .iter()
            .find(|e| e.dataset_id == dataset_id && e.label_id == label_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetDescriptor {
    pub dataset_id: String,
    pub category: CategoryId,
    pub manifest_path: PathBuf,
    pub split: String,
    pub class_labels: Vec<String>,
}

/// Lowercases, turns underscores into spaces and collapses whitespace.
pub fn normalize_label_text(raw: &str) -> String {
    raw.to_lowercase()
        .replace('_', " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTaxonomy {
    #[serde(default)]
    dataset: Vec<RawDataset>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDataset {
    id: toml::Spanned<String>,
    category: toml::Spanned<String>,
    manifest: String,
    #[serde(default)]
    split: Option<String>,
    labels: toml::Spanned<Vec<String>>,
    #[serde(default)]
    display: Option<toml::Spanned<BTreeMap<String, String>>>,
}

#[derive(Debug, Clone)]
pub struct Taxonomy {
    datasets: Vec<DatasetDescriptor>,
    registry: LabelRegistry,
}

impl Taxonomy {
    pub fn shipped() -> Self {
        Self::from_toml_str(SHIPPED_TAXONOMY).expect("shipped taxonomy is valid")
    }

    pub fn load(path: &Path) -> Result<Self, TaxonomyError> {
        let text = std::fs::read_to_string(path).map_err(|source| TaxonomyError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, TaxonomyError> {
        let raw: RawTaxonomy =
            toml::from_str(text).map_err(|e| TaxonomyError::Parse(e.to_string().trim().to_string()))?;
        let line_of = |offset: usize| text[..offset.min(text.len())].matches('\n').count() + 1;

        let mut datasets = Vec::with_capacity(raw.dataset.len());
        let mut registry = LabelRegistry::default();
        let mut seen_ids = HashSet::new();

        for ds in raw.dataset {
            let id = ds.id.get_ref().trim().to_string();
            if id.is_empty() {
                return Err(TaxonomyError::Invalid {
                    line: line_of(ds.id.span().start),
                    field: "id",
                    message: "dataset id is empty".into(),
                });
            }
            if !seen_ids.insert(id.clone()) {
                return Err(TaxonomyError::Invalid {
                    line: line_of(ds.id.span().start),
                    field: "id",
                    message: format!("dataset `{id}` is declared twice"),
                });
            }
            let category =
                CategoryId::from_str(ds.category.get_ref()).map_err(|_| TaxonomyError::Invalid {
                    line: line_of(ds.category.span().start),
                    field: "category",
                    message: format!("`{}` is not a task category", ds.category.get_ref()),
                })?;

            let labels_line = line_of(ds.labels.span().start);
            let labels = ds.labels.into_inner();
            if labels.is_empty() {
                return Err(TaxonomyError::Invalid {
                    line: labels_line,
                    field: "labels",
                    message: format!("dataset `{id}` has no labels"),
                });
            }
            let mut seen_labels = HashSet::new();
            for label in &labels {
                if label.trim().is_empty() {
                    return Err(TaxonomyError::Invalid {
                        line: labels_line,
                        field: "labels",
                        message: format!("dataset `{id}` has an empty label"),
                    });
                }
                if !seen_labels.insert(label.as_str()) {
                    return Err(TaxonomyError::Invalid {
                        line: labels_line,
                        field: "labels",
                        message: format!("label `{label}` repeated in dataset `{id}`"),
                    });
                }
            }

            let (display, display_line) = match ds.display {
                Some(d) => {
                    let line = line_of(d.span().start);
                    (d.into_inner(), line)
                }
                None => (BTreeMap::new(), labels_line),
            };
            if let Some(stray) = display.keys().find(|k| !seen_labels.contains(k.as_str())) {
                return Err(TaxonomyError::Invalid {
                    line: display_line,
                    field: "display",
                    message: format!("override for `{stray}`, which is not a label of `{id}`"),
                });
            }

            for label in &labels {
                let text = normalize_label_text(display.get(label).unwrap_or(label));
                if text.is_empty() || text.contains('<') || text.contains('>') {
                    return Err(TaxonomyError::Invalid {
                        line: display_line,
                        field: "display",
                        message: format!(
                            "display text for `{label}` must be non-empty and free of `<`/`>`"
                        ),
                    });
                }
                registry.entries.push(LabelEntry {
                    label_id: label.clone(),
                    display_text: text,
                    dataset_id: id.clone(),
                });
            }

            datasets.push(DatasetDescriptor {
                dataset_id: id,
                category,
                manifest_path: PathBuf::from(ds.manifest),
                split: ds.split.unwrap_or_else(|| "unspecified".into()),
                class_labels: labels,
            });
        }

        Ok(Self { datasets, registry })
    }

    pub fn datasets(&self) -> &[DatasetDescriptor] {
        &self.datasets
    }

    pub fn registry(&self) -> &LabelRegistry {
        &self.registry
    }

    pub fn dataset(&self, dataset_id: &str) -> Result<&DatasetDescriptor, TaxonomyError> {
        self.datasets
            .iter()
            .find(|d| d.dataset_id == dataset_id)
            .ok_or_else(|| TaxonomyError::UnknownDataset(dataset_id.to_string()))
    }

    pub fn category_of(&self, dataset_id: &str) -> Result<TaskCategory, TaxonomyError> {
        self.dataset(dataset_id).map(|d| d.category.category())
    }

    /// Ordered label ids of a dataset. The order defines tie-breaking downstream.
    pub fn labels_of(&self, dataset_id: &str) -> Result<&[String], TaxonomyError> {
        self.dataset(dataset_id).map(|d| d.class_labels.as_slice())
    }

    pub fn display_text(&self, dataset_id: &str, label_id: &str) -> Result<&str, TaxonomyError> {
        self.dataset(dataset_id)?;
        self.registry
            .get(dataset_id, label_id)
            .map(|e| e.display_text.as_str())
            .ok_or_else(|| TaxonomyError::UnknownLabel {
                dataset: dataset_id.to_string(),
                label: label_id.to_string(),
            })
    }

    /// `(label_id, display_text)` pairs in stable label order.
    pub fn labeled_texts(&self, dataset_id: &str) -> Result<Vec<(String, String)>, TaxonomyError> {
        let ds = self.dataset(dataset_id)?;
        ds.class_labels
            .iter()
            .map(|l| Ok((l.clone(), self.display_text(dataset_id, l)?.to_string())))
            .collect()
    }

    pub fn datasets_in(&self, category: CategoryId) -> impl Iterator<Item = &DatasetDescriptor> {
        self.datasets.iter().filter(move |d| d.category == category)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_partition_by_category() {
        let tax = Taxonomy::shipped();
        assert_eq!(tax.datasets().len(), 12);
        let count = |c| tax.datasets_in(c).count();
        assert_eq!(count(CategoryId::MusicalInstruments), 5);
        assert_eq!(count(CategoryId::AcousticScene), 4);
        assert_eq!(count(CategoryId::MusicGenre), 1);
        assert_eq!(count(CategoryId::ImpactEmergency), 1);
        assert_eq!(count(CategoryId::NonVerbalVocal), 1);
    }

    #[test]
    fn category_lookup() {
        let tax = Taxonomy::shipped();
        assert_eq!(tax.category_of("ESC50").unwrap().id, CategoryId::AcousticScene);
        assert_eq!(tax.category_of("GTZAN").unwrap().id, CategoryId::MusicGenre);
        assert_eq!(tax.category_of("SESA").unwrap().id, CategoryId::ImpactEmergency);
        assert!(matches!(
            tax.category_of("nope"),
            Err(TaxonomyError::UnknownDataset(_))
        ));
    }

    #[test]
    fn gtzan_labels_are_stable() {
        let tax = Taxonomy::shipped();
        let labels = tax.labels_of("GTZAN").unwrap();
        assert_eq!(labels.len(), 10);
        for l in ["rock", "blues", "disco"] {
            assert!(labels.iter().any(|x| x == l));
        }
        assert_eq!(labels, tax.labels_of("GTZAN").unwrap());
        assert!(matches!(tax.labels_of("XYZ"), Err(TaxonomyError::UnknownDataset(_))));
    }

    #[test]
    fn singleton_dataset() {
        let tax = Taxonomy::from_toml_str(
            "[[dataset]]\nid = \"one\"\ncategory = \"music_genre\"\nmanifest = \"m.csv\"\nlabels = [\"Jazz\"]\n",
        )
        .unwrap();
        assert_eq!(tax.labels_of("one").unwrap(), ["Jazz".to_string()]);
        assert_eq!(tax.display_text("one", "Jazz").unwrap(), "jazz");
    }

    #[test]
    fn display_text_is_normalized() {
        let tax = Taxonomy::shipped();
        assert_eq!(tax.display_text("USD8K", "dog_bark").unwrap(), "dog bark");
        assert_eq!(tax.display_text("GTZAN", "hiphop").unwrap(), "hip hop");
        assert_eq!(tax.display_text("Cochlscene", "Bus").unwrap(), "bus");
    }

    #[test]
    fn shared_labels_stay_independent() {
        let tax = Taxonomy::shipped();
        let sirens: Vec<_> = tax
            .registry()
            .entries()
            .iter()
            .filter(|e| e.label_id == "siren")
            .map(|e| e.dataset_id.as_str())
            .collect();
        assert_eq!(sirens, ["USD8K", "ESC50", "SESA"]);
    }

    #[test]
    fn parse_errors_cite_line_and_field() {
        let bad = "[[dataset]]\nid = \"a\"\ncategory = \"Nope\"\nmanifest = \"m\"\nlabels = [\"x\"]\n";
        match Taxonomy::from_toml_str(bad) {
            Err(TaxonomyError::Invalid { line, field, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(field, "category");
            }
            other => panic!("unexpected {other:?}"),
        }

        let dup = "[[dataset]]\nid = \"a\"\ncategory = \"MusicGenre\"\nmanifest = \"m\"\nlabels = [\"x\", \"x\"]\n";
        match Taxonomy::from_toml_str(dup) {
            Err(TaxonomyError::Invalid { line, field, .. }) => {
                assert_eq!((line, field), (5, "labels"));
            }
            other => panic!("unexpected {other:?}"),
        }

        let missing = "[[dataset]]\nid = \"a\"\ncategory = \"MusicGenre\"\nlabels = [\"x\"]\n";
        let err = Taxonomy::from_toml_str(missing).unwrap_err().to_string();
        assert!(err.contains("manifest"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn slot_markers_rejected_in_display_text() {
        let bad = "[[dataset]]\nid = \"a\"\ncategory = \"MusicGenre\"\nmanifest = \"m\"\nlabels = [\"x\"]\ndisplay = { x = \"<label>\" }\n";
        assert!(matches!(
            Taxonomy::from_toml_str(bad),
            Err(TaxonomyError::Invalid { field: "display", .. })
        ));
    }

    #[test]
    fn category_id_parsing() {
        assert_eq!("music-genre".parse::<CategoryId>().unwrap(), CategoryId::MusicGenre);
        assert_eq!(
            "NonVerbalVocal".parse::<CategoryId>().unwrap(),
            CategoryId::NonVerbalVocal
        );
        assert!("speech".parse::<CategoryId>().is_err());
        let cats = TaskCategory::all();
        assert_eq!(cats.len(), 5);
        let ids: HashSet<_> = cats.iter().map(|c| c.id).collect();
        assert_eq!(ids.len(), 5);
    }
}
