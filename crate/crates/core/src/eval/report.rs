//! Accuracy tables: rows are datasets grouped by task category, columns are
//! (backend, condition) pairs. The best condition per (dataset, backend) is
//! marked `**bold**`; ties are all marked.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::{Condition, EvalError, EvaluationReport};
use crate::taxonomy::{CategoryId, Taxonomy};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportTable {
    /// Human-readable Markdown table.
    pub text: String,
    /// One line per cell: `category,dataset,backend,condition,accuracy,best`.
    pub csv: String,
}

struct Cell {
    accuracy: f64,
    best: bool,
}

pub fn report_table(reports: &[EvaluationReport], taxonomy: &Taxonomy) -> ReportTable {
    let mut backends: Vec<&str> = Vec::new();
    let mut datasets: Vec<(CategoryId, &str)> = Vec::new();
    let mut cells: BTreeMap<(&str, &str, Condition), Cell> = BTreeMap::new();
    for r in reports {
        if !backends.contains(&r.backend_id.as_str()) {
            backends.push(&r.backend_id);
        }
        if !datasets.iter().any(|(_, d)| *d == r.dataset_id) {
            datasets.push((r.category, &r.dataset_id));
        }
        // A later report for the same cell replaces an earlier one.
        cells.insert(
            (&r.dataset_id, &r.backend_id, r.condition),
            Cell {
                accuracy: r.accuracy,
                best: false,
            },
        );
    }

    let order = |d: &str| {
        taxonomy
            .datasets()
            .iter()
            .position(|x| x.dataset_id == d)
            .unwrap_or(usize::MAX)
    };
    let first_seen: Vec<&str> = datasets.iter().map(|(_, d)| *d).collect();
    datasets.sort_by_key(|(c, d)| {
        let cat = CategoryId::ALL.iter().position(|x| x == c).expect("known category");
        (cat, order(d), first_seen.iter().position(|x| x == d))
    });

    for &(_, d) in &datasets {
        for &b in &backends {
            let present: Vec<Condition> = Condition::ALL
                .into_iter()
                .filter(|&c| cells.contains_key(&(d, b, c)))
                .collect();
            if present.len() < 2 {
                continue;
            }
            let top = present
                .iter()
                .map(|&c| cells[&(d, b, c)].accuracy)
                .fold(f64::NEG_INFINITY, f64::max);
            for c in present {
                let cell = cells.get_mut(&(d, b, c)).expect("present");
                cell.best = cell.accuracy == top;
            }
        }
    }

    let columns: Vec<(&str, Condition)> = backends
        .iter()
        .flat_map(|&b| {
            Condition::ALL
                .into_iter()
                .filter(move |&c| reports.iter().any(|r| r.backend_id == b && r.condition == c))
                .map(move |c| (b, c))
        })
        .collect();

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["Task".to_string(), "Dataset".to_string()];
    header.extend(columns.iter().map(|(b, c)| format!("{b} {c}")));
    let mut last_cat = None;
    let mut csv = String::from("category,dataset,backend,condition,accuracy,best\n");
    for &(cat, d) in &datasets {
        let task = if last_cat == Some(cat) {
            String::new()
        } else {
            cat.category().name.to_string()
        };
        last_cat = Some(cat);
        let mut row = vec![task, d.to_string()];
        for &(b, c) in &columns {
            row.push(match cells.get(&(d, b, c)) {
                Some(cell) => {
                    csv.push_str(&format!("{cat},{d},{b},{c},{:.2},{}\n", cell.accuracy, cell.best));
                    if cell.best {
                        format!("**{:.2}**", cell.accuracy)
                    } else {
                        format!("{:.2}", cell.accuracy)
                    }
                }
                None => "-".into(),
            });
        }
        rows.push(row);
    }

    let widths: Vec<usize> = (0..header.len())
        .map(|i| rows.iter().chain([&header]).map(|r| r[i].len()).max().unwrap_or(0).max(3))
        .collect();
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        format!("| {} |\n", padded.join(" | "))
    };
    let mut text = line(&header);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    text.push_str(&line(&rule));
    for r in &rows {
        text.push_str(&line(r));
    }
    ReportTable { text, csv }
}

/// Every `report.json` under `dir`, in path order.
pub fn collect_reports(dir: &Path) -> Result<Vec<EvaluationReport>, EvalError> {
    fn walk(dir: &Path, found: &mut Vec<PathBuf>) -> Result<(), EvalError> {
        for entry in std::fs::read_dir(dir).map_err(|e| EvalError::io(dir, e))? {
            let path = entry.map_err(|e| EvalError::io(dir, e))?.path();
            if path.is_dir() {
                walk(&path, found)?;
            } else if path.file_name().is_some_and(|n| n == "report.json") {
                found.push(path);
            }
        }
        Ok(())
    }
    let mut paths = Vec::new();
    walk(dir, &mut paths)?;
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| EvalError::io(p, e))?;
            serde_json::from_str(&text)
                .map_err(|e| EvalError::InvalidArgument(format!("{}: not a report: {e}", p.display())))
        })
        .collect()
}
