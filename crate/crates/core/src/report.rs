//! Accuracy, error-taxonomy and calibration tables.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scenegen::{DatasetKind, Split};
use crate::train::{RunSummary, SplitStats, Stat};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

impl FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            _ => Err(Error::Config(format!("unknown report format `{s}`"))),
        }
    }
}

crate::serde_via_str!(ReportFormat);

/// A rendered table: header plus rows of cells, each cell a mean with an
/// optional standard error, or a dash.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<Option<Stat>>)>,
}

impl Table {
    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Csv => self.csv(),
            ReportFormat::Markdown => self.markdown(),
        }
    }

    fn csv(&self) -> String {
        let mut out = String::from("Model");
        for c in &self.columns {
            out.push_str(&format!(",{c},{c}_se"));
        }
        out.push('\n');
        for (name, cells) in &self.rows {
            out.push_str(name);
            for cell in cells {
                match cell {
                    Some(s) => out.push_str(&format!(",{:.2},{:.2}", s.mean, s.stderr)),
                    None => out.push_str(",-,-"),
                }
            }
            out.push('\n');
        }
        out
    }

    fn markdown(&self) -> String {
        let mut out = String::from("| Model |");
        for c in &self.columns {
            out.push_str(&format!(" {c} |"));
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|".repeat(self.columns.len()));
        out.push('\n');
        for (name, cells) in &self.rows {
            out.push_str(&format!("| {name} |"));
            for cell in cells {
                match cell {
                    Some(s) => out.push_str(&format!(" {:.2}<sub>{:.2}</sub> |", s.mean, s.stderr)),
                    None => out.push_str(" - |"),
                }
            }
            out.push('\n');
        }
        out
    }
}

fn split_table(summaries: &[RunSummary], pick: fn(&RunSummary) -> &SplitStats) -> Table {
    Table {
        columns: vec!["Train".into(), "Val".into(), "Gen".into()],
        rows: summaries
            .iter()
            .map(|s| {
                let st = pick(s);
                (s.model.to_string(), Split::ALL.iter().map(|sp| Some(st.get(*sp))).collect())
            })
            .collect(),
    }
}

/// Mean and standard error of accuracy per split, one row per model.
pub fn accuracy_table(summaries: &[RunSummary]) -> Table {
    split_table(summaries, |s| &s.accuracy)
}

/// Same layout as [`accuracy_table`] under adversarial tie-breaking.
pub fn adversarial_table(summaries: &[RunSummary]) -> Table {
    split_table(summaries, |s| &s.adversarial_accuracy)
}

/// Generalization-split errors by class; dashes for models without errors.
pub fn taxonomy_table(kind: DatasetKind, summaries: &[RunSummary]) -> Table {
    let columns: Vec<String> = match kind {
        DatasetKind::Single | DatasetKind::Two => vec!["Adj".into(), "Noun".into(), "Both".into()],
        DatasetKind::Relational => vec!["bRa".into(), "aSb".into(), "aRc".into(), "cRb".into()],
    };
    let width = columns.len();
    Table {
        columns,
        rows: summaries
            .iter()
            .map(|s| {
                let cells = match s.taxonomy_stats() {
                    Some(stats) => stats.into_iter().map(Some).collect(),
                    None => vec![None; width],
                };
                (s.model.to_string(), cells)
            })
            .collect(),
    }
}

/// Calibration coefficient and generalization accuracy before and after.
pub fn calibration_table(summaries: &[RunSummary]) -> Option<Table> {
    let rows: Vec<_> = summaries
        .iter()
        .filter_map(|s| {
            s.calibration_stats()
                .map(|(g, before, after)| (s.model.to_string(), vec![Some(g), Some(before), Some(after)]))
        })
        .collect();
    (!rows.is_empty()).then(|| Table {
        columns: vec!["Gamma".into(), "Gen".into(), "Gen_calibrated".into()],
        rows,
    })
}

/// Writes every table in every format to `dir` and returns the paths.
pub fn emit_report(summaries: &[RunSummary], formats: &[ReportFormat], dir: &Path) -> Result<Vec<PathBuf>> {
    if summaries.is_empty() {
        return Err(Error::Contract("nothing to report".into()));
    }
    let kind = summaries[0].dataset;
    if summaries.iter().any(|s| s.dataset != kind) {
        return Err(Error::Contract("summaries mix datasets".into()));
    }
    std::fs::create_dir_all(dir)?;
    let mut tables = vec![
        ("accuracy", accuracy_table(summaries)),
        ("accuracy_adversarial", adversarial_table(summaries)),
        ("taxonomy", taxonomy_table(kind, summaries)),
    ];
    if let Some(t) = calibration_table(summaries) {
        tables.push(("calibration", t));
    }
    let mut written = Vec::new();
    for format in formats {
        for (name, table) in &tables {
            let path = dir.join(format!("{name}.{}", format.extension()));
            std::fs::write(&path, table.render(*format))?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> Table {
        Table {
            columns: vec!["Train".into(), "Val".into(), "Gen".into()],
            rows: vec![(
                "Add".into(),
                vec![
                    Some(Stat { mean: 85.156, stderr: 0.961 }),
                    Some(Stat { mean: 50.0, stderr: 0.0 }),
                    None,
                ],
            )],
        }
    }

    #[test]
    fn csv_shape() {
        let csv = table().render(ReportFormat::Csv);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "Model,Train,Train_se,Val,Val_se,Gen,Gen_se");
        assert_eq!(lines[1], "Add,85.16,0.96,50.00,0.00,-,-");
        assert_eq!(lines.len(), 2);
    }

    #[test]
    fn markdown_shape() {
        let md = table().render(ReportFormat::Markdown);
        assert!(md.starts_with("| Model | Train | Val | Gen |\n|---|---:|---:|---:|\n"));
        assert!(md.contains("85.16<sub>0.96</sub>"));
        assert!(md.contains("| - |"));
    }

    #[test]
    fn unknown_format_is_config_error() {
        assert!("pdf".parse::<ReportFormat>().unwrap_err().is_config());
        assert_eq!("markdown".parse::<ReportFormat>().unwrap(), ReportFormat::Markdown);
    }
}
