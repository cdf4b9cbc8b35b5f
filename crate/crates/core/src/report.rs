//! Side-by-side rendering of evaluation reports: one column per report, one
//! row per class, then the class-average and overall rows.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::eval::EvalReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Text,
    Markdown,
    /// Unrounded values for external plotting.
    Csv,
}

impl FromStr for TableFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "text" => Ok(Self::Text),
            "markdown" | "md" => Ok(Self::Markdown),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown table format `{other}`")),
        }
    }
}

struct Table {
    header: Vec<String>,
    rows: Vec<(String, Vec<Option<f64>>)>,
}

fn build(reports: &[(String, EvalReport)]) -> Table {
    let mut names: Vec<&str> = Vec::new();
    for (_, r) in reports {
        for c in &r.classes {
            if !names.contains(&c.name.as_str()) {
                names.push(&c.name);
            }
        }
    }
    let mut rows: Vec<(String, Vec<Option<f64>>)> = names
        .iter()
        .map(|name| {
            let cells = reports.iter().map(|(_, r)| r.class(name).and_then(|c| c.recall)).collect();
            (name.to_string(), cells)
        })
        .collect();
    rows.push((
        "Average".into(),
        reports.iter().map(|(_, r)| Some(r.class_average_recall)).collect(),
    ));
    rows.push(("Overall".into(), reports.iter().map(|(_, r)| Some(r.overall_recall)).collect()));
    let mut header = vec!["Object Class".to_string()];
    header.extend(reports.iter().map(|(label, _)| label.clone()));
    Table { header, rows }
}

/// Recall as a percentage with two decimals, e.g. `41.70%`.
pub fn format_percent(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{:.2}%", v * 100.0),
        None => "-".into(),
    }
}

pub fn render(reports: &[(String, EvalReport)], format: TableFormat) -> String {
    let table = build(reports);
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            let header: Vec<String> = table.header.iter().map(|h| csv_field(h)).collect();
            writeln!(out, "{}", header.join(",")).unwrap();
            for (name, cells) in &table.rows {
                let mut line = vec![csv_field(name)];
                line.extend(cells.iter().map(|c| c.map(|v| v.to_string()).unwrap_or_default()));
                writeln!(out, "{}", line.join(",")).unwrap();
            }
        }
        TableFormat::Text | TableFormat::Markdown => {
            let body: Vec<Vec<String>> = table
                .rows
                .iter()
                .map(|(name, cells)| {
                    let mut r = vec![name.clone()];
                    r.extend(cells.iter().map(|&c| format_percent(c)));
                    r
                })
                .collect();
            let widths: Vec<usize> = (0..table.header.len())
                .map(|i| {
                    body.iter()
                        .map(|r| r[i].len())
                        .chain([table.header[i].len()])
                        .max()
                        .unwrap()
                })
                .collect();
            let line = |cells: &[String]| -> String {
                let padded: Vec<String> = cells
                    .iter()
                    .zip(&widths)
                    .enumerate()
                    .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                    .collect();
                match format {
                    TableFormat::Markdown => format!("| {} |", padded.join(" | ")),
                    _ => padded.join("  ").trim_end().to_string(),
                }
            };
            writeln!(out, "{}", line(&table.header)).unwrap();
            match format {
                TableFormat::Markdown => {
                    let rule: Vec<String> = widths
                        .iter()
                        .enumerate()
                        .map(|(i, w)| {
                            if i == 0 {
                                "-".repeat(*w)
                            } else {
                                format!("{}:", "-".repeat(w - 1))
                            }
                        })
                        .collect();
                    writeln!(out, "| {} |", rule.join(" | ")).unwrap();
                }
                _ => {
                    let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
                    writeln!(out, "{}", "-".repeat(total)).unwrap();
                }
            }
            for r in &body {
                writeln!(out, "{}", line(r)).unwrap();
            }
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
