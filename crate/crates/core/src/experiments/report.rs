//! Per-seed result rows, their CSV form, and the aggregated summary.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::eval::aggregate;
use crate::{Error, Result};

pub const CSV_HEADER: [&str; 7] = ["model", "dataset", "sigma", "num_groups", "seed", "task_auc", "concept_auc"];

/// Marker for a cell with no value, such as a black box's concept score.
pub const MISSING: &str = "-";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub dataset: String,
    pub sigma: Option<f64>,
    pub num_groups: Option<usize>,
    pub seed: u64,
    pub task_auc: f64,
    pub concept_auc: Option<f64>,
}

impl ResultRow {
    fn key(&self) -> (&str, &str, Option<u64>, Option<usize>) {
        (&self.model, &self.dataset, self.sigma.map(f64::to_bits), self.num_groups)
    }
}

pub fn write_csv(rows: &[ResultRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.dataset.clone(),
            opt(r.sigma),
            opt(r.num_groups),
            r.seed.to_string(),
            r.task_auc.to_string(),
            opt(r.concept_auc),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn read_csv(bytes: &[u8]) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(bytes);
    if r.headers()?.iter().ne(CSV_HEADER) {
        return Err(Error::format("results csv", "unexpected header"));
    }
    r.records()
        .map(|rec| {
            let rec = rec?;
            let field = |i: usize| rec.get(i).ok_or_else(|| Error::format("results csv", "short row"));
            Ok(ResultRow {
                model: field(0)?.to_string(),
                dataset: field(1)?.to_string(),
                sigma: parse_opt(field(2)?)?,
                num_groups: parse_opt(field(3)?)?,
                seed: parse_cell(field(4)?)?,
                task_auc: parse_cell(field(5)?)?,
                concept_auc: parse_opt(field(6)?)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryGroup {
    pub model: String,
    pub dataset: String,
    pub sigma: Option<f64>,
    pub num_groups: Option<usize>,
    pub seeds: Vec<u64>,
    pub task_mean: f64,
    pub task_stderr: f64,
    pub concept_mean: Option<f64>,
    pub concept_stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub v: u32,
    pub command: String,
    pub groups: Vec<SummaryGroup>,
}

impl Summary {
    pub fn group(&self, model: &str, dataset: &str, num_groups: Option<usize>) -> Option<&SummaryGroup> {
        self.groups
            .iter()
            .find(|g| g.model == model && g.dataset == dataset && g.num_groups == num_groups)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Mean and standard error per `(model, dataset, sigma, num_groups)`, in
/// order of first appearance.
pub fn summarize(command: &str, rows: &[ResultRow]) -> Result<Summary> {
    let mut keys = Vec::new();
    for r in rows {
        if !keys.contains(&r.key()) {
            keys.push(r.key());
        }
    }
    let groups = keys
        .iter()
        .map(|key| {
            let members: Vec<&ResultRow> = rows.iter().filter(|r| r.key() == *key).collect();
            let first = members[0];
            let task: Vec<f64> = members.iter().map(|r| r.task_auc).collect();
            let concept: Option<Vec<f64>> = members.iter().map(|r| r.concept_auc).collect();
            let (task_mean, task_stderr) = aggregate(&task)?;
            let (concept_mean, concept_stderr) = match concept {
                Some(c) => {
                    let (m, s) = aggregate(&c)?;
                    (Some(m), Some(s))
                }
                None => (None, None),
            };
            Ok(SummaryGroup {
                model: first.model.clone(),
                dataset: first.dataset.clone(),
                sigma: first.sigma,
                num_groups: first.num_groups,
                seeds: members.iter().map(|r| r.seed).collect(),
                task_mean,
                task_stderr,
                concept_mean,
                concept_stderr,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Summary {
        v: 1,
        command: command.to_string(),
        groups,
    })
}

/// Everything one experiment command produces.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub command: String,
    pub rows: Vec<ResultRow>,
    pub summary: Summary,
    /// Human-readable table in Markdown.
    pub table: String,
}

impl Report {
    pub fn new(command: &str, rows: Vec<ResultRow>, render: impl Fn(&Summary) -> String) -> Result<Self> {
        let summary = summarize(command, &rows)?;
        let table = render(&summary);
        Ok(Self {
            command: command.to_string(),
            rows,
            summary,
            table,
        })
    }

    /// Writes `results.csv`, `summary.json` and `table.md` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("results.csv"), write_csv(&self.rows)?)?;
        std::fs::write(dir.join("summary.json"), self.summary.to_json()?)?;
        std::fs::write(dir.join("table.md"), &self.table)?;
        Ok(())
    }
}

/// `mean ± stderr` in percentage points, one decimal.
pub fn cell(mean: Option<f64>, stderr: Option<f64>) -> String {
    match (mean, stderr) {
        (Some(m), Some(s)) => format!("{:.1} ± {:.1}", m * 100.0, s * 100.0),
        _ => MISSING.to_string(),
    }
}

pub fn markdown_table(header: &[&str], body: &[Vec<String>]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", header.iter().map(|_| "---|").collect::<String>());
    for row in body {
        let _ = writeln!(out, "| {} |", row.join(" | "));
    }
    out
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| MISSING.to_string(), |x| x.to_string())
}

fn parse_cell<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::format("results csv", format!("bad cell {s:?}")))
}

fn parse_opt<T: std::str::FromStr>(s: &str) -> Result<Option<T>> {
    if s == MISSING {
        Ok(None)
    } else {
        parse_cell(s).map(Some)
    }
}
