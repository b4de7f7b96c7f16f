use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::run::RunResult;
use crate::selection::mean;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Jsonl,
    MdTable,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Csv, ReportFormat::Jsonl, ReportFormat::MdTable];
}

pub const RESULTS_CSV: &str = "results.csv";
pub const RESULTS_JSONL: &str = "results.jsonl";
pub const REPORT_MD: &str = "report.md";
pub const DIAG_JSONL: &str = "diag.jsonl";

/// Variant-by-target accuracy table (percent) with a trailing average.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub targets: Vec<String>,
    pub rows: Vec<SummaryRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub variant: String,
    pub cells: Vec<Option<f64>>,
    pub avg: f64,
}

/// Rows are variants in first-seen order, columns are targets in first-seen
/// order; each cell is the seed mean of the selected target accuracy.
pub fn summary_table(results: &[RunResult]) -> SummaryTable {
    let mut targets: Vec<String> = Vec::new();
    for r in results {
        for t in &r.targets {
            if !targets.contains(&t.target) {
                targets.push(t.target.clone());
            }
        }
    }
    let mut variants: Vec<String> = Vec::new();
    for r in results {
        if !variants.contains(&r.variant) {
            variants.push(r.variant.clone());
        }
    }
    let rows = variants
        .into_iter()
        .map(|v| {
            let cells: Vec<Option<f64>> = targets
                .iter()
                .map(|name| {
                    let accs: Vec<f64> = results
                        .iter()
                        .filter(|r| r.variant == v)
                        .flat_map(|r| r.targets.iter().filter(|t| &t.target == name))
                        .flat_map(|t| t.seeds.iter().map(|s| 100.0 * s.selected_target_acc))
                        .collect();
                    mean(&accs)
                })
                .collect();
            let present: Vec<f64> = cells.iter().flatten().copied().collect();
            SummaryRow {
                variant: v,
                avg: mean(&present).unwrap_or(0.0),
                cells,
            }
        })
        .collect();
    SummaryTable { targets, rows }
}

pub fn render_markdown(table: &SummaryTable) -> String {
    let mut s = String::new();
    s.push_str("| method |");
    for t in &table.targets {
        s.push_str(&format!(" {t} |"));
    }
    s.push_str(" AVG |\n|---|");
    for _ in &table.targets {
        s.push_str("---:|");
    }
    s.push_str("---:|\n");
    for r in &table.rows {
        s.push_str(&format!("| {} |", r.variant));
        for c in &r.cells {
            match c {
                Some(v) => s.push_str(&format!(" {v:.2} |")),
                None => s.push_str(" - |"),
            }
        }
        s.push_str(&format!(" {:.2} |\n", r.avg));
    }
    s
}

fn write_file(path: &Path, body: &[u8]) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn results_csv(results: &[RunResult]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "variant",
        "target",
        "seed",
        "policy",
        "selected",
        "chosen_iter",
        "target_acc",
        "regret",
        "aborted",
    ])?;
    for r in results {
        for t in &r.targets {
            for s in &t.seeds {
                for p in &s.policies {
                    w.write_record([
                        r.variant.clone(),
                        t.target.clone(),
                        s.seed.to_string(),
                        p.policy.as_str().to_string(),
                        (p.policy == r.selection).to_string(),
                        p.chosen_iter.to_string(),
                        p.target_acc.to_string(),
                        p.regret.to_string(),
                        s.aborted.is_some().to_string(),
                    ])?;
                }
            }
        }
    }
    w.into_inner()
        .map_err(|e| Error::Data(format!("csv buffer: {}", e.error())))
}

pub fn results_jsonl(results: &[RunResult]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in results {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn diag_jsonl(results: &[RunResult]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in results {
        for t in &r.targets {
            for s in &t.seeds {
                for e in &s.diag {
                    let mut v = serde_json::to_value(e)?;
                    v["variant"] = r.variant.clone().into();
                    v["target"] = t.target.clone().into();
                    serde_json::to_writer(&mut out, &v)?;
                    out.push(b'\n');
                }
            }
        }
    }
    Ok(out)
}

pub fn read_jsonl(path: &Path) -> Result<Vec<RunResult>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Writes the requested formats into `dir`; `diag.jsonl` accompanies the
/// JSON-lines output.
pub fn emit_report(results: &[RunResult], dir: &Path, formats: &[ReportFormat]) -> Result<()> {
    if results.is_empty() {
        return Err(Error::Data("no results to report".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for f in formats {
        match f {
            ReportFormat::Csv => write_file(&dir.join(RESULTS_CSV), &results_csv(results)?)?,
            ReportFormat::Jsonl => {
                write_file(&dir.join(RESULTS_JSONL), &results_jsonl(results)?)?;
                write_file(&dir.join(DIAG_JSONL), &diag_jsonl(results)?)?;
            }
            ReportFormat::MdTable => {
                let mut body = render_markdown(&summary_table(results));
                body.push('\n');
                body.push_str(&selection_section(results));
                write_file(&dir.join(REPORT_MD), body.as_bytes())?;
            }
        }
    }
    Ok(())
}

fn selection_section(results: &[RunResult]) -> String {
    let mut s = String::from("| variant | target | policy | median acc | median regret |\n|---|---|---|---:|---:|\n");
    for r in results {
        for t in &r.targets {
            for p in crate::selection::Policy::ALL {
                let accs: Vec<f64> = t.seeds.iter().filter_map(|x| x.policy(p)).map(|x| 100.0 * x.target_acc).collect();
                let reg: Vec<f64> = t.seeds.iter().filter_map(|x| x.policy(p)).map(|x| 100.0 * x.regret).collect();
                let med = |v: &[f64]| crate::selection::median(v).unwrap_or(0.0);
                s.push_str(&format!(
                    "| {} | {} | {} | {:.2} | {:.2} |\n",
                    r.variant,
                    t.target,
                    p.as_str(),
                    med(&accs),
                    med(&reg)
                ));
            }
        }
    }
    s
}

pub fn write_bytes(path: &Path, body: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(body).map_err(|e| Error::io(path, e))
}
