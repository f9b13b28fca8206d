use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{rank_records, BenchReport, CellRecord, CellStatus, RankLevel};
use crate::datagen::io::{fmt_real, write_atomic};
use crate::error::{Error, Result};
use crate::metrics::{AuxMetrics, DatasetKey, MethodKey, RankMetric, RankTable};

pub const METRICS_CSV_HEADER: &str =
    "scenario,config,repeat,level,family,variant,imputer,base_learner,status,error,cate_rmse,ate_bias,val_rmse,impute_mae,ctd,auc,fit_rows,selected";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(Error::InvalidArgument(format!(
                "unknown report format '{s}'"
            ))),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "markdown",
        })
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_real).unwrap_or_default()
}

pub fn render_metrics_csv(records: &[CellRecord]) -> String {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    let header: Vec<&str> = METRICS_CSV_HEADER.split(',').collect();
    w.write_record(&header).expect("in-memory write");
    for r in records {
        w.write_record([
            r.dataset.scenario.clone(),
            r.dataset.config.clone(),
            r.dataset.repeat.to_string(),
            r.level.to_string(),
            r.method.family.clone(),
            r.method.variant.clone(),
            r.method.imputer.clone(),
            r.method.base_learner.clone(),
            match r.status {
                CellStatus::Ok => "ok".into(),
                CellStatus::Failed => "failed".into(),
            },
            r.error.clone().unwrap_or_default(),
            opt(r.cate_rmse),
            opt(r.ate_bias),
            opt(r.val_rmse),
            opt(r.aux.impute_mae),
            opt(r.aux.ctd),
            opt(r.aux.auc),
            r.fit_rows.to_string(),
            r.selected.clone(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// Parse a `metrics.csv` written by [`render_metrics_csv`].
pub fn read_metrics_csv(path: &Path) -> Result<Vec<CellRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>().join(",") != METRICS_CSV_HEADER {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            reason: "unexpected header".into(),
        });
    }
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let line = i + 2;
        let bad = |reason: String| Error::Parse {
            path: path.into(),
            line,
            reason,
        };
        let real = |j: usize| -> Result<Option<f64>> {
            let s = &row[j];
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse()
                    .map(Some)
                    .map_err(|_| bad(format!("bad number '{s}'")))
            }
        };
        let status = match &row[8] {
            "ok" => CellStatus::Ok,
            "failed" => CellStatus::Failed,
            other => return Err(bad(format!("bad status '{other}'"))),
        };
        out.push(CellRecord {
            dataset: DatasetKey {
                scenario: row[0].to_string(),
                config: row[1].to_string(),
                repeat: row[2].parse().map_err(|_| bad("bad repeat".into()))?,
            },
            level: row[3].parse().map_err(|e: Error| bad(e.to_string()))?,
            method: MethodKey {
                family: row[4].to_string(),
                variant: row[5].to_string(),
                imputer: row[6].to_string(),
                base_learner: row[7].to_string(),
            },
            status,
            error: (!row[9].is_empty()).then(|| row[9].to_string()),
            cate_rmse: real(10)?,
            ate_bias: real(11)?,
            val_rmse: real(12)?,
            aux: AuxMetrics {
                impute_mae: real(13)?,
                ctd: real(14)?,
                auc: real(15)?,
            },
            fit_rows: row[16].parse().map_err(|_| bad("bad fit_rows".into()))?,
            selected: row[17].to_string(),
        });
    }
    Ok(out)
}

fn empty_borda_csv() -> String {
    "method,mean_rank,rank_stderr\n".into()
}

fn empty_borda_markdown() -> String {
    "| method | mean rank | rank stderr |\n|---|---:|---:|\n".into()
}

fn empty_winrates_csv(ks: &[usize]) -> String {
    let mut out = String::from("method");
    for k in ks {
        out.push_str(&format!(",top{k}"));
    }
    out.push('\n');
    out
}

/// Write the rank files for `table` (headers only when `None`).
pub fn write_rank_files(
    table: Option<&RankTable>,
    ks: &[usize],
    dir: &Path,
    formats: &[ReportFormat],
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for f in formats {
        let (name, body) = match (f, table) {
            (ReportFormat::Csv, Some(t)) => ("borda.csv", t.render_borda_csv()),
            (ReportFormat::Csv, None) => ("borda.csv", empty_borda_csv()),
            (ReportFormat::Markdown, Some(t)) => ("borda.md", t.render_borda_markdown()),
            (ReportFormat::Markdown, None) => ("borda.md", empty_borda_markdown()),
        };
        let p = dir.join(name);
        write_atomic(&p, body.as_bytes())?;
        written.push(p);
    }
    let body = table.map_or_else(|| empty_winrates_csv(ks), RankTable::render_winrates_csv);
    let p = dir.join("winrates.csv");
    write_atomic(&p, body.as_bytes())?;
    written.push(p);
    Ok(written)
}

/// Write `metrics.csv`, `provenance.json`, the Borda table in each requested
/// format and `winrates.csv`. Metrics and provenance are written even when
/// ranking refuses an incomplete grid; the error is returned afterwards.
pub fn render_report(
    report: &BenchReport,
    dir: &Path,
    formats: &[ReportFormat],
    allow_missing: bool,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let metrics = dir.join("metrics.csv");
    write_atomic(&metrics, render_metrics_csv(&report.records).as_bytes())?;
    written.push(metrics);
    let prov = dir.join("provenance.json");
    let mut body = serde_json::to_string_pretty(&report.provenance)?;
    body.push('\n');
    write_atomic(&prov, body.as_bytes())?;
    written.push(prov);

    let level: RankLevel = report.config.rank_level;
    let ks = &report.config.top_k;
    let table = rank_records(
        &report.records,
        level,
        RankMetric::CateRmse,
        ks,
        allow_missing || report.config.allow_missing,
    )?;
    written.extend(write_rank_files(table.as_ref(), ks, dir, formats)?);
    Ok(written)
}
