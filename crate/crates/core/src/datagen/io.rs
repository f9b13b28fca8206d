use std::fs;
use std::io::Write;
use std::path::Path;

use super::{DatasetSpec, HorizonRule, SyntheticDataset, Unit, UnitLatents};
use crate::error::{Error, Result};

pub const DATASET_CSV_HEADER: &str = "id,x1,x2,x3,x4,x5,u1,u2,w,obs_time,event,t0,t1,cate_true";

/// 17 significant digits, enough to round-trip any `f64`.
pub(crate) fn fmt_real(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        String::new()
    }
}

pub(crate) fn render_dataset_csv(ds: &SyntheticDataset) -> String {
    let mut out = String::with_capacity(ds.units.len() * 240);
    out.push_str(DATASET_CSV_HEADER);
    out.push('\n');
    for u in &ds.units {
        let mut fields = vec![u.id.to_string()];
        fields.extend(
            u.latents
                .x
                .iter()
                .chain(u.latents.u.iter())
                .map(|&v| fmt_real(v)),
        );
        fields.push(u.w.to_string());
        fields.push(fmt_real(u.obs_time));
        fields.push(if u.event { "1" } else { "0" }.to_string());
        fields.push(fmt_real(u.t0));
        fields.push(fmt_real(u.t1));
        fields.push(fmt_real(u.cate_true));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Write atomically: the file appears complete or not at all.
pub(crate) fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_dataset_csv(ds: &SyntheticDataset, path: &Path) -> Result<()> {
    write_atomic(path, render_dataset_csv(ds).as_bytes())
}

/// Read a dataset written by [`write_dataset_csv`]. Metadata not carried by
/// the CSV (scenario, configuration, seed, estimand, horizon) comes from `spec`.
pub fn read_dataset_csv(path: &Path, spec: &DatasetSpec) -> Result<SyntheticDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let header = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    if header.iter().collect::<Vec<_>>().join(",") != DATASET_CSV_HEADER {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            reason: "unexpected header".into(),
        });
    }
    let mut units = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let bad = |reason: String| Error::Parse {
            path: path.into(),
            line: line + 2,
            reason,
        };
        let real = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|e| bad(format!("column {}: {e}", i + 1)))
        };
        let mut x = [0.0; 5];
        for (j, slot) in x.iter_mut().enumerate() {
            *slot = real(1 + j)?;
        }
        let unit = Unit {
            id: rec[0].parse().map_err(|e| bad(format!("id: {e}")))?,
            latents: UnitLatents {
                x,
                u: [real(6)?, real(7)?],
            },
            w: rec[8].parse().map_err(|e| bad(format!("w: {e}")))?,
            obs_time: real(9)?,
            event: match &rec[10] {
                "1" => true,
                "0" => false,
                other => return Err(bad(format!("event must be 0 or 1, got '{other}'"))),
            },
            t0: real(11)?,
            t1: real(12)?,
            cate_true: real(13)?,
        };
        units.push(unit);
    }
    let horizon = match spec.horizon_rule {
        HorizonRule::Fixed(h) => h,
        HorizonRule::MaxObserved => units.iter().map(|u| u.obs_time).fold(0.0, f64::max),
    };
    Ok(SyntheticDataset {
        units,
        scenario: spec.scenario,
        config: spec.config,
        seed: spec.seed,
        estimand: spec.estimand,
        horizon,
    })
}
