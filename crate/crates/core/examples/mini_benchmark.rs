//! Run the mini benchmark config and write the full report to a directory.
//!
//! cargo run --release --example mini_benchmark -- [CONFIG_JSON] [OUT_DIR]

use std::path::PathBuf;

use anyhow::{Context, Result};
use survhte::bench::{render_report, run_benchmark, ExperimentConfig, ReportFormat};

fn main() -> Result<()> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..");
    let mut args = std::env::args().skip(1);
    let cfg_path = args
        .next()
        .map_or_else(|| root.join("configs/mini_benchmark.json"), PathBuf::from);
    let out = args
        .next()
        .map_or_else(|| PathBuf::from("mini_results"), PathBuf::from);

    let cfg = ExperimentConfig::load(&cfg_path)
        .with_context(|| format!("loading {}", cfg_path.display()))?;
    let report = run_benchmark(&cfg)?;
    std::fs::create_dir_all(&out)?;
    for f in render_report(
        &report,
        &out,
        &[ReportFormat::Csv, ReportFormat::Markdown],
        false,
    )? {
        println!("wrote {}", f.display());
    }
    for r in report
        .records
        .iter()
        .filter(|r| r.level.to_string() == "family")
    {
        println!(
            "{} {:<40} test RMSE {:.3}",
            r.dataset,
            r.method.to_string(),
            r.cate_rmse.unwrap_or(f64::NAN)
        );
    }
    println!(
        "split audit: {} leaks",
        report.audit.iter().map(|a| a.leaks).sum::<usize>()
    );
    Ok(())
}
