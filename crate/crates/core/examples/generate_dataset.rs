//! Draw one synthetic dataset, print its summary statistics and write it as CSV.
//!
//! cargo run --example generate_dataset -- [SCENARIO] [CONFIG] [N] [OUT]

use anyhow::Result;
use survhte::bench::export_dataset;
use survhte::datagen::{CausalConfig, DatasetSpec, Scenario};

fn main() -> Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let scenario: Scenario = args.first().map_or("C", String::as_str).parse()?;
    let config: CausalConfig = args.get(1).map_or("OBS-CPS-InfC", String::as_str).parse()?;
    let n: usize = args.get(2).map_or(Ok(5000), |s| s.parse())?;
    let out = args.get(3).cloned().unwrap_or_else(|| "dataset.csv".into());

    let ds = export_dataset(&DatasetSpec::new(scenario, config, n, 7), out.as_ref())?;
    let cate = ds.true_cates();
    println!("{scenario}/{config}, n = {n} -> {out}");
    println!("  censoring rate  {:.3}", ds.censoring_rate());
    println!("  treatment rate  {:.3}", ds.treatment_rate());
    println!("  horizon (max observed time) {:.3}", ds.horizon);
    println!(
        "  mean true CATE (RMST) {:.4}",
        cate.iter().sum::<f64>() / n as f64
    );
    Ok(())
}
