use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use survhte::bench::{
    convergence_run, export_dataset, rank_records, read_metrics_csv, render_report, run_benchmark,
    write_rank_files, BenchReport, ExperimentConfig, RankLevel, ReportFormat,
};
use survhte::datagen::{CausalConfig, DatasetSpec, Estimand, HorizonRule, Scenario};
use survhte::metrics::RankMetric;

#[derive(Parser)]
#[command(
    name = "survhte",
    version,
    about = "Treatment-effect benchmarks on censored survival data"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "SURVHTE_THREADS")]
    threads: Option<usize>,
    /// Log verbosity: -v info, -vv debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate one synthetic dataset as CSV.
    Generate(GenerateArgs),
    /// Run the benchmark described by a JSON config.
    Run(RunArgs),
    /// Sweep training sizes and write size-vs-RMSE curves.
    Convergence(ConvergenceArgs),
    /// Rank methods from an existing metrics.csv.
    Rank(RankArgs),
    /// Re-render report files from a saved report.json.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value = "A")]
    scenario: Scenario,
    #[arg(long, default_value = "RCT-50")]
    config: CausalConfig,
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "rmst")]
    estimand: Estimand,
    /// Fixed horizon; the maximum observed time when omitted.
    #[arg(long)]
    horizon: Option<f64>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Overrides {
    /// Experiment config (JSON). Defaults apply to omitted fields.
    #[arg(long = "config")]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    allow_missing: bool,
    /// Draw a fresh pool per repeat.
    #[arg(long)]
    regenerate_pool: bool,
}

impl Overrides {
    fn resolve(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let mut cfg = match &self.config {
            Some(p) => {
                ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.allow_missing |= self.allow_missing;
        cfg.regenerate_pool |= self.regenerate_pool;
        let out = self
            .out
            .clone()
            .or_else(|| cfg.out.clone())
            .unwrap_or_else(|| PathBuf::from("results"));
        cfg.out = Some(out.clone());
        cfg.validate()?;
        Ok((cfg, out))
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Overrides,
    /// Print the default config as JSON and exit.
    #[arg(long)]
    print_default_config: bool,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[command(flatten)]
    common: Overrides,
    /// Comma-separated training sizes.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "50,100,500,1000,5000,10000"
    )]
    sizes: Vec<usize>,
}

#[derive(Args)]
struct RankArgs {
    /// metrics.csv written by `run`.
    #[arg(long)]
    metrics: PathBuf,
    #[arg(long, default_value = "family")]
    level: RankLevel,
    #[arg(long, default_value = "cate_rmse")]
    metric: RankMetric,
    #[arg(long, value_delimiter = ',', default_value = "1,3,5")]
    top_k: Vec<usize>,
    #[arg(long)]
    allow_missing: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// report.json written by `run`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "csv,markdown")]
    format: Vec<ReportFormat>,
    #[arg(long)]
    allow_missing: bool,
}

const ALL_FORMATS: [ReportFormat; 2] = [ReportFormat::Csv, ReportFormat::Markdown];

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    match cli.cmd {
        Cmd::Generate(a) => generate(a),
        Cmd::Run(a) => run(a),
        Cmd::Convergence(a) => convergence(a),
        Cmd::Rank(a) => rank(a),
        Cmd::Report(a) => report(a),
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let horizon = a
        .horizon
        .map_or(HorizonRule::MaxObserved, HorizonRule::Fixed);
    let spec = DatasetSpec::new(a.scenario, a.config, a.n, a.seed)
        .with_estimand(a.estimand)
        .with_horizon(horizon);
    let ds = export_dataset(&spec, &a.out)?;
    println!(
        "wrote {} units to {} (censoring {:.3}, treated {:.3}, horizon {:.4})",
        ds.len(),
        a.out.display(),
        ds.censoring_rate(),
        ds.treatment_rate(),
        ds.horizon
    );
    Ok(())
}

fn write_config(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(dir.join("config.json"), cfg.to_json() + "\n")?;
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    if a.print_default_config {
        let mut out = std::io::stdout().lock();
        return match writeln!(out, "{}", ExperimentConfig::default().to_json()) {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
            r => Ok(r?),
        };
    }
    let (cfg, out) = a.common.resolve()?;
    write_config(&cfg, &out)?;
    let rep = run_benchmark(&cfg)?;
    rep.save_json(&out.join("report.json"))?;
    let files = render_report(&rep, &out, &ALL_FORMATS, false)
        .context("ranking failed; metrics.csv is written, rerun `rank` with --allow-missing to rank complete datasets")?;
    println!(
        "{} records ({} failed) in {}",
        rep.provenance.n_records,
        rep.provenance.n_failed,
        out.display()
    );
    for f in files {
        println!("  {}", f.display());
    }
    Ok(())
}

fn convergence(a: ConvergenceArgs) -> Result<()> {
    let (cfg, out) = a.common.resolve()?;
    write_config(&cfg, &out)?;
    let rep = convergence_run(&cfg, &a.sizes)?;
    let path = out.join("convergence.csv");
    rep.write_csv(&path)?;
    println!("{} points in {}", rep.points.len(), path.display());
    Ok(())
}

fn rank(a: RankArgs) -> Result<()> {
    let records = read_metrics_csv(&a.metrics)?;
    let table = rank_records(&records, a.level, a.metric, &a.top_k, a.allow_missing)?;
    if table.is_none() {
        eprintln!(
            "no successful records at level {}; writing headers only",
            a.level
        );
    }
    for f in write_rank_files(table.as_ref(), &a.top_k, &a.out, &ALL_FORMATS)? {
        println!("{}", f.display());
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let rep = BenchReport::load_json(&a.input)
        .with_context(|| format!("loading {}", a.input.display()))?;
    for f in render_report(&rep, &a.out, &a.format, a.allow_missing)? {
        println!("{}", f.display());
    }
    Ok(())
}
