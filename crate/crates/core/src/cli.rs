//! Implementations behind the `decern` command-line tool.
//!
//! Human-readable tables go to standard output; machine artifacts
//! (report.json, curves.csv, dataset files) are only ever written to
//! files, atomically.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::config::{self, ConfigMode};
use crate::error::{Error, Result};
use crate::harness::{
    self, aggregate, curves_csv, generate_synthetic, parse_report, report_json, run_experiment,
    write_atomic, Report, StrategyRuns, SyntheticSpec,
};
use crate::pools::test_sibling;

/// Flags for `generate`.
#[derive(Debug, Clone)]
pub struct GenerateArgs {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub seed: u64,
    pub spread: f64,
    pub noise: f64,
    pub overlap: f64,
    pub out: PathBuf,
}

/// Write a synthetic dataset: `<out>` (train pool), `<stem>.test.dcrn`
/// (held-out split), and a `<stem>.json` sidecar describing the spec.
pub fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let spec = SyntheticSpec {
        n_classes: args.classes,
        per_class: args.per_class,
        dim: args.dim,
        center_spread: args.spread,
        noise: args.noise,
        overlap: args.overlap,
        seed: args.seed,
    };
    spec.validate()?;
    let dataset = generate_synthetic(&spec)?;
    dataset.save_binary(&args.out)?;
    let test_path = test_sibling(&args.out);
    if let Some((te, tl)) = dataset.test_split() {
        let test_ds = crate::pools::FeatureDataset::new(te.clone(), tl.to_vec(), spec.n_classes)?;
        test_ds.save_binary(&test_path)?;
    }

    let sidecar = args.out.with_extension("json");
    let mut meta = BTreeMap::new();
    meta.insert("classes", args.classes.to_string());
    meta.insert("per_class", args.per_class.to_string());
    meta.insert("dim", args.dim.to_string());
    meta.insert("seed", args.seed.to_string());
    meta.insert("spread", args.spread.to_string());
    meta.insert("noise", args.noise.to_string());
    meta.insert("overlap", args.overlap.to_string());
    meta.insert("train_file", args.out.display().to_string());
    meta.insert("train_samples", dataset.len().to_string());
    meta.insert(
        "test_file",
        dataset
            .test_split()
            .map(|_| test_path.display().to_string())
            .unwrap_or_default(),
    );
    meta.insert(
        "test_samples",
        dataset.test_split().map(|(m, _)| m.rows()).unwrap_or(0).to_string(),
    );
    let json = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::Schema(format!("sidecar serialization: {e}")))?;
    write_atomic(&sidecar, &json)?;

    println!(
        "wrote {} ({} train samples, dim {}), test split {} ({} samples), sidecar {}",
        args.out.display(),
        dataset.len(),
        dataset.dim(),
        test_path.display(),
        dataset.test_split().map(|(m, _)| m.rows()).unwrap_or(0),
        sidecar.display(),
    );
    Ok(())
}

/// Flags shared by `run` and `sweep`.
#[derive(Debug, Clone)]
pub struct RunArgs {
    pub config: PathBuf,
    pub overrides: Vec<String>,
    pub jobs: Option<usize>,
    pub timing: bool,
}

fn load_config(args: &RunArgs, mode: ConfigMode) -> Result<(harness::RunConfig, BTreeMap<String, String>)> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("config {}: {e}", args.config.display()),
        ))
    })?;
    let mut map = config::parse_config_text(&text)?;
    config::apply_overrides(&mut map, &args.overrides)?;
    let (mut cfg, echo) = config::resolve(&map, mode)?;
    cfg.jobs = args.jobs;
    cfg.record_timing = args.timing;
    Ok((cfg, echo))
}

fn write_artifacts(cfg: &harness::RunConfig, report: &Report) -> Result<(PathBuf, PathBuf)> {
    let sanitized = if cfg.record_timing {
        report.clone()
    } else {
        report.without_timings()
    };
    let report_path = cfg.output_dir.join("report.json");
    let curves_path = cfg.output_dir.join("curves.csv");
    write_atomic(&report_path, &report_json(&sanitized)?)?;
    write_atomic(&curves_path, &curves_csv(&sanitized))?;
    Ok((report_path, curves_path))
}

fn print_strategy_table(strat: &StrategyRuns) -> Result<()> {
    let rows = aggregate(&strat.seeds)?;
    println!(
        "strategy {} ({} seeds, {} cycles):",
        strat.strategy,
        strat.seeds.len(),
        rows.len()
    );
    println!("  cycle  labeled  accuracy (mean+/-std)  imbalance (mean+/-std)  wall_ms");
    for row in &rows {
        let labeled = strat.seeds[0].cycles[row.cycle].labeled_size;
        let wall: u64 = strat
            .seeds
            .iter()
            .map(|s| s.cycles[row.cycle].timings.total_ms())
            .sum::<u64>()
            / strat.seeds.len() as u64;
        println!(
            "  {:>5}  {:>7}  {:>8.4} +/- {:<7.4}  {:>9.4} +/- {:<7.4}  {:>7}",
            row.cycle,
            labeled,
            row.mean_accuracy,
            row.std_accuracy,
            row.mean_imbalance,
            row.std_imbalance,
            wall
        );
    }
    Ok(())
}

fn print_final_comparison(strategies: &[StrategyRuns]) -> Result<()> {
    println!("final-cycle comparison:");
    println!("  strategy  accuracy (mean+/-std)");
    for strat in strategies {
        let rows = aggregate(&strat.seeds)?;
        let last = rows.last().expect("at least one cycle");
        println!(
            "  {:<8}  {:>8.4} +/- {:<7.4}",
            strat.strategy, last.mean_accuracy, last.std_accuracy
        );
    }
    Ok(())
}

/// Run one strategy and write report.json + curves.csv.
pub fn cmd_run(args: &RunArgs) -> Result<()> {
    let (cfg, echo) = load_config(args, ConfigMode::Run)?;
    let runs = run_experiment(&cfg)?;
    let report = Report::new(echo, runs);
    let (report_path, curves_path) = write_artifacts(&cfg, &report)?;
    print_strategy_table(&report.strategies[0])?;
    println!("report: {}", report_path.display());
    println!("curves: {}", curves_path.display());
    Ok(())
}

/// Run every strategy in `strategies` and write one merged report.
pub fn cmd_sweep(args: &RunArgs) -> Result<()> {
    let (cfg, echo) = load_config(args, ConfigMode::Sweep)?;
    let runs = run_experiment(&cfg)?;
    let report = Report::new(echo, runs);
    let (report_path, curves_path) = write_artifacts(&cfg, &report)?;
    for strat in &report.strategies {
        print_strategy_table(strat)?;
    }
    print_final_comparison(&report.strategies)?;
    println!("report: {}", report_path.display());
    println!("curves: {}", curves_path.display());
    Ok(())
}

/// Flags for `report`.
#[derive(Debug, Clone)]
pub struct ReportArgs {
    pub report: PathBuf,
    pub out_dir: Option<PathBuf>,
}

/// Re-emit curves.csv and the summary tables from an existing report.
pub fn cmd_report(args: &ReportArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.report).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("report {}: {e}", args.report.display()),
        ))
    })?;
    let report = parse_report(&text)?;
    let out_dir = args
        .out_dir
        .clone()
        .or_else(|| args.report.parent().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."));
    let curves_path = out_dir.join("curves.csv");
    write_atomic(&curves_path, &curves_csv(&report))?;
    for strat in &report.strategies {
        print_strategy_table(strat)?;
    }
    if report.strategies.len() > 1 {
        print_final_comparison(&report.strategies)?;
    }
    println!("curves: {}", curves_path.display());
    Ok(())
}
