//! Multi-cycle active-learning loop, metrics, synthetic benchmark
//! generation, and multi-seed orchestration.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{self, ClassifierHead, HeadArch, TrainConfig};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::pools::{initial_seed_selection, FeatureDataset, Oracle, PoolState};
use crate::scoring::ScoreStats;
use crate::seeding::{
    self, SALT_HEAD_INIT, SALT_INIT_POOL, SALT_SELECT, SALT_SYNTHETIC, SALT_TRAIN,
};
use crate::strategies::{self, StrategySpec};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Where the benchmark embeddings come from.
#[derive(Debug, Clone)]
pub enum DatasetSource {
    /// Binary or CSV embedding file, with an optional explicit test split.
    File {
        path: PathBuf,
        test_path: Option<PathBuf>,
    },
    Synthetic(SyntheticSpec),
}

impl DatasetSource {
    pub fn load(&self) -> Result<FeatureDataset> {
        match self {
            DatasetSource::File { path, test_path } => {
                let ds = if path.extension().is_some_and(|e| e == "csv") {
                    FeatureDataset::load_csv(path)?
                } else {
                    FeatureDataset::load_binary(path)?
                };
                match test_path {
                    Some(tp) => ds.load_test_split(tp),
                    None => Ok(ds),
                }
            }
            DatasetSource::Synthetic(spec) => generate_synthetic(spec),
        }
    }
}

/// Parameters of the synthetic fine-grained benchmark. Class centers sit
/// on a sphere of radius spread * (1 - overlap); raising `overlap` shrinks
/// inter-class separation to mimic subtle category differences.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub center_spread: f64,
    pub noise: f64,
    pub overlap: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 || self.per_class == 0 || self.dim == 0 {
            return Err(Error::InvalidInput(
                "synthetic counts and dimension must be at least 1".into(),
            ));
        }
        if !(self.noise > 0.0) {
            return Err(Error::InvalidInput("noise scale must be positive".into()));
        }
        Ok(())
    }
}

/// Training hyperparameters shared across cycles; the per-cycle seed is
/// derived by the harness.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainParams {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub cosine_decay: bool,
    /// Hidden width of the head; `None` trains a linear head.
    pub hidden: Option<usize>,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            lr: 0.001,
            batch_size: 128,
            epochs: 100,
            cosine_decay: true,
            hidden: None,
        }
    }
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    pub strategies: Vec<StrategySpec>,
    /// Budget multiplier: B = k * N_c per cycle.
    pub budget_multiplier: usize,
    /// Total cycles including the random cycle 0.
    pub cycles: usize,
    pub seeds: Vec<u64>,
    pub train: TrainParams,
    pub pool_subsample: Option<usize>,
    /// Write a per-cycle score-dump CSV (index, score, selected flag) for
    /// strategies that score the pool.
    pub score_dump: bool,
    pub output_dir: PathBuf,
    /// Keep measured wall-clock values in the machine artifacts. Off by
    /// default so repeated runs emit byte-identical files.
    pub record_timing: bool,
    pub jobs: Option<usize>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget_multiplier == 0 {
            return Err(Error::InvalidInput("budget multiplier must be >= 1".into()));
        }
        if self.cycles == 0 {
            return Err(Error::InvalidInput("cycle count must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidInput("seed list must not be empty".into()));
        }
        for spec in &self.strategies {
            spec.validate()?;
        }
        if self.strategies.is_empty() {
            return Err(Error::InvalidInput("no strategies configured".into()));
        }
        Ok(())
    }
}

/// Wall-clock milliseconds per phase of one cycle.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub select_ms: u64,
    pub train_ms: u64,
    pub eval_ms: u64,
}

impl PhaseTimings {
    pub fn total_ms(&self) -> u64 {
        self.select_ms + self.train_ms + self.eval_ms
    }
}

/// Everything measured in one cycle of one seeded run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CycleReport {
    pub cycle: usize,
    pub accuracy: f64,
    pub imbalance: f64,
    pub labeled_size: usize,
    pub oracle_reveals: usize,
    /// FNV-1a hash of the labeled index set, hex; equal across strategies
    /// at cycle 0 under a shared seed.
    pub pool_hash: String,
    pub selected: Vec<usize>,
    pub score_stats: Option<ScoreStats>,
    pub timings: PhaseTimings,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub cycles: Vec<CycleReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrategyRuns {
    pub strategy: String,
    pub seeds: Vec<SeedRun>,
}

/// The versioned machine artifact written as report.json.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub version: u32,
    pub engine: String,
    pub config: BTreeMap<String, String>,
    pub strategies: Vec<StrategyRuns>,
}

impl Report {
    pub fn new(config: BTreeMap<String, String>, strategies: Vec<StrategyRuns>) -> Self {
        Self {
            version: REPORT_SCHEMA_VERSION,
            engine: env!("CARGO_PKG_VERSION").to_string(),
            config,
            strategies,
        }
    }

    /// Copy with timing fields zeroed; applied to machine artifacts unless
    /// timing capture was requested.
    pub fn without_timings(&self) -> Self {
        let mut out = self.clone();
        for s in &mut out.strategies {
            for run in &mut s.seeds {
                for c in &mut run.cycles {
                    c.timings = PhaseTimings::default();
                }
            }
        }
        out
    }
}

/// Audit CSV with one row per scored sample: index, score, selected flag.
fn write_score_dump(
    cfg: &RunConfig,
    spec: &StrategySpec,
    seed: u64,
    cycle: usize,
    scores: &[(usize, f64)],
    selected: &[usize],
) -> Result<()> {
    let mut body = String::from("index,score,selected\n");
    for &(idx, s) in scores {
        let flag = u8::from(selected.binary_search(&idx).is_ok());
        body.push_str(&format!("{idx},{s},{flag}\n"));
    }
    let path = cfg.output_dir.join("scores").join(format!(
        "{}_seed{}_cycle{}.csv",
        spec.kind.name(),
        seed,
        cycle
    ));
    write_atomic(&path, &body)
}

fn fnv1a(indices: &[usize]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &i in indices {
        for byte in (i as u64).to_le_bytes() {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    hash
}

/// One deviation of a standard normal via Box-Muller.
fn gaussian(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Build the synthetic benchmark: class centers on a scaled sphere, each
/// sample a Gaussian perturbation of its center, split 70/30 stratified
/// (train keeps the rounding remainder).
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<FeatureDataset> {
    spec.validate()?;
    let mut rng = seeding::rng(seeding::mix(spec.seed, SALT_SYNTHETIC));
    let radius = spec.center_spread * (1.0 - spec.overlap);

    let mut centers = Vec::with_capacity(spec.n_classes);
    for _ in 0..spec.n_classes {
        let mut v: Vec<f64> = (0..spec.dim).map(|_| gaussian(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        v.iter_mut().for_each(|x| *x = *x / norm * radius);
        centers.push(v);
    }

    let mut train_rows = Vec::new();
    let mut train_labels = Vec::new();
    let mut test_rows = Vec::new();
    let mut test_labels = Vec::new();
    for (class, center) in centers.iter().enumerate() {
        let n_train = (0.7 * spec.per_class as f64).ceil() as usize;
        for s in 0..spec.per_class {
            let row: Vec<f64> = center
                .iter()
                .map(|&c| c + spec.noise * gaussian(&mut rng))
                .collect();
            if s < n_train {
                train_rows.push(row);
                train_labels.push(class as u32);
            } else {
                test_rows.push(row);
                test_labels.push(class as u32);
            }
        }
    }

    let ds = FeatureDataset::new(
        Matrix::from_rows(&train_rows)?,
        train_labels,
        spec.n_classes,
    )?;
    if test_rows.is_empty() {
        return Ok(ds);
    }
    ds.with_test(Matrix::from_rows(&test_rows)?, test_labels)
}

/// Labeled-set imbalance: one minus the base-2 class-distribution entropy
/// normalized by log2(N_c). Uniform counts give 0, a single class gives 1.
pub fn imbalance(labels: &[u32], n_classes: usize) -> Result<f64> {
    if n_classes < 2 {
        return Err(Error::InvalidInput(
            "imbalance needs at least 2 classes".into(),
        ));
    }
    if labels.is_empty() {
        return Err(Error::InvalidInput("empty labeled set".into()));
    }
    let mut counts = vec![0usize; n_classes];
    for &y in labels {
        if y as usize >= n_classes {
            return Err(Error::InvalidInput(format!(
                "label {y} out of range for {n_classes} classes"
            )));
        }
        counts[y as usize] += 1;
    }
    let total = labels.len() as f64;
    let mut h = 0.0;
    for &c in &counts {
        if c > 0 {
            let p = c as f64 / total;
            h -= p * p.log2();
        }
    }
    Ok((1.0 - h / (n_classes as f64).log2()).clamp(0.0, 1.0))
}

/// Run one strategy for one seed across all cycles.
///
/// Cycle 0 labels a random budget-sized pool; later cycles select with the
/// strategy, reveal labels through the oracle, and retrain the head from
/// scratch. Every random draw derives from (seed, cycle), so strategies
/// compared under the same seed share the cycle-0 pool and training
/// streams.
pub fn run_single(
    dataset: &FeatureDataset,
    spec: &StrategySpec,
    cfg: &RunConfig,
    seed: u64,
) -> Result<SeedRun> {
    let n_classes = dataset.n_classes();
    let budget = cfg.budget_multiplier * n_classes;
    let (test_emb, test_labels) = dataset.test_split().ok_or_else(|| {
        Error::InvalidInput("dataset has no test split to evaluate on".into())
    })?;
    let test_indices: Vec<usize> = (0..test_emb.rows()).collect();

    let arch = match cfg.train.hidden {
        None => HeadArch::linear(dataset.dim(), n_classes),
        Some(h) => HeadArch::with_hidden(dataset.dim(), h, n_classes),
    };

    let mut oracle = Oracle::new(dataset.len());
    let mut pool = PoolState::new(dataset.len());
    let mut head = ClassifierHead::zeroed(arch);
    let mut cycles = Vec::with_capacity(cfg.cycles);

    for cycle in 0..cfg.cycles {
        if budget > pool.unlabeled().len() {
            return Err(Error::Infeasible(format!(
                "budget {budget} exceeds the unlabeled pool at cycle {cycle}"
            )));
        }
        let select_start = Instant::now();
        let (selected, score_stats) = if cycle == 0 {
            let chosen = initial_seed_selection(dataset, budget, seeding::mix(seed, SALT_INIT_POOL))?;
            (chosen, None)
        } else {
            let res = strategies::select(
                spec,
                &head,
                dataset,
                &pool,
                budget,
                seeding::mix_cycle(seed, SALT_SELECT, cycle),
                cfg.pool_subsample,
            )?;
            if cfg.score_dump {
                if let Some(scores) = &res.scores {
                    write_score_dump(cfg, spec, seed, cycle, scores, &res.indices)?;
                }
            }
            (res.indices, res.score_stats)
        };
        let select_ms = select_start.elapsed().as_millis() as u64;

        oracle.label(dataset, &selected)?;
        pool.update(&selected)?;

        let train_start = Instant::now();
        head = ClassifierHead::init_seeded(arch, seeding::mix_cycle(seed, SALT_HEAD_INIT, cycle));
        let tcfg = TrainConfig {
            lr: cfg.train.lr,
            batch_size: cfg.train.batch_size,
            epochs: cfg.train.epochs,
            cosine_decay: cfg.train.cosine_decay,
            seed: seeding::mix_cycle(seed, SALT_TRAIN, cycle),
        };
        classifier::train(
            &mut head,
            dataset.embeddings(),
            dataset.labels(),
            pool.labeled(),
            &tcfg,
        )?;
        let train_ms = train_start.elapsed().as_millis() as u64;

        let eval_start = Instant::now();
        let accuracy = head.evaluate_accuracy(test_emb, test_labels, &test_indices)?;
        let labeled_labels: Vec<u32> = pool
            .labeled()
            .iter()
            .map(|&i| dataset.labels()[i])
            .collect();
        let imb = imbalance(&labeled_labels, n_classes)?;
        let eval_ms = eval_start.elapsed().as_millis() as u64;

        debug_assert_eq!(pool.labeled().len() + pool.unlabeled().len(), dataset.len());
        debug_assert_eq!(oracle.reveal_count(), pool.labeled().len());

        cycles.push(CycleReport {
            cycle,
            accuracy,
            imbalance: imb,
            labeled_size: pool.labeled().len(),
            oracle_reveals: oracle.reveal_count(),
            pool_hash: format!("{:016x}", fnv1a(pool.labeled())),
            selected,
            score_stats,
            timings: PhaseTimings {
                select_ms,
                train_ms,
                eval_ms,
            },
        });
    }
    Ok(SeedRun { seed, cycles })
}

/// Run every configured strategy for every seed. Jobs execute in parallel
/// (bounded by `cfg.jobs` when set) and results are assembled in
/// configuration order, so output does not depend on scheduling.
pub fn run_experiment(cfg: &RunConfig) -> Result<Vec<StrategyRuns>> {
    cfg.validate()?;
    let dataset = cfg.dataset.load()?;

    let jobs: Vec<(usize, u64)> = cfg
        .strategies
        .iter()
        .enumerate()
        .flat_map(|(si, _)| cfg.seeds.iter().map(move |&seed| (si, seed)))
        .collect();

    let execute = || -> Result<Vec<SeedRun>> {
        jobs.par_iter()
            .map(|&(si, seed)| run_single(&dataset, &cfg.strategies[si], cfg, seed))
            .collect()
    };
    let flat = match cfg.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?
            .install(execute),
        None => execute(),
    }?;

    let mut out: Vec<StrategyRuns> = cfg
        .strategies
        .iter()
        .map(|s| StrategyRuns {
            strategy: s.kind.name().to_string(),
            seeds: Vec::new(),
        })
        .collect();
    for ((si, _), run) in jobs.into_iter().zip(flat) {
        out[si].seeds.push(run);
    }
    Ok(out)
}

/// Mean and spread of one metric across seeds for one cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub cycle: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_imbalance: f64,
    pub std_imbalance: f64,
}

/// Sample standard deviation (n - 1 denominator); 0 for a single value.
fn sample_mean_std(values: &[f64]) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    if sorted.len() < 2 {
        return (mean, 0.0);
    }
    let var = sorted.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-cycle mean and sample std across seeds.
pub fn aggregate(runs: &[SeedRun]) -> Result<Vec<AggregateRow>> {
    let cycles = runs
        .first()
        .ok_or_else(|| Error::InvalidInput("no seed runs to aggregate".into()))?
        .cycles
        .len();
    if runs.iter().any(|r| r.cycles.len() != cycles) {
        return Err(Error::InvalidInput(
            "seed runs have differing cycle counts".into(),
        ));
    }
    let mut out = Vec::with_capacity(cycles);
    for c in 0..cycles {
        let acc: Vec<f64> = runs.iter().map(|r| r.cycles[c].accuracy).collect();
        let imb: Vec<f64> = runs.iter().map(|r| r.cycles[c].imbalance).collect();
        let (ma, sa) = sample_mean_std(&acc);
        let (mi, si) = sample_mean_std(&imb);
        out.push(AggregateRow {
            cycle: c,
            mean_accuracy: ma,
            std_accuracy: sa,
            mean_imbalance: mi,
            std_imbalance: si,
        });
    }
    Ok(out)
}

/// Render the plot-ready long-format CSV for a report. The same function
/// backs `run`, `sweep`, and `report`, which keeps re-emission lossless.
pub fn curves_csv(report: &Report) -> String {
    let mut out = String::from(
        "cycle,strategy,seed,accuracy,imbalance,candidates,lambda,zeta,wall_ms\n",
    );
    for strat in &report.strategies {
        for run in &strat.seeds {
            for c in &run.cycles {
                let (cand, lambda, zeta) = match &c.score_stats {
                    Some(s) => (
                        s.candidate_count.to_string(),
                        s.lambda.to_string(),
                        s.zeta.to_string(),
                    ),
                    None => (String::new(), String::new(), String::new()),
                };
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    c.cycle,
                    strat.strategy,
                    run.seed,
                    c.accuracy,
                    c.imbalance,
                    cand,
                    lambda,
                    zeta,
                    c.timings.total_ms(),
                ));
            }
        }
    }
    out
}

/// Serialize a report as stable pretty JSON.
pub fn report_json(report: &Report) -> Result<String> {
    serde_json::to_string_pretty(report)
        .map_err(|e| Error::Schema(format!("report serialization: {e}")))
}

/// Parse and version-check a report file's contents.
pub fn parse_report(text: &str) -> Result<Report> {
    let report: Report =
        serde_json::from_str(text).map_err(|e| Error::Schema(format!("report parse: {e}")))?;
    if report.version != REPORT_SCHEMA_VERSION {
        return Err(Error::Schema(format!(
            "report version {} unsupported (expected {REPORT_SCHEMA_VERSION})",
            report.version
        )));
    }
    Ok(report)
}

/// Write a file atomically (temp file in the same directory, then rename).
pub fn write_atomic(path: &std::path::Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
