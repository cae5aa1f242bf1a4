//! Selection strategies behind one interface: the discrepancy-confusion
//! engine plus the random, k-means, core-set, entropy, and margin
//! baselines used for head-to-head benchmarking.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::classifier::ClassifierHead;
use crate::diversity::{calibration_select, weighted_kmeans, SelectionResult};
use crate::error::{Error, Result};
use crate::numerics::{self, Matrix};
use crate::pools::{build_anchors, FeatureDataset, PoolState};
use crate::scoring::{candidate_threshold, score_sample, FusionConfig};
use crate::seeding::{self, SALT_KMEANS, SALT_SUBSAMPLE};

/// Available selection strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    Decern,
    Random,
    KMeans,
    CoreSet,
    Entropy,
    Margin,
}

impl StrategyKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "decern" => Ok(Self::Decern),
            "random" => Ok(Self::Random),
            "kmeans" | "k-means" => Ok(Self::KMeans),
            "coreset" | "core-set" => Ok(Self::CoreSet),
            "entropy" => Ok(Self::Entropy),
            "margin" => Ok(Self::Margin),
            other => Err(Error::InvalidInput(format!(
                "unknown strategy {other:?} (expected decern|random|kmeans|coreset|entropy|margin)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Decern => "decern",
            Self::Random => "random",
            Self::KMeans => "kmeans",
            Self::CoreSet => "coreset",
            Self::Entropy => "entropy",
            Self::Margin => "margin",
        }
    }
}

/// A strategy with its parameters; fusion and xi apply to `Decern` only.
#[derive(Debug, Clone)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    pub fusion: FusionConfig,
    pub xi: f64,
}

impl StrategySpec {
    pub fn new(kind: StrategyKind) -> Self {
        Self {
            kind,
            fusion: FusionConfig::default(),
            xi: 0.8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.fusion.validate()?;
        if !(0.0..=1.0).contains(&self.xi) {
            return Err(Error::InvalidInput(format!(
                "xi must lie in [0, 1], got {}",
                self.xi
            )));
        }
        Ok(())
    }
}

/// Select `budget` distinct unlabeled indices with the given strategy.
///
/// All strategies see the same (head snapshot, pool snapshot, seed) and are
/// deterministic under a fixed seed. `pool_subsample`, when set, restricts
/// scoring to a seeded random subset of the unlabeled pool.
pub fn select(
    spec: &StrategySpec,
    head: &ClassifierHead,
    dataset: &FeatureDataset,
    pool: &PoolState,
    budget: usize,
    seed: u64,
    pool_subsample: Option<usize>,
) -> Result<SelectionResult> {
    spec.validate()?;
    let unlabeled = effective_pool(pool, seed, pool_subsample);
    if unlabeled.len() < budget {
        return Err(Error::Infeasible(format!(
            "budget {budget} exceeds unlabeled pool of {}",
            unlabeled.len()
        )));
    }
    if budget == 0 {
        return Err(Error::InvalidInput("budget must be positive".into()));
    }
    match spec.kind {
        StrategyKind::Random => random_select(&unlabeled, budget, seed),
        StrategyKind::Entropy => entropy_select(head, dataset, &unlabeled, budget),
        StrategyKind::Margin => margin_select(head, dataset, &unlabeled, budget),
        StrategyKind::KMeans => kmeans_select(dataset, &unlabeled, budget, seed),
        StrategyKind::CoreSet => coreset_select(dataset, pool.labeled(), &unlabeled, budget),
        StrategyKind::Decern => decern_select(spec, head, dataset, pool, &unlabeled, budget, seed),
    }
}

fn effective_pool(pool: &PoolState, seed: u64, subsample: Option<usize>) -> Vec<usize> {
    let unlabeled = pool.unlabeled();
    match subsample {
        Some(n) if n < unlabeled.len() => {
            let mut rng = seeding::rng(seeding::mix(seed, SALT_SUBSAMPLE));
            let mut chosen: Vec<usize> = unlabeled.to_vec();
            chosen.shuffle(&mut rng);
            chosen.truncate(n);
            chosen.sort_unstable();
            chosen
        }
        _ => unlabeled.to_vec(),
    }
}

fn plain_result(indices: Vec<usize>) -> SelectionResult {
    SelectionResult {
        indices,
        diagnostics: Vec::new(),
        score_stats: None,
        scores: None,
    }
}

fn random_select(unlabeled: &[usize], budget: usize, seed: u64) -> Result<SelectionResult> {
    let mut rng = seeding::rng(seed);
    let mut chosen: Vec<usize> = unlabeled.to_vec();
    chosen.shuffle(&mut rng);
    chosen.truncate(budget);
    chosen.sort_unstable();
    Ok(plain_result(chosen))
}

/// Largest scores first, ties toward the lower dataset index.
fn top_by_score(unlabeled: &[usize], scores: &[f64], budget: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..unlabeled.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(unlabeled[a].cmp(&unlabeled[b]))
    });
    let mut chosen: Vec<usize> = order.into_iter().take(budget).map(|i| unlabeled[i]).collect();
    chosen.sort_unstable();
    chosen
}

fn entropy_select(
    head: &ClassifierHead,
    dataset: &FeatureDataset,
    unlabeled: &[usize],
    budget: usize,
) -> Result<SelectionResult> {
    let scores = unlabeled
        .par_iter()
        .map(|&i| numerics::entropy(&head.predict_proba(dataset.embeddings().row(i))?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(plain_result(top_by_score(unlabeled, &scores, budget)))
}

fn margin_select(
    head: &ClassifierHead,
    dataset: &FeatureDataset,
    unlabeled: &[usize],
    budget: usize,
) -> Result<SelectionResult> {
    // Smaller top-2 margin means more uncertain; negate so the shared
    // top-k helper can rank descending.
    let scores = unlabeled
        .par_iter()
        .map(|&i| {
            let p = head.predict_proba(dataset.embeddings().row(i))?;
            let mut top1 = f64::NEG_INFINITY;
            let mut top2 = f64::NEG_INFINITY;
            for &x in &p {
                if x > top1 {
                    top2 = top1;
                    top1 = x;
                } else if x > top2 {
                    top2 = x;
                }
            }
            Ok(-(top1 - top2))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(plain_result(top_by_score(unlabeled, &scores, budget)))
}

fn gather_rows(dataset: &FeatureDataset, indices: &[usize]) -> Matrix {
    let rows: Vec<Vec<f64>> = indices
        .iter()
        .map(|&i| dataset.embeddings().row(i).to_vec())
        .collect();
    Matrix::from_rows(&rows).expect("uniform embedding rows")
}

/// Unweighted k-means baseline: cluster the unlabeled pool into `budget`
/// groups and take the member closest to each centroid.
fn kmeans_select(
    dataset: &FeatureDataset,
    unlabeled: &[usize],
    budget: usize,
    seed: u64,
) -> Result<SelectionResult> {
    let points = gather_rows(dataset, unlabeled);
    let weights = vec![1.0; unlabeled.len()];
    let clustering = weighted_kmeans(&points, &weights, budget, seeding::mix(seed, SALT_KMEANS))?;
    let mut winners: Vec<Option<(usize, f64)>> = vec![None; budget];
    for (i, &cluster) in clustering.assignments.iter().enumerate() {
        let d2 = numerics::squared_distance(points.row(i), clustering.centroids.row(cluster));
        let better = match winners[cluster] {
            None => true,
            Some((_, best)) => d2 < best,
        };
        if better {
            winners[cluster] = Some((unlabeled[i], d2));
        }
    }
    let mut chosen: Vec<usize> = winners.into_iter().flatten().map(|(i, _)| i).collect();
    chosen.sort_unstable();
    Ok(plain_result(chosen))
}

/// Greedy k-center: repeatedly take the unlabeled point with the largest
/// minimum Euclidean distance to the labeled-plus-selected set.
fn coreset_select(
    dataset: &FeatureDataset,
    labeled: &[usize],
    unlabeled: &[usize],
    budget: usize,
) -> Result<SelectionResult> {
    if labeled.is_empty() {
        return Err(Error::InvalidInput("core-set needs a non-empty labeled pool".into()));
    }
    let emb = dataset.embeddings();
    let mut min_dist: Vec<f64> = unlabeled
        .par_iter()
        .map(|&i| {
            labeled
                .iter()
                .map(|&l| numerics::squared_distance(emb.row(i), emb.row(l)).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut active: Vec<bool> = vec![true; unlabeled.len()];
    let mut chosen = Vec::with_capacity(budget);
    for _ in 0..budget {
        let mut best: Option<usize> = None;
        for (pos, &alive) in active.iter().enumerate() {
            if !alive {
                continue;
            }
            let better = match best {
                None => true,
                // strict > keeps the lower dataset index on ties
                Some(b) => min_dist[pos] > min_dist[b],
            };
            if better {
                best = Some(pos);
            }
        }
        let pick = best.expect("budget <= pool size");
        active[pick] = false;
        chosen.push(unlabeled[pick]);
        for (pos, &alive) in active.iter().enumerate() {
            if alive {
                let d = numerics::squared_distance(emb.row(unlabeled[pos]), emb.row(unlabeled[pick]))
                    .sqrt();
                if d < min_dist[pos] {
                    min_dist[pos] = d;
                }
            }
        }
    }
    chosen.sort_unstable();
    Ok(plain_result(chosen))
}

/// The full uncertainty + calibrated-diversity pipeline: score every
/// unlabeled sample, keep the scores above the dynamic threshold, cluster
/// the candidates with score-weighted k-means, and take one calibrated
/// winner per cluster.
fn decern_select(
    spec: &StrategySpec,
    head: &ClassifierHead,
    dataset: &FeatureDataset,
    pool: &PoolState,
    unlabeled: &[usize],
    budget: usize,
    seed: u64,
) -> Result<SelectionResult> {
    let anchors = build_anchors(head, dataset, pool.labeled())?;
    let scores = unlabeled
        .par_iter()
        .map(|&i| score_sample(head, dataset.embeddings().row(i), &anchors, &spec.fusion))
        .collect::<Result<Vec<f64>>>()?;

    let (stats, candidate_pos) = candidate_threshold(&scores, budget, spec.fusion.lambda_mode)?;
    let candidate_ids: Vec<usize> = candidate_pos.iter().map(|&p| unlabeled[p]).collect();
    let weights: Vec<f64> = candidate_pos.iter().map(|&p| scores[p]).collect();
    let points = gather_rows(dataset, &candidate_ids);

    let clustering = weighted_kmeans(&points, &weights, budget, seeding::mix(seed, SALT_KMEANS))?;
    let mut result = calibration_select(&clustering, &candidate_ids, &points, &anchors, spec.xi)?;
    result.score_stats = Some(stats);
    result.scores = Some(unlabeled.iter().copied().zip(scores).collect());
    Ok(result)
}
