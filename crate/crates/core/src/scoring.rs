//! Discrepancy-confusion uncertainty scoring.
//!
//! For each unlabeled sample the engine interpolates its embedding toward
//! every present class anchor on a gradient-selected subset of dimensions,
//! then scores how much the prediction distribution of the fused embedding
//! drifts (cross-entropy against reference distributions) and how confused
//! it becomes (entropy). Scores above a dynamic threshold become the
//! candidate pool for diversity selection.

use crate::classifier::ClassifierHead;
use crate::error::{Error, Result};
use crate::numerics;
use crate::pools::AnchorSet;

/// How the moderator of the score threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaMode {
    /// Score skewness, clamped to [-1, 1].
    Dynamic,
    /// Fixed value, used as given.
    Fixed(f64),
}

/// Placement of the weighted-probe term in the instance score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PwPlacement {
    /// Summed per class inside the average (default).
    InsideAverage,
    /// Averaged first two terms plus a separate per-class sum.
    OutsideAverage,
}

/// Fusion and thresholding parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    /// Fraction of embedding dimensions the mask selects, in (0, 1].
    pub mask_fraction: f64,
    pub lambda_mode: LambdaMode,
    pub pw_placement: PwPlacement,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            mask_fraction: 0.1,
            lambda_mode: LambdaMode::Dynamic,
            pw_placement: PwPlacement::InsideAverage,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mask_fraction > 0.0 && self.mask_fraction <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "mask fraction must lie in (0, 1], got {}",
                self.mask_fraction
            )));
        }
        Ok(())
    }
}

/// Indicator over embedding dimensions chosen for fusion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    bits: Vec<bool>,
    popcount: usize,
}

impl BinaryMask {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        let popcount = bits.iter().filter(|&&b| b).count();
        Self { bits, popcount }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn popcount(&self) -> usize {
        self.popcount
    }

    pub fn is_set(&self, dim: usize) -> bool {
        self.bits[dim]
    }
}

/// Mask the ceil(R * d) dimensions with the largest input-gradient
/// magnitude, at least one; ties break toward the lower dimension index.
/// The gradient target is the head's own argmax prediction.
pub fn build_mask(head: &ClassifierHead, z_u: &[f64], cfg: &FusionConfig) -> Result<BinaryMask> {
    cfg.validate()?;
    let d = z_u.len();
    if d == 0 {
        return Err(Error::InvalidInput("empty vector".into()));
    }
    let pseudo_label = head.predicted_class(z_u)?;
    let grad = head.input_gradient(z_u, pseudo_label)?;
    let k = ((cfg.mask_fraction * d as f64).ceil() as usize).clamp(1, d);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        grad[b]
            .abs()
            .partial_cmp(&grad[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut bits = vec![false; d];
    for &dim in order.iter().take(k) {
        bits[dim] = true;
    }
    Ok(BinaryMask::from_bits(bits))
}

/// Local feature fusion: unmasked dimensions pass through unchanged,
/// masked dimensions interpolate convexly toward the anchor.
pub fn fuse(z_u: &[f64], z_anchor: &[f64], alpha: f64, mask: &BinaryMask) -> Result<Vec<f64>> {
    if z_u.len() != z_anchor.len() || z_u.len() != mask.len() {
        return Err(Error::InvalidInput(format!(
            "fusion dimension mismatch: {} vs {} vs mask {}",
            z_u.len(),
            z_anchor.len(),
            mask.len()
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!(
            "fusion strength {alpha} outside [0, 1]"
        )));
    }
    // The degenerate cases must reproduce z_u bit-exactly.
    if alpha == 0.0 || mask.popcount() == 0 {
        return Ok(z_u.to_vec());
    }
    Ok(z_u
        .iter()
        .zip(z_anchor.iter())
        .enumerate()
        .map(|(i, (&z, &a))| {
            if mask.is_set(i) {
                z * (1.0 - alpha) + a * alpha
            } else {
                z
            }
        })
        .collect())
}

/// Probe distributions for one unlabeled sample against one class anchor.
#[derive(Debug, Clone)]
pub struct ClassProbe {
    pub class: usize,
    /// Fusion strength; the sample's predicted probability for the class.
    pub alpha: f64,
    /// 1 - (1 + cos(z_u, z_anchor)) / 2, in [0, 1].
    pub beta: f64,
    /// Interpolation of the prediction itself toward the anchor prediction.
    pub p_b: Vec<f64>,
    /// Same interpolation damped by the mask fraction.
    pub p_w: Vec<f64>,
    /// Prediction of the fused embedding.
    pub p_m: Vec<f64>,
}

/// All per-class probes for one unlabeled sample.
#[derive(Debug, Clone)]
pub struct ProbeSet {
    pub p_u: Vec<f64>,
    pub probes: Vec<ClassProbe>,
}

/// Compute probe distributions for every present anchor class.
pub fn probe(
    head: &ClassifierHead,
    z_u: &[f64],
    p_u: &[f64],
    anchors: &AnchorSet,
    mask: &BinaryMask,
    cfg: &FusionConfig,
) -> Result<ProbeSet> {
    cfg.validate()?;
    let present = anchors.present_classes();
    if present.is_empty() {
        return Err(Error::InvalidInput("no present anchor classes".into()));
    }
    let r = cfg.mask_fraction;
    let mut probes = Vec::with_capacity(present.len());
    for &j in &present {
        let z_a = anchors.embedding(j);
        let p_a = anchors.probability(j);
        let alpha = p_u[j];
        let fused = fuse(z_u, z_a, alpha, mask)?;
        let p_m = head.predict_proba(&fused)?;
        let p_b: Vec<f64> = p_u
            .iter()
            .zip(p_a.iter())
            .map(|(&u, &a)| (1.0 - alpha) * u + alpha * a)
            .collect();
        let p_w: Vec<f64> = p_u
            .iter()
            .zip(p_a.iter())
            .map(|(&u, &a)| (1.0 - r * alpha) * u + r * alpha * a)
            .collect();
        let beta = 1.0 - (1.0 + numerics::cosine_similarity(z_u, z_a)?) / 2.0;
        probes.push(ClassProbe {
            class: j,
            alpha,
            beta,
            p_b,
            p_w,
            p_m,
        });
    }
    Ok(ProbeSet {
        p_u: p_u.to_vec(),
        probes,
    })
}

fn frac_pow(base: f64, exp: f64) -> f64 {
    // Bases are entropies; clamp rounding noise below zero. 0^0 = 1 here,
    // which keeps the beta endpoint cases finite.
    base.max(0.0).powf(exp)
}

/// Category-level score: entropy(p_m)^(1-beta) + cross_entropy(p_ref, p_m)^beta.
pub fn score_dc(p_ref: &[f64], p_m: &[f64], beta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidInput(format!("beta {beta} outside [0, 1]")));
    }
    let confusion = numerics::entropy(p_m)?;
    let discrepancy = numerics::cross_entropy(p_ref, p_m)?;
    Ok(frac_pow(confusion, 1.0 - beta) + frac_pow(discrepancy, beta))
}

/// Instance-level score: per-class combination of the three probe scores,
/// averaged over present classes (renormalized when classes are absent).
pub fn instance_score(probe_set: &ProbeSet, cfg: &FusionConfig) -> Result<f64> {
    if probe_set.probes.is_empty() {
        return Err(Error::InvalidInput("no present anchor classes".into()));
    }
    let r = cfg.mask_fraction;
    let m = probe_set.probes.len() as f64;
    let mut inner = 0.0;
    let mut pw_sum = 0.0;
    for cp in &probe_set.probes {
        let s_u = score_dc(&probe_set.p_u, &cp.p_m, cp.beta)?;
        let s_b = score_dc(&cp.p_b, &cp.p_m, cp.beta)?;
        let s_w = score_dc(&cp.p_w, &cp.p_m, cp.beta)?;
        match cfg.pw_placement {
            PwPlacement::InsideAverage => inner += (1.0 - r) * s_u + r * s_b + s_w,
            PwPlacement::OutsideAverage => {
                inner += (1.0 - r) * s_u + r * s_b;
                pw_sum += s_w;
            }
        }
    }
    Ok(inner / m + pw_sum)
}

/// Threshold summary attached to each scored cycle.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScoreStats {
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
    pub lambda: f64,
    pub zeta: f64,
    pub candidate_count: usize,
    /// True when fewer than `budget` scores beat the threshold and the
    /// candidate set fell back to the top-budget scores.
    pub fallback: bool,
}

/// Dynamic-threshold candidate selection.
///
/// Candidates are the positions with score strictly above
/// zeta = mean + lambda * std. When fewer than `budget` survive, the
/// candidate set falls back to the `budget` largest scores (ties to the
/// lower index) so the clustering stage always has enough members.
pub fn candidate_threshold(
    scores: &[f64],
    budget: usize,
    mode: LambdaMode,
) -> Result<(ScoreStats, Vec<usize>)> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("empty score table".into()));
    }
    let (mean, std) = numerics::mean_std(scores)?;
    let skew = if scores.len() >= 2 {
        numerics::skewness(scores)?
    } else {
        0.0
    };
    let lambda = match mode {
        LambdaMode::Dynamic => skew.clamp(-1.0, 1.0),
        LambdaMode::Fixed(v) => v,
    };
    let zeta = mean + lambda * std;

    let mut candidates: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] > zeta).collect();
    let fallback = candidates.len() < budget;
    if fallback {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        candidates = order.into_iter().take(budget).collect();
        candidates.sort_unstable();
    }
    let stats = ScoreStats {
        mean,
        std,
        skewness: skew,
        lambda,
        zeta,
        candidate_count: candidates.len(),
        fallback,
    };
    Ok((stats, candidates))
}

/// Score one unlabeled embedding end to end: mask, probes, instance score.
pub fn score_sample(
    head: &ClassifierHead,
    z_u: &[f64],
    anchors: &AnchorSet,
    cfg: &FusionConfig,
) -> Result<f64> {
    let p_u = head.predict_proba(z_u)?;
    let mask = build_mask(head, z_u, cfg)?;
    let probes = probe(head, z_u, &p_u, anchors, &mask, cfg)?;
    instance_score(&probes, cfg)
}
