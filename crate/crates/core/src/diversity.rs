//! Uncertainty-weighted k-means over candidate embeddings and the
//! calibration-diversity winner per cluster.
//!
//! Weights enter only through ratios and comparisons, never through
//! absolute thresholds, so rescaling every weight by the same positive
//! constant cannot change the clustering (bit-for-bit under power-of-two
//! scalings, where IEEE multiplication is exact).

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{self, Matrix};
use crate::pools::AnchorSet;
use crate::scoring::ScoreStats;
use crate::seeding;

const MAX_LLOYD_ITERATIONS: usize = 300;

/// Result of weighted Lloyd clustering.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedClustering {
    /// Cluster id per candidate row.
    pub assignments: Vec<usize>,
    /// One centroid per cluster (k x d).
    pub centroids: Matrix,
    pub iterations: usize,
    pub converged: bool,
}

/// Weighted k-means with k-means++ initialization.
///
/// Initial centers are sampled with probability proportional to
/// weight * D^2 (plain weight for the first center). Lloyd iterations
/// assign by squared Euclidean distance and update each centroid as the
/// weighted mean of its members in ascending row order. An empty cluster
/// steals the point with the largest weighted distance contribution.
pub fn weighted_kmeans(
    points: &Matrix,
    weights: &[f64],
    k: usize,
    seed: u64,
) -> Result<WeightedClustering> {
    let n = points.rows();
    if n < k {
        return Err(Error::InvalidInput(format!(
            "insufficient candidates: {n} points for {k} clusters"
        )));
    }
    if k == 0 {
        return Err(Error::InvalidInput("cluster count must be positive".into()));
    }
    if weights.len() != n {
        return Err(Error::InvalidInput(format!(
            "{} weights for {n} points",
            weights.len()
        )));
    }
    if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
        return Err(Error::InvalidInput("weights must be finite and >= 0".into()));
    }
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::InvalidInput("weights must not all be zero".into()));
    }

    let d = points.cols();
    let mut rng = seeding::rng(seed);

    // k-means++ seeding with weight-scaled D^2 sampling.
    let mut center_rows: Vec<usize> = Vec::with_capacity(k);
    center_rows.push(sample_proportional(weights, &mut rng, &center_rows));
    let mut min_d2 = vec![0.0f64; n];
    for i in 0..n {
        min_d2[i] = numerics::squared_distance(points.row(i), points.row(center_rows[0]));
    }
    while center_rows.len() < k {
        let mass: Vec<f64> = (0..n).map(|i| weights[i] * min_d2[i]).collect();
        let next = sample_proportional(&mass, &mut rng, &center_rows);
        center_rows.push(next);
        for i in 0..n {
            let d2 = numerics::squared_distance(points.row(i), points.row(next));
            if d2 < min_d2[i] {
                min_d2[i] = d2;
            }
        }
    }
    let mut centroids = Matrix::zeros(k, d);
    for (c, &row) in center_rows.iter().enumerate() {
        centroids.row_mut(c).copy_from_slice(points.row(row));
    }

    let mut assignments = vec![0usize; n];
    let mut iterations = 0;
    let mut converged = false;
    for iter in 0..MAX_LLOYD_ITERATIONS {
        iterations = iter + 1;

        let new_assignments: Vec<usize> = (0..n)
            .map(|i| nearest_centroid(points.row(i), &centroids))
            .collect();
        let stable = iter > 0 && new_assignments == assignments;
        assignments = new_assignments;
        repair_empty_clusters(points, weights, &centroids, &mut assignments, k);
        update_centroids(points, weights, &assignments, &mut centroids);
        if stable {
            converged = true;
            break;
        }
    }

    Ok(WeightedClustering {
        assignments,
        centroids,
        iterations,
        converged,
    })
}

/// Draw an index with probability proportional to `mass`, skipping rows in
/// `exclude`. Falls back to the lowest non-excluded index when all mass
/// outside `exclude` is zero.
fn sample_proportional(mass: &[f64], rng: &mut impl Rng, exclude: &[usize]) -> usize {
    let total: f64 = mass
        .iter()
        .enumerate()
        .filter(|(i, _)| !exclude.contains(i))
        .map(|(_, &m)| m)
        .sum();
    if total > 0.0 {
        let target = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut last = None;
        for (i, &m) in mass.iter().enumerate() {
            if exclude.contains(&i) || m == 0.0 {
                continue;
            }
            acc += m;
            last = Some(i);
            if acc > target {
                return i;
            }
        }
        if let Some(i) = last {
            return i;
        }
    }
    (0..mass.len())
        .find(|i| !exclude.contains(i))
        .expect("more points than centers")
}

fn nearest_centroid(point: &[f64], centroids: &Matrix) -> usize {
    let mut best = 0;
    let mut best_d2 = numerics::squared_distance(point, centroids.row(0));
    for c in 1..centroids.rows() {
        let d2 = numerics::squared_distance(point, centroids.row(c));
        if d2 < best_d2 {
            best_d2 = d2;
            best = c;
        }
    }
    best
}

fn update_centroids(
    points: &Matrix,
    weights: &[f64],
    assignments: &[usize],
    centroids: &mut Matrix,
) {
    let k = centroids.rows();
    let d = centroids.cols();
    let mut sums = vec![0.0f64; k * d];
    let mut wsums = vec![0.0f64; k];
    let mut counts = vec![0usize; k];
    for (i, &c) in assignments.iter().enumerate() {
        let row = points.row(i);
        for (j, &x) in row.iter().enumerate() {
            sums[c * d + j] += weights[i] * x;
        }
        wsums[c] += weights[i];
        counts[c] += 1;
    }
    for c in 0..k {
        if wsums[c] > 0.0 {
            for j in 0..d {
                centroids.set(c, j, sums[c * d + j] / wsums[c]);
            }
        } else if counts[c] > 0 {
            // All member weights are zero: plain mean keeps the centroid
            // defined without introducing a weight-scale dependency.
            let mut mean = vec![0.0f64; d];
            for (i, &a) in assignments.iter().enumerate() {
                if a == c {
                    for (j, &x) in points.row(i).iter().enumerate() {
                        mean[j] += x;
                    }
                }
            }
            for j in 0..d {
                centroids.set(c, j, mean[j] / counts[c] as f64);
            }
        }
    }
}

/// Give every empty cluster the point with the largest weighted distance
/// contribution taken from a donor cluster with at least two members.
fn repair_empty_clusters(
    points: &Matrix,
    weights: &[f64],
    centroids: &Matrix,
    assignments: &mut [usize],
    k: usize,
) {
    let mut sizes = vec![0usize; k];
    for &c in assignments.iter() {
        sizes[c] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, &c) in assignments.iter().enumerate() {
            if sizes[c] < 2 {
                continue;
            }
            let contribution =
                weights[i] * numerics::squared_distance(points.row(i), centroids.row(c));
            match best {
                Some((_, b)) if contribution <= b => {}
                _ => best = Some((i, contribution)),
            }
        }
        if let Some((steal, _)) = best {
            sizes[assignments[steal]] -= 1;
            assignments[steal] = empty;
            sizes[empty] += 1;
        }
    }
}

/// Diagnostics for one selected sample.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SelectionDiagnostics {
    pub cluster: usize,
    pub objective: f64,
    pub centroid_cos_dist: f64,
    pub min_anchor_cos_dist: f64,
}

/// Final per-cycle selection: indices into the dataset plus diagnostics.
#[derive(Debug, Clone)]
pub struct SelectionResult {
    pub indices: Vec<usize>,
    pub diagnostics: Vec<SelectionDiagnostics>,
    pub score_stats: Option<ScoreStats>,
    /// (dataset index, instance score) for every scored sample; carried by
    /// the uncertainty strategy for score-dump audits.
    pub scores: Option<Vec<(usize, f64)>>,
}

/// Pick one winner per cluster maximizing
/// -xi * (1 - cos(z, centroid)) + (1 - xi) * min_j (1 - cos(z, anchor_j)),
/// the min running over present anchor classes; ties break toward the
/// lower candidate index. Output indices are dataset indices, ascending.
pub fn calibration_select(
    clustering: &WeightedClustering,
    candidate_ids: &[usize],
    points: &Matrix,
    anchors: &AnchorSet,
    xi: f64,
) -> Result<SelectionResult> {
    if !(0.0..=1.0).contains(&xi) {
        return Err(Error::InvalidInput(format!("xi {xi} outside [0, 1]")));
    }
    let present = anchors.present_classes();
    if present.is_empty() {
        return Err(Error::InvalidInput("no present anchor classes".into()));
    }
    if candidate_ids.len() != points.rows() || clustering.assignments.len() != points.rows() {
        return Err(Error::InvalidInput(
            "candidate ids, points and assignments must align".into(),
        ));
    }

    let k = clustering.centroids.rows();
    let mut winners: Vec<Option<(usize, SelectionDiagnostics)>> = vec![None; k];
    for (i, &cluster) in clustering.assignments.iter().enumerate() {
        let z = points.row(i);
        let centroid_cos_dist =
            1.0 - numerics::cosine_similarity(z, clustering.centroids.row(cluster))?;
        let mut min_anchor = f64::INFINITY;
        for &j in &present {
            let dist = 1.0 - numerics::cosine_similarity(z, anchors.embedding(j))?;
            if dist < min_anchor {
                min_anchor = dist;
            }
        }
        let objective = -xi * centroid_cos_dist + (1.0 - xi) * min_anchor;
        let better = match &winners[cluster] {
            None => true,
            Some((_, d)) => objective > d.objective,
        };
        if better {
            winners[cluster] = Some((
                i,
                SelectionDiagnostics {
                    cluster,
                    objective,
                    centroid_cos_dist,
                    min_anchor_cos_dist: min_anchor,
                },
            ));
        }
    }

    let mut chosen: Vec<(usize, SelectionDiagnostics)> = winners
        .into_iter()
        .flatten()
        .map(|(i, diag)| (candidate_ids[i], diag))
        .collect();
    chosen.sort_by_key(|(id, _)| *id);
    let (indices, diagnostics) = chosen.into_iter().unzip();
    Ok(SelectionResult {
        indices,
        diagnostics,
        score_stats: None,
        scores: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{ClassifierHead, HeadArch};
    use crate::numerics::Matrix;
    use crate::pools::{build_anchors, FeatureDataset};

    fn two_blobs() -> Matrix {
        Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![0.2, 0.1],
            vec![0.1, 0.3],
            vec![10.0, 10.0],
            vec![10.2, 9.8],
            vec![9.9, 10.3],
        ])
        .unwrap()
    }

    #[test]
    fn every_point_its_own_cluster_when_k_equals_n() {
        let pts = two_blobs();
        let w = vec![1.0; 6];
        let c = weighted_kmeans(&pts, &w, 6, 1).unwrap();
        let mut seen = c.assignments.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 6);
        for (i, &a) in c.assignments.iter().enumerate() {
            assert_eq!(c.centroids.row(a), pts.row(i));
        }
    }

    #[test]
    fn separates_two_blobs() {
        let pts = two_blobs();
        let w = vec![1.0; 6];
        let c = weighted_kmeans(&pts, &w, 2, 7).unwrap();
        assert!(c.converged);
        assert_eq!(c.assignments[0], c.assignments[1]);
        assert_eq!(c.assignments[0], c.assignments[2]);
        assert_eq!(c.assignments[3], c.assignments[4]);
        assert_eq!(c.assignments[3], c.assignments[5]);
        assert_ne!(c.assignments[0], c.assignments[3]);
    }

    #[test]
    fn upweighted_points_pull_their_centroid() {
        // Blob A at 0, blob B at 10; inside B one point carries 100x the
        // weight of its blob mates, so B's centroid shifts toward it while
        // both blobs stay separated.
        let pts = Matrix::from_rows(&[
            vec![0.0],
            vec![0.4],
            vec![10.0],
            vec![11.0],
        ])
        .unwrap();
        let w = vec![1.0, 1.0, 100.0, 1.0];
        let c = weighted_kmeans(&pts, &w, 2, 3).unwrap();
        assert_eq!(c.assignments[0], c.assignments[1]);
        assert_eq!(c.assignments[2], c.assignments[3]);
        assert_ne!(c.assignments[0], c.assignments[2]);
        let kb = c.assignments[2];
        // weighted mean (100*10 + 11) / 101
        let expected = (100.0 * 10.0 + 11.0) / 101.0;
        assert!((c.centroids.get(kb, 0) - expected).abs() < 1e-9);
        let ka = c.assignments[0];
        assert!((c.centroids.get(ka, 0) - 0.2).abs() < 1e-9);
    }

    #[test]
    fn centroids_are_weighted_member_means() {
        let pts = two_blobs();
        let w = vec![0.5, 2.0, 1.0, 4.0, 0.25, 1.5];
        let c = weighted_kmeans(&pts, &w, 2, 11).unwrap();
        for cluster in 0..2 {
            let mut num = vec![0.0; 2];
            let mut den = 0.0;
            for (i, &a) in c.assignments.iter().enumerate() {
                if a == cluster {
                    for j in 0..2 {
                        num[j] += w[i] * pts.get(i, j);
                    }
                    den += w[i];
                }
            }
            for j in 0..2 {
                assert!((c.centroids.get(cluster, j) - num[j] / den).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn weight_rescaling_is_bit_exact_for_dyadic_factors() {
        let pts = two_blobs();
        let w: Vec<f64> = vec![0.3, 1.7, 0.9, 2.2, 0.4, 1.1];
        let base = weighted_kmeans(&pts, &w, 3, 5).unwrap();
        for factor in [2.0, 0.5, 1024.0] {
            let scaled: Vec<f64> = w.iter().map(|x| x * factor).collect();
            let other = weighted_kmeans(&pts, &scaled, 3, 5).unwrap();
            assert_eq!(base.assignments, other.assignments);
            assert_eq!(base.centroids, other.centroids);
        }
    }

    #[test]
    fn weight_rescaling_keeps_assignments_for_general_factors() {
        let pts = two_blobs();
        let w: Vec<f64> = vec![0.3, 1.7, 0.9, 2.2, 0.4, 1.1];
        let base = weighted_kmeans(&pts, &w, 3, 5).unwrap();
        let scaled: Vec<f64> = w.iter().map(|x| x * 3.7).collect();
        let other = weighted_kmeans(&pts, &scaled, 3, 5).unwrap();
        assert_eq!(base.assignments, other.assignments);
        for i in 0..3 {
            for j in 0..2 {
                let a = base.centroids.get(i, j);
                let b = other.centroids.get(i, j);
                assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0));
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let pts = two_blobs();
        assert!(weighted_kmeans(&pts, &[1.0; 6], 7, 1).is_err());
        assert!(weighted_kmeans(&pts, &[1.0; 5], 2, 1).is_err());
        assert!(weighted_kmeans(&pts, &[0.0; 6], 2, 1).is_err());
        assert!(weighted_kmeans(&pts, &[-1.0, 1.0, 1.0, 1.0, 1.0, 1.0], 2, 1).is_err());
    }

    fn unit_anchors() -> AnchorSet {
        let head = ClassifierHead::zeroed(HeadArch::linear(2, 2));
        let m = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let ds = FeatureDataset::new(m, vec![0, 1], 2).unwrap();
        build_anchors(&head, &ds, &[0, 1]).unwrap()
    }

    #[test]
    fn calibration_xi_one_picks_closest_to_centroid() {
        let pts = Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![1.0, 0.2],
            vec![1.0, 1.0],
        ])
        .unwrap();
        let clustering = WeightedClustering {
            assignments: vec![0, 0, 0],
            centroids: Matrix::from_rows(&[vec![1.0, 0.05]]).unwrap(),
            iterations: 1,
            converged: true,
        };
        let anchors = unit_anchors();
        let res = calibration_select(&clustering, &[10, 20, 30], &pts, &anchors, 1.0).unwrap();
        // member with max cosine to the centroid
        let mut best = 0;
        let mut best_cos = f64::NEG_INFINITY;
        for i in 0..3 {
            let c = numerics::cosine_similarity(pts.row(i), clustering.centroids.row(0)).unwrap();
            if c > best_cos {
                best_cos = c;
                best = i;
            }
        }
        assert_eq!(res.indices, vec![[10, 20, 30][best]]);
    }

    #[test]
    fn calibration_xi_zero_picks_farthest_from_anchors() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let pts = Matrix::from_rows(&[
            vec![1.0, 0.0],  // on anchor 0
            vec![s, s],      // between anchors
            vec![0.0, 1.0],  // on anchor 1
        ])
        .unwrap();
        let clustering = WeightedClustering {
            assignments: vec![0, 0, 0],
            centroids: Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap(),
            iterations: 1,
            converged: true,
        };
        let anchors = unit_anchors();
        let res = calibration_select(&clustering, &[0, 1, 2], &pts, &anchors, 0.0).unwrap();
        // the diagonal point has the largest min-anchor distance
        assert_eq!(res.indices, vec![1]);
    }

    #[test]
    fn calibration_matches_bruteforce_on_three_point_cluster() {
        let pts = Matrix::from_rows(&[
            vec![0.9, 0.1],
            vec![0.5, 0.6],
            vec![0.2, 1.0],
        ])
        .unwrap();
        let clustering = WeightedClustering {
            assignments: vec![0, 0, 0],
            centroids: Matrix::from_rows(&[vec![0.6, 0.5]]).unwrap(),
            iterations: 1,
            converged: true,
        };
        let anchors = unit_anchors();
        let xi = 0.8;
        let res = calibration_select(&clustering, &[0, 1, 2], &pts, &anchors, xi).unwrap();

        // brute-force evaluation of the objective over all members
        let mut best = (0, f64::NEG_INFINITY);
        for i in 0..3 {
            let c = 1.0
                - numerics::cosine_similarity(pts.row(i), clustering.centroids.row(0)).unwrap();
            let a0 = 1.0 - numerics::cosine_similarity(pts.row(i), &[1.0, 0.0]).unwrap();
            let a1 = 1.0 - numerics::cosine_similarity(pts.row(i), &[0.0, 1.0]).unwrap();
            let obj = -xi * c + (1.0 - xi) * a0.min(a1);
            if obj > best.1 {
                best = (i, obj);
            }
        }
        assert_eq!(res.indices, vec![best.0]);
        assert!((res.diagnostics[0].objective - best.1).abs() < 1e-12);
    }

    #[test]
    fn calibration_winner_per_cluster_distinct() {
        let pts = two_blobs();
        let w = vec![1.0; 6];
        let clustering = weighted_kmeans(&pts, &w, 2, 13).unwrap();
        // shift embeddings away from zero so cosine is defined
        let shifted_rows: Vec<Vec<f64>> = (0..6)
            .map(|i| pts.row(i).iter().map(|x| x + 1.0).collect())
            .collect();
        let shifted = Matrix::from_rows(&shifted_rows).unwrap();
        let anchors = unit_anchors();
        let ids = [3, 5, 8, 11, 15, 21];
        let res = calibration_select(&clustering, &ids, &shifted, &anchors, 0.8).unwrap();
        assert_eq!(res.indices.len(), 2);
        assert_ne!(res.indices[0], res.indices[1]);
        assert!(res.indices.iter().all(|i| ids.contains(i)));
        let clusters: Vec<usize> = res.diagnostics.iter().map(|d| d.cluster).collect();
        assert_ne!(clusters[0], clusters[1]);
    }

    #[test]
    fn calibration_invariant_to_candidate_rescaling() {
        let pts = Matrix::from_rows(&[
            vec![0.9, 0.1],
            vec![0.5, 0.6],
            vec![0.2, 1.0],
        ])
        .unwrap();
        let scaled_rows: Vec<Vec<f64>> = (0..3)
            .map(|i| pts.row(i).iter().map(|x| x * 37.5).collect())
            .collect();
        let scaled = Matrix::from_rows(&scaled_rows).unwrap();
        let clustering = WeightedClustering {
            assignments: vec![0, 0, 0],
            centroids: Matrix::from_rows(&[vec![0.6, 0.5]]).unwrap(),
            iterations: 1,
            converged: true,
        };
        let anchors = unit_anchors();
        let a = calibration_select(&clustering, &[0, 1, 2], &pts, &anchors, 0.8).unwrap();
        let b = calibration_select(&clustering, &[0, 1, 2], &scaled, &anchors, 0.8).unwrap();
        assert_eq!(a.indices, b.indices);
    }

    #[test]
    fn calibration_validates_inputs() {
        let pts = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let clustering = WeightedClustering {
            assignments: vec![0],
            centroids: Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap(),
            iterations: 1,
            converged: true,
        };
        let anchors = unit_anchors();
        assert!(calibration_select(&clustering, &[0], &pts, &anchors, 1.5).is_err());
        assert!(calibration_select(&clustering, &[0, 1], &pts, &anchors, 0.5).is_err());
    }
}
