//! Gradient aggregation rules (GARs).
//!
//! Each rule is a pure function from the `n` submitted reports (and the
//! tolerated Byzantine count `f`) to one aggregate. Every tie is resolved in
//! favour of the lowest node index, and every reduction over nodes sums in
//! ascending index order.
//!
//! `geomedian_cosine` composes a cosine-similarity filter with a geometric
//! median over the survivors. That composition is this crate's reading of a
//! rule that is only described informally in the literature.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vecmath::{
    self, common_dim, cosine_similarity, dist_slices, GradientVector, VecMathError, GEOMEDIAN_MAX_ITER, GEOMEDIAN_TOL,
};

/// Default cluster count for hierarchical-clustering Krum.
pub const DEFAULT_HC_CLUSTERS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GarError {
    #[error("trimmed mean requires n > 2f (n = {n}, f = {f})")]
    InfeasibleTrim { n: usize, f: usize },
    #[error("krum requires n - f - 2 >= 1 (n = {n}, f = {f})")]
    InfeasibleKrum { n: usize, f: usize },
    #[error("{rule} requires n > f (n = {n}, f = {f})")]
    TooFewSurvivors { rule: &'static str, n: usize, f: usize },
    #[error("hierarchical-clustering krum requires n >= k >= 3 (n = {n}, k = {k})")]
    InfeasibleClusters { n: usize, k: usize },
    #[error("weights must be non-negative with a positive sum")]
    DegenerateWeights,
    #[error("expected {expected} weights, got {got}")]
    WeightCount { expected: usize, got: usize },
    #[error(transparent)]
    Vector(#[from] VecMathError),
}

/// Aggregation rule selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum GarRule {
    WeightedMean,
    TrimmedMean,
    Median,
    Krum,
    Faba,
    GeoMedianCosine,
    HcKrum {
        #[serde(default = "default_clusters")]
        clusters: usize,
    },
}

fn default_clusters() -> usize {
    DEFAULT_HC_CLUSTERS
}

impl GarRule {
    /// Short stable name, as accepted by [`GarRule::from_name`].
    pub fn name(&self) -> &'static str {
        match self {
            GarRule::WeightedMean => "mean",
            GarRule::TrimmedMean => "trimmed_mean",
            GarRule::Median => "median",
            GarRule::Krum => "krum",
            GarRule::Faba => "faba",
            GarRule::GeoMedianCosine => "geomedian_cosine",
            GarRule::HcKrum { .. } => "hc_krum",
        }
    }

    pub fn from_name(name: &str) -> Option<GarRule> {
        Some(match name {
            "mean" | "weighted_mean" => GarRule::WeightedMean,
            "trimmed_mean" => GarRule::TrimmedMean,
            "median" => GarRule::Median,
            "krum" => GarRule::Krum,
            "faba" => GarRule::Faba,
            "geomedian_cosine" | "geomed" => GarRule::GeoMedianCosine,
            "hc_krum" => GarRule::HcKrum { clusters: DEFAULT_HC_CLUSTERS },
            _ => return None,
        })
    }
}

/// A rule together with the tolerated Byzantine count `f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GarSpec {
    #[serde(flatten)]
    pub rule: GarRule,
    pub f: usize,
}

impl GarSpec {
    pub fn new(rule: GarRule, f: usize) -> Self {
        GarSpec { rule, f }
    }

    /// Checks the rule's precondition for `n` reports without aggregating.
    pub fn check_feasible(&self, n: usize) -> Result<(), GarError> {
        let f = self.f;
        match self.rule {
            GarRule::WeightedMean | GarRule::Median => {
                if n == 0 {
                    return Err(VecMathError::EmptySet.into());
                }
            }
            GarRule::TrimmedMean => {
                if n <= 2 * f {
                    return Err(GarError::InfeasibleTrim { n, f });
                }
            }
            GarRule::Krum => {
                if n < f + 3 {
                    return Err(GarError::InfeasibleKrum { n, f });
                }
            }
            GarRule::Faba => {
                if n <= f {
                    return Err(GarError::TooFewSurvivors { rule: "faba", n, f });
                }
            }
            GarRule::GeoMedianCosine => {
                if n <= f {
                    return Err(GarError::TooFewSurvivors { rule: "geomedian_cosine", n, f });
                }
            }
            GarRule::HcKrum { clusters } => {
                if clusters < 3 || n < clusters {
                    return Err(GarError::InfeasibleClusters { n, k: clusters });
                }
            }
        }
        Ok(())
    }

    pub fn aggregate(&self, reports: &[GradientVector]) -> Result<AggregationOutcome, GarError> {
        match self.rule {
            GarRule::WeightedMean => weighted_mean(reports, &vec![1.0; reports.len()]),
            GarRule::TrimmedMean => trimmed_mean(reports, self.f),
            GarRule::Median => median_aggregate(reports),
            GarRule::Krum => krum(reports, self.f),
            GarRule::Faba => faba(reports, self.f),
            GarRule::GeoMedianCosine => geomedian_cosine(reports, self.f),
            GarRule::HcKrum { clusters } => hc_krum(reports, self.f, clusters),
        }
    }
}

/// The aggregate plus the node indices that contributed to it.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationOutcome {
    pub aggregate: GradientVector,
    pub selected_indices: Vec<usize>,
}

fn all_indices(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Mean of `reports[i]` for `i` in `indices` (ascending), summed in order.
fn mean_of(reports: &[GradientVector], indices: &[usize]) -> Result<GradientVector, VecMathError> {
    let dim = reports[indices[0]].len();
    let mut acc = vec![0.0; dim];
    for &i in indices {
        for (a, x) in acc.iter_mut().zip(reports[i].as_slice()) {
            *a += x;
        }
    }
    let count = indices.len() as f64;
    acc.iter_mut().for_each(|a| *a /= count);
    GradientVector::new(acc)
}

pub fn weighted_mean(reports: &[GradientVector], weights: &[f64]) -> Result<AggregationOutcome, GarError> {
    let dim = common_dim(reports)?;
    if weights.len() != reports.len() {
        return Err(GarError::WeightCount { expected: reports.len(), got: weights.len() });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(GarError::DegenerateWeights);
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(GarError::DegenerateWeights);
    }
    let mut acc = vec![0.0; dim];
    for (v, &w) in reports.iter().zip(weights) {
        for (a, x) in acc.iter_mut().zip(v.as_slice()) {
            *a += w * x;
        }
    }
    acc.iter_mut().for_each(|a| *a /= total);
    Ok(AggregationOutcome { aggregate: GradientVector::new(acc)?, selected_indices: all_indices(reports.len()) })
}

/// Coordinate-wise trimmed mean: per coordinate, drop the `f` smallest and
/// `f` largest values (ranked by value, then node index) and average the
/// rest in node order.
pub fn trimmed_mean(reports: &[GradientVector], f: usize) -> Result<AggregationOutcome, GarError> {
    let dim = common_dim(reports)?;
    let n = reports.len();
    if n <= 2 * f {
        return Err(GarError::InfeasibleTrim { n, f });
    }
    let keep = n - 2 * f;
    let mut order: Vec<usize> = Vec::with_capacity(n);
    let mut survivors: Vec<usize> = Vec::with_capacity(keep);
    let mut out = Vec::with_capacity(dim);
    for k in 0..dim {
        order.clear();
        order.extend(0..n);
        order.sort_by(|&a, &b| reports[a][k].total_cmp(&reports[b][k]).then(a.cmp(&b)));
        survivors.clear();
        survivors.extend_from_slice(&order[f..n - f]);
        survivors.sort_unstable();
        let sum = survivors.iter().fold(0.0, |acc, &i| acc + reports[i][k]);
        out.push(sum / keep as f64);
    }
    Ok(AggregationOutcome { aggregate: GradientVector::new(out)?, selected_indices: all_indices(n) })
}

pub fn median_aggregate(reports: &[GradientVector]) -> Result<AggregationOutcome, GarError> {
    Ok(AggregationOutcome {
        aggregate: vecmath::coordinate_median(reports)?,
        selected_indices: all_indices(reports.len()),
    })
}

/// Pairwise distance matrix, row-major `n x n`.
fn distance_matrix(points: &[&[f64]]) -> Vec<f64> {
    let n = points.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = dist_slices(points[i], points[j]);
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Krum scores: for each point, the sum of its `neighbors` smallest
/// distances to other points, summed in ascending order.
fn krum_scores(dist: &[f64], n: usize, neighbors: usize) -> Vec<f64> {
    let mut row = Vec::with_capacity(n);
    (0..n)
        .map(|i| {
            row.clear();
            row.extend((0..n).filter(|&j| j != i).map(|j| dist[i * n + j]));
            row.sort_by(f64::total_cmp);
            row[..neighbors].iter().fold(0.0, |acc, d| acc + d)
        })
        .collect()
}

fn argmin_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

fn krum_select(points: &[&[f64]], f: usize) -> usize {
    let n = points.len();
    let dist = distance_matrix(points);
    argmin_lowest(&krum_scores(&dist, n, n - f - 2))
}

pub fn krum(reports: &[GradientVector], f: usize) -> Result<AggregationOutcome, GarError> {
    common_dim(reports)?;
    let n = reports.len();
    if n < f + 3 {
        return Err(GarError::InfeasibleKrum { n, f });
    }
    let points: Vec<&[f64]> = reports.iter().map(GradientVector::as_slice).collect();
    let winner = krum_select(&points, f);
    Ok(AggregationOutcome { aggregate: reports[winner].clone(), selected_indices: vec![winner] })
}

/// Removes, `f` times, the survivor farthest from the current survivor
/// mean (recomputed after every removal), then averages the rest.
pub fn faba(reports: &[GradientVector], f: usize) -> Result<AggregationOutcome, GarError> {
    common_dim(reports)?;
    let n = reports.len();
    if n <= f {
        return Err(GarError::TooFewSurvivors { rule: "faba", n, f });
    }
    let mut survivors = all_indices(n);
    for _ in 0..f {
        let center = mean_of(reports, &survivors)?;
        let mut worst = 0;
        let mut worst_dist = f64::NEG_INFINITY;
        for (pos, &i) in survivors.iter().enumerate() {
            let d = dist_slices(center.as_slice(), reports[i].as_slice());
            if d > worst_dist {
                worst = pos;
                worst_dist = d;
            }
        }
        survivors.remove(worst);
    }
    Ok(AggregationOutcome { aggregate: mean_of(reports, &survivors)?, selected_indices: survivors })
}

/// Drops the `f` reports least aligned (by summed cosine similarity) with
/// the others, then takes the geometric median of the survivors.
///
/// The filter-then-median composition is an interpretation; other ways of
/// combining cosine scores with the geometric median are equally plausible.
pub fn geomedian_cosine(reports: &[GradientVector], f: usize) -> Result<AggregationOutcome, GarError> {
    common_dim(reports)?;
    let n = reports.len();
    if n <= f {
        return Err(GarError::TooFewSurvivors { rule: "geomedian_cosine", n, f });
    }
    if reports.iter().any(|r| r.norm() == 0.0) {
        return Err(VecMathError::DegenerateVector.into());
    }
    let mut scores = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                scores[i] += cosine_similarity(&reports[i], &reports[j])?;
            }
        }
    }
    let mut ranked = all_indices(n);
    ranked.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut survivors = ranked[f..].to_vec();
    survivors.sort_unstable();
    let kept: Vec<GradientVector> = survivors.iter().map(|&i| reports[i].clone()).collect();
    let gm = vecmath::geometric_median(&kept, GEOMEDIAN_TOL, GEOMEDIAN_MAX_ITER)?;
    Ok(AggregationOutcome { aggregate: gm.point, selected_indices: survivors })
}

/// Agglomerative clustering with average linkage under Euclidean distance,
/// merged until `k` clusters remain. Clusters are returned ordered by their
/// smallest member, each with ascending members.
///
/// At every step the pair with the smallest average inter-cluster distance
/// merges; ties go to the lexicographically smallest pair of cluster
/// positions.
pub fn average_linkage_clusters(points: &[&[f64]], k: usize) -> Vec<Vec<usize>> {
    let n = points.len();
    let dist = distance_matrix(points);
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    // link[a][b]: sum of member-to-member distances between clusters a and b
    let mut link: Vec<Vec<f64>> = (0..n).map(|i| dist[i * n..(i + 1) * n].to_vec()).collect();

    while clusters.len() > k {
        let m = clusters.len();
        let mut best = (0, 1);
        let mut best_avg = f64::INFINITY;
        for a in 0..m {
            for b in (a + 1)..m {
                let avg = link[a][b] / (clusters[a].len() * clusters[b].len()) as f64;
                if avg < best_avg {
                    best_avg = avg;
                    best = (a, b);
                }
            }
        }
        let (a, b) = best;
        for c in 0..m {
            if c != a && c != b {
                let merged = link[a][c] + link[b][c];
                link[a][c] = merged;
                link[c][a] = merged;
            }
        }
        link.remove(b);
        link.iter_mut().for_each(|row| {
            row.remove(b);
        });
        let absorbed = clusters.remove(b);
        clusters[a].extend(absorbed);
        clusters[a].sort_unstable();
    }
    clusters
}

/// Hierarchical-clustering Krum: cluster the reports into `k` groups,
/// average each group, and run Krum over the `k` representatives with
/// `f' = min(f, k - 3)`. The winning cluster's members are reported as
/// selected.
pub fn hc_krum(reports: &[GradientVector], f: usize, k: usize) -> Result<AggregationOutcome, GarError> {
    common_dim(reports)?;
    let n = reports.len();
    if k < 3 || n < k {
        return Err(GarError::InfeasibleClusters { n, k });
    }
    let points: Vec<&[f64]> = reports.iter().map(GradientVector::as_slice).collect();
    let clusters = average_linkage_clusters(&points, k);
    let reps = clusters.iter().map(|members| mean_of(reports, members)).collect::<Result<Vec<_>, _>>()?;
    let rep_points: Vec<&[f64]> = reps.iter().map(GradientVector::as_slice).collect();
    let winner = krum_select(&rep_points, f.min(k - 3));
    Ok(AggregationOutcome { aggregate: reps[winner].clone(), selected_indices: clusters[winner].clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gv(values: &[f64]) -> GradientVector {
        GradientVector::from_slice(values).unwrap()
    }

    fn scalars(values: &[f64]) -> Vec<GradientVector> {
        values.iter().map(|v| gv(&[*v])).collect()
    }

    #[test]
    fn weighted_mean_examples() {
        let r = scalars(&[1.0, 3.0]);
        assert_eq!(weighted_mean(&r, &[1.0, 1.0]).unwrap().aggregate, gv(&[2.0]));
        assert_eq!(weighted_mean(&r, &[3.0, 1.0]).unwrap().aggregate, gv(&[1.5]));
        let single = [gv(&[0.3, -7.0])];
        let out = weighted_mean(&single, &[2.0]).unwrap();
        assert_eq!(out.aggregate, single[0]);
        assert_eq!(out.selected_indices, vec![0]);
        assert_eq!(weighted_mean(&r, &[0.0, 0.0]), Err(GarError::DegenerateWeights));
        assert_eq!(weighted_mean(&r, &[-1.0, 2.0]), Err(GarError::DegenerateWeights));
    }

    #[test]
    fn trimmed_mean_examples() {
        let r = scalars(&[5.0, 1.0, 3.0, 2.0, 100.0]);
        let out = trimmed_mean(&r, 1).unwrap();
        assert_eq!(out.aggregate, gv(&[(2.0 + 3.0 + 5.0) / 3.0]));
        assert_eq!(out.selected_indices, vec![0, 1, 2, 3, 4]);
        assert_eq!(trimmed_mean(&r, 0).unwrap().aggregate, gv(&[111.0 / 5.0]));
        let same = vec![gv(&[0.7, 0.1]); 5];
        assert_eq!(trimmed_mean(&same, 2).unwrap().aggregate, gv(&[0.7, 0.1]));
        assert_eq!(trimmed_mean(&scalars(&[1.0, 2.0, 3.0, 4.0]), 2), Err(GarError::InfeasibleTrim { n: 4, f: 2 }));
    }

    #[test]
    fn median_examples() {
        assert_eq!(median_aggregate(&scalars(&[3.0, 1.0, 2.0])).unwrap().aggregate, gv(&[2.0]));
        assert_eq!(median_aggregate(&scalars(&[4.0, 1.0, 3.0, 2.0])).unwrap().aggregate, gv(&[2.5]));
        let same = vec![gv(&[1.25, -4.0]); 4];
        assert_eq!(median_aggregate(&same).unwrap().aggregate, same[0]);
        assert!(median_aggregate(&[]).is_err());
    }

    #[test]
    fn krum_examples() {
        let r = scalars(&[0.0, 0.1, 0.2, 10.0]);
        let out = krum(&r, 0).unwrap();
        assert_eq!(out.selected_indices, vec![1]);
        assert_eq!(out.aggregate, gv(&[0.1]));

        let same = vec![gv(&[2.0, 2.0]); 5];
        assert_eq!(krum(&same, 1).unwrap().selected_indices, vec![0]);

        // S = {1, 1, 4}
        assert_eq!(krum(&scalars(&[0.0, 1.0, 5.0]), 0).unwrap().selected_indices, vec![0]);
        assert_eq!(krum(&scalars(&[0.0, 1.0, 5.0]), 1), Err(GarError::InfeasibleKrum { n: 3, f: 1 }));
    }

    #[test]
    fn faba_examples() {
        let r = scalars(&[0.0, 0.1, 0.2, 10.0]);
        let out = faba(&r, 1).unwrap();
        assert_eq!(out.selected_indices, vec![0, 1, 2]);
        assert!((out.aggregate[0] - 0.1).abs() < 1e-15);
        let plain = weighted_mean(&r, &[1.0; 4]).unwrap();
        assert_eq!(faba(&r, 0).unwrap(), plain);
        let same = vec![gv(&[3.5]); 4];
        assert_eq!(faba(&same, 3).unwrap().aggregate, gv(&[3.5]));
        assert!(faba(&r, 4).is_err());
    }

    #[test]
    fn faba_ties_remove_lowest_index() {
        // mean 0: both extremes equally far, index 0 removed first
        let r = scalars(&[-1.0, 1.0, 0.0]);
        assert_eq!(faba(&r, 1).unwrap().selected_indices, vec![1, 2]);
    }

    #[test]
    fn geomedian_cosine_examples() {
        let r = [gv(&[1.0, 0.0]), gv(&[1.0, 0.01]), gv(&[-1.0, 0.0])];
        let out = geomedian_cosine(&r, 1).unwrap();
        assert_eq!(out.selected_indices, vec![0, 1]);
        // any point on the segment is optimal; objective equals the segment length
        let seg = 0.01;
        let obj = vecmath::sum_of_distances(out.aggregate.as_slice(), &r[..2]);
        assert!((obj - seg).abs() < 1e-12);
        assert!((out.aggregate[0] - 1.0).abs() < 1e-12);

        let same = vec![gv(&[0.5, 0.5]); 3];
        assert_eq!(geomedian_cosine(&same, 0).unwrap().aggregate, same[0]);

        let pos = scalars(&[1.0, 2.0, 9.0]);
        assert!((geomedian_cosine(&pos, 0).unwrap().aggregate[0] - 2.0).abs() < 1e-8);

        let zero = [gv(&[0.0, 0.0]), gv(&[1.0, 0.0])];
        assert!(matches!(geomedian_cosine(&zero, 0), Err(GarError::Vector(VecMathError::DegenerateVector))));
    }

    #[test]
    fn hc_krum_with_singleton_clusters_is_krum() {
        let r = vec![gv(&[0.0, 1.0]), gv(&[0.3, 0.9]), gv(&[5.0, 5.0]), gv(&[0.1, 1.2]), gv(&[-4.0, 2.0])];
        for f in 0..=3 {
            let hc = hc_krum(&r, f, 5).unwrap();
            let plain = krum(&r, f.min(2)).unwrap();
            assert_eq!(hc, plain);
        }
    }

    #[test]
    fn hc_krum_guards() {
        let r = scalars(&[0.0, 0.1, 0.2, 10.0, 10.1]);
        assert_eq!(hc_krum(&r, 0, 2), Err(GarError::InfeasibleClusters { n: 5, k: 2 }));
        assert_eq!(hc_krum(&r, 0, 6), Err(GarError::InfeasibleClusters { n: 5, k: 6 }));
    }

    #[test]
    fn hc_krum_three_groups() {
        let r = scalars(&[0.0, 0.1, 0.2, 10.0, 10.1, 20.0]);
        let points: Vec<&[f64]> = r.iter().map(|v| v.as_slice()).collect();
        let clusters = average_linkage_clusters(&points, 3);
        assert_eq!(clusters, vec![vec![0, 1, 2], vec![3, 4], vec![5]]);

        // brute-force Krum (1 neighbour) over the three representatives
        let reps: Vec<f64> =
            clusters.iter().map(|c| c.iter().map(|&i| r[i][0]).sum::<f64>() / c.len() as f64).collect();
        let score =
            |i: usize| (0..3).filter(|&j| j != i).map(|j| (reps[i] - reps[j]).abs()).fold(f64::INFINITY, f64::min);
        let mut expected = 0;
        for i in 1..3 {
            if score(i) < score(expected) {
                expected = i;
            }
        }
        let out = hc_krum(&r, 0, 3).unwrap();
        assert_eq!(out.selected_indices, clusters[expected]);
        assert_eq!(out.aggregate, gv(&[reps[expected]]));
    }

    #[test]
    fn average_linkage_uses_mean_distance() {
        // single linkage would chain 0-1-2; average linkage joins {3,4} first
        let r = scalars(&[0.0, 1.0, 2.0, 10.0, 10.5]);
        let points: Vec<&[f64]> = r.iter().map(|v| v.as_slice()).collect();
        assert_eq!(average_linkage_clusters(&points, 4), vec![vec![0], vec![1], vec![2], vec![3, 4]]);
        assert_eq!(average_linkage_clusters(&points, 2), vec![vec![0, 1, 2], vec![3, 4]]);
    }

    #[test]
    fn feasibility_matches_aggregate_errors() {
        let r = scalars(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        for rule in [
            GarRule::WeightedMean,
            GarRule::TrimmedMean,
            GarRule::Median,
            GarRule::Krum,
            GarRule::Faba,
            GarRule::GeoMedianCosine,
            GarRule::HcKrum { clusters: 5 },
        ] {
            for f in 0..8 {
                let spec = GarSpec::new(rule, f);
                assert_eq!(spec.check_feasible(r.len()).is_ok(), spec.aggregate(&r).is_ok(), "{rule:?} f={f}");
            }
        }
    }

    #[test]
    fn rule_names_round_trip() {
        for rule in [
            GarRule::WeightedMean,
            GarRule::TrimmedMean,
            GarRule::Median,
            GarRule::Krum,
            GarRule::Faba,
            GarRule::GeoMedianCosine,
            GarRule::HcKrum { clusters: 5 },
        ] {
            assert_eq!(GarRule::from_name(rule.name()), Some(rule));
        }
        assert_eq!(GarRule::from_name("bulyan"), None);
    }
}
