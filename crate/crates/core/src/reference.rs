//! Brute-force reference aggregators.
//!
//! These are deliberately naive, written without sharing code paths with
//! [`crate::gar`]: ranks come from pairwise counting, Krum neighbour sets
//! from exhaustive subset enumeration. They follow the same tie-break and
//! summation-order conventions, so agreement is expected bit for bit.

use rand::Rng;

use crate::gar;
use crate::rng::rng_for;
use crate::vecmath::GradientVector;

type Rows = Vec<Vec<f64>>;

fn rows(reports: &[GradientVector]) -> Rows {
    reports.iter().map(|r| r.as_slice().to_vec()).collect()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        s += (a[k] - b[k]) * (a[k] - b[k]);
    }
    s.sqrt()
}

/// Rank of node `i` in coordinate `k` under (value, index) ordering.
fn rank(v: &Rows, i: usize, k: usize) -> usize {
    (0..v.len()).filter(|&j| v[j][k] < v[i][k] || (v[j][k] == v[i][k] && j < i)).count()
}

pub fn trimmed_mean(reports: &[GradientVector], f: usize) -> Vec<f64> {
    let v = rows(reports);
    let n = v.len();
    (0..v[0].len())
        .map(|k| {
            let mut sum = 0.0;
            for i in 0..n {
                let r = rank(&v, i, k);
                if r >= f && r < n - f {
                    sum += v[i][k];
                }
            }
            sum / (n - 2 * f) as f64
        })
        .collect()
}

pub fn median(reports: &[GradientVector]) -> Vec<f64> {
    let v = rows(reports);
    let n = v.len();
    (0..v[0].len())
        .map(|k| {
            let at = |target: usize| (0..n).find(|&i| rank(&v, i, k) == target).map(|i| v[i][k]).unwrap();
            if n % 2 == 1 {
                at(n / 2)
            } else {
                (at(n / 2 - 1) + at(n / 2)) / 2.0
            }
        })
        .collect()
}

/// Sum of the given distances in ascending order (selection by repeated minimum).
fn ascending_sum(mut values: Vec<f64>) -> f64 {
    let mut sum = 0.0;
    while !values.is_empty() {
        let mut m = 0;
        for j in 1..values.len() {
            if values[j] < values[m] {
                m = j;
            }
        }
        sum += values.swap_remove(m);
    }
    sum
}

/// All `size`-subsets of `items`.
fn subsets(items: &[usize], size: usize) -> Vec<Vec<usize>> {
    if size == 0 {
        return vec![vec![]];
    }
    if items.len() < size {
        return vec![];
    }
    let mut with: Vec<Vec<usize>> = subsets(&items[1..], size - 1)
        .into_iter()
        .map(|mut s| {
            s.insert(0, items[0]);
            s
        })
        .collect();
    with.extend(subsets(&items[1..], size));
    with
}

/// Krum scores by minimizing the neighbour-set distance sum over every
/// subset of `n - f - 2` other reports.
pub fn krum_scores(reports: &[GradientVector], f: usize) -> Vec<f64> {
    let v = rows(reports);
    let n = v.len();
    (0..n)
        .map(|i| {
            let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            subsets(&others, n - f - 2)
                .into_iter()
                .map(|s| ascending_sum(s.iter().map(|&j| distance(&v[i], &v[j])).collect()))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Krum winner index.
pub fn krum(reports: &[GradientVector], f: usize) -> usize {
    let scores = krum_scores(reports, f);
    let best = scores.iter().copied().fold(f64::INFINITY, f64::min);
    scores.iter().position(|&s| s == best).unwrap()
}

/// FABA survivors and aggregate.
pub fn faba(reports: &[GradientVector], f: usize) -> (Vec<usize>, Vec<f64>) {
    let v = rows(reports);
    let d = v[0].len();
    let mean = |alive: &[bool]| -> Vec<f64> {
        let count = alive.iter().filter(|a| **a).count() as f64;
        (0..d)
            .map(|k| {
                let mut s = 0.0;
                for i in 0..v.len() {
                    if alive[i] {
                        s += v[i][k];
                    }
                }
                s / count
            })
            .collect()
    };
    let mut alive = vec![true; v.len()];
    for _ in 0..f {
        let c = mean(&alive);
        let dist: Vec<Option<f64>> = (0..v.len()).map(|i| alive[i].then(|| distance(&v[i], &c))).collect();
        let worst = dist.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        let victim = dist.iter().position(|x| *x == Some(worst)).unwrap();
        alive[victim] = false;
    }
    let survivors = (0..v.len()).filter(|&i| alive[i]).collect();
    (survivors, mean(&alive))
}

/// Random oracle instance: `n` in `[4, 10]`, `d` in `[1, 8]`. Every other
/// instance draws coordinates from a small integer grid so ties occur.
pub fn random_instance(seed: u64, index: u64) -> Vec<GradientVector> {
    let mut rng = rng_for(&[seed, index, 0x0AC1E]);
    let n = rng.random_range(4..=10);
    let d = rng.random_range(1..=8);
    let tied = index % 2 == 1;
    (0..n)
        .map(|_| {
            let v =
                (0..d)
                    .map(|_| {
                        if tied {
                            f64::from(rng.random_range(-3i32..=3)) * 0.5
                        } else {
                            rng.random_range(-10.0..10.0)
                        }
                    })
                    .collect();
            GradientVector::new(v).unwrap()
        })
        .collect()
}

/// Per-rule mismatch counts from one oracle sweep.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OracleReport {
    pub instances: usize,
    pub krum_mismatches: usize,
    pub trimmed_mean_mismatches: usize,
    pub median_mismatches: usize,
    pub faba_mismatches: usize,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.krum_mismatches + self.trimmed_mean_mismatches + self.median_mismatches + self.faba_mismatches == 0
    }
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Compares the production GARs with the references on `instances` random
/// inputs, using every feasible `f` for each rule.
pub fn run_oracle_suite(instances: usize, seed: u64) -> OracleReport {
    let mut report = OracleReport { instances, ..Default::default() };
    for idx in 0..instances as u64 {
        let inst = random_instance(seed, idx);
        let n = inst.len();

        for f in 0..=n - 3 {
            let got = gar::krum(&inst, f).unwrap();
            let want = krum(&inst, f);
            if got.selected_indices != [want] || !same_bits(got.aggregate.as_slice(), inst[want].as_slice()) {
                report.krum_mismatches += 1;
            }
        }
        for f in 0..n.div_ceil(2) {
            let got = gar::trimmed_mean(&inst, f).unwrap();
            if !same_bits(got.aggregate.as_slice(), &trimmed_mean(&inst, f)) {
                report.trimmed_mean_mismatches += 1;
            }
        }
        let got = gar::median_aggregate(&inst).unwrap();
        if !same_bits(got.aggregate.as_slice(), &median(&inst)) {
            report.median_mismatches += 1;
        }
        for f in 0..n {
            let got = gar::faba(&inst, f).unwrap();
            let (survivors, agg) = faba(&inst, f);
            if got.selected_indices != survivors || !same_bits(got.aggregate.as_slice(), &agg) {
                report.faba_mismatches += 1;
            }
        }
    }
    report
}
