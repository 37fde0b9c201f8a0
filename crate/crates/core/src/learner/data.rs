use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::LearnerError;
use crate::rng::{rng_for, TAG_PARTITION};

/// Noise standard deviation of synthetic class blobs.
pub const DEFAULT_SPREAD: f64 = 0.25;
pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

/// Radius of the sphere synthetic class means are drawn on.
const MEAN_RADIUS: f64 = 2.0;

/// Row-major feature matrix with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    input_dim: usize,
    num_classes: usize,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        input_dim: usize,
        num_classes: usize,
    ) -> Result<Self, LearnerError> {
        if input_dim == 0 {
            return Err(LearnerError::InvalidDataset("input_dim must be >= 1".into()));
        }
        if num_classes < 2 {
            return Err(LearnerError::InvalidDataset("need at least 2 classes".into()));
        }
        if features.len() != labels.len() * input_dim {
            return Err(LearnerError::Shape {
                what: "feature matrix",
                expected: labels.len() * input_dim,
                got: features.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(LearnerError::InvalidDataset(format!("label {bad} outside [0, {num_classes})")));
        }
        Ok(Dataset { features, labels, input_dim, num_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.input_dim..(i + 1) * self.input_dim]
    }

    /// Copies the given rows, in the given order, into a new dataset.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(rows.len() * self.input_dim);
        for &r in rows {
            features.extend_from_slice(self.row(r));
        }
        Dataset {
            features,
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            input_dim: self.input_dim,
            num_classes: self.num_classes,
        }
    }

    /// Stacks datasets with identical shapes.
    pub fn concat(parts: &[&Dataset]) -> Result<Dataset, LearnerError> {
        let first = parts.first().ok_or_else(|| LearnerError::InvalidDataset("nothing to concatenate".into()))?;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for p in parts {
            if p.input_dim != first.input_dim || p.num_classes != first.num_classes {
                return Err(LearnerError::Shape {
                    what: "concatenated dataset input_dim",
                    expected: first.input_dim,
                    got: p.input_dim,
                });
            }
            features.extend_from_slice(&p.features);
            labels.extend_from_slice(&p.labels);
        }
        Dataset::new(features, labels, first.input_dim, first.num_classes)
    }
}

/// Parameters for Gaussian class blobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub per_class: usize,
    pub input_dim: usize,
    /// Per-coordinate noise standard deviation around each class mean.
    pub spread: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Class means lie on a sphere of radius 2 and are redrawn (up to a
    /// fixed budget) until every pair is at least 2 apart. Rows are
    /// interleaved by class.
    pub fn generate(&self) -> Result<Dataset, LearnerError> {
        if self.num_classes < 2 || self.per_class == 0 || self.input_dim == 0 {
            return Err(LearnerError::InvalidDataset(
                "synthetic data needs >= 2 classes and >= 1 example and input dimension".into(),
            ));
        }
        if !(self.spread.is_finite() && self.spread >= 0.0) {
            return Err(LearnerError::InvalidDataset(format!("invalid spread {}", self.spread)));
        }
        let mut rng = rng_for(&[self.seed, crate::rng::TAG_DATASET]);
        let means = self.draw_means(&mut rng);
        let noise = Normal::new(0.0, self.spread).expect("spread validated");
        let d = self.input_dim;
        let total = self.num_classes * self.per_class;
        let mut features = Vec::with_capacity(total * d);
        let mut labels = Vec::with_capacity(total);
        for _ in 0..self.per_class {
            for (class, mean) in means.iter().enumerate() {
                features.extend(mean.iter().map(|m| m + noise.sample(&mut rng)));
                labels.push(class);
            }
        }
        Dataset::new(features, labels, d, self.num_classes)
    }

    fn draw_means<R: Rng>(&self, rng: &mut R) -> Vec<Vec<f64>> {
        let draw = |rng: &mut R| -> Vec<Vec<f64>> {
            (0..self.num_classes)
                .map(|_| {
                    let v: Vec<f64> = (0..self.input_dim).map(|_| StandardNormal.sample(rng)).collect();
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                    v.iter().map(|x| x * MEAN_RADIUS / norm).collect()
                })
                .collect()
        };
        let min_gap = |means: &[Vec<f64>]| {
            let mut gap = f64::INFINITY;
            for i in 0..means.len() {
                for j in (i + 1)..means.len() {
                    gap = gap.min(crate::vecmath::dist_slices(&means[i], &means[j]));
                }
            }
            gap
        };
        let mut best = draw(rng);
        let mut best_gap = min_gap(&best);
        for _ in 0..1000 {
            if best_gap >= MEAN_RADIUS {
                break;
            }
            let candidate = draw(rng);
            let gap = min_gap(&candidate);
            if gap > best_gap {
                best = candidate;
                best_gap = gap;
            }
        }
        best
    }
}

/// Gaussian class blobs with the default spread.
pub fn make_synthetic(
    num_classes: usize,
    per_class: usize,
    input_dim: usize,
    seed: u64,
) -> Result<Dataset, LearnerError> {
    SyntheticSpec { num_classes, per_class, input_dim, spread: DEFAULT_SPREAD, seed }.generate()
}

/// One node's slice of the data.
#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    pub node_index: usize,
    pub train: Dataset,
    pub test: Dataset,
    /// Source rows (in the partitioned dataset) of `train` and `test`.
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

/// Shuffles the rows by `seed`, deals them into `n` disjoint shards whose
/// sizes differ by at most one, and splits each shard into train/test with
/// `round(size * test_fraction)` test rows.
pub fn partition(dataset: &Dataset, n: usize, test_fraction: f64, seed: u64) -> Result<Vec<Shard>, LearnerError> {
    if n == 0 || dataset.len() < n {
        return Err(LearnerError::TooFewExamples { size: dataset.len(), n });
    }
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(LearnerError::InvalidDataset(format!("test fraction {test_fraction} outside [0, 1)")));
    }
    let mut rows: Vec<usize> = (0..dataset.len()).collect();
    rows.shuffle(&mut rng_for(&[seed, TAG_PARTITION]));

    let base = dataset.len() / n;
    let extra = dataset.len() % n;
    let mut start = 0;
    let mut shards = Vec::with_capacity(n);
    for node_index in 0..n {
        let size = base + usize::from(node_index < extra);
        let chunk = &rows[start..start + size];
        start += size;
        let test_count = ((size as f64) * test_fraction).round() as usize;
        let (test_rows, train_rows) = chunk.split_at(test_count);
        shards.push(Shard {
            node_index,
            train: dataset.subset(train_rows),
            test: dataset.subset(test_rows),
            train_rows: train_rows.to_vec(),
            test_rows: test_rows.to_vec(),
        });
    }
    Ok(shards)
}
