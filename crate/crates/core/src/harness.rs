//! Experiment orchestration.
//!
//! One round: every honest node computes a gradient on its next minibatch
//! against the current global parameters; the adversary sees exactly those
//! gradients (plus the parameters, round index and seed) and submits `f`
//! forgeries from the last `f` node slots; the GAR aggregates all `n`
//! reports; the server takes one optimizer step on the aggregate.
//!
//! With `AttackSpec::None` there is no adversary and every node, including
//! the Byzantine slots, trains honestly on its own shard. Under an attack the
//! Byzantine slots' shards sit idle.

use std::collections::HashMap;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::{self, AdversaryView, AttackError, AttackSpec};
use crate::gar::{AggregationOutcome, GarError, GarRule, GarSpec};
use crate::learner::{
    self, Dataset, LearnerError, MlpShape, ModelParams, OptimizerConfig, OptimizerState, Shard, SyntheticSpec,
};
use crate::rng::{rng_for, TAG_BATCHES};
use crate::vecmath::GradientVector;

pub const MNIST_DIR_ENV: &str = "GARLAB_MNIST_DIR";
const MNIST_INPUT_DIM: usize = 784;
const MNIST_CLASSES: usize = 10;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Gar(#[from] GarError),
    #[error(transparent)]
    Attack(#[from] AttackError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic {
        #[serde(default = "default_classes")]
        num_classes: usize,
        #[serde(default = "default_per_class")]
        per_class: usize,
        #[serde(default = "default_input_dim")]
        input_dim: usize,
        #[serde(default = "default_spread")]
        spread: f64,
    },
    Mnist {
        /// Directory holding the IDX training files.
        #[serde(default)]
        dir: Option<PathBuf>,
        /// Keep only the first `limit` examples.
        #[serde(default)]
        limit: Option<usize>,
    },
}

fn default_classes() -> usize {
    10
}
fn default_per_class() -> usize {
    200
}
fn default_input_dim() -> usize {
    64
}
fn default_spread() -> f64 {
    learner::DEFAULT_SPREAD
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic {
            num_classes: default_classes(),
            per_class: default_per_class(),
            input_dim: default_input_dim(),
            spread: default_spread(),
        }
    }
}

impl DatasetSource {
    /// `(input_dim, num_classes)` known without loading anything.
    pub fn input_shape(&self) -> (usize, usize) {
        match *self {
            DatasetSource::Synthetic { num_classes, input_dim, .. } => (input_dim, num_classes),
            DatasetSource::Mnist { .. } => (MNIST_INPUT_DIM, MNIST_CLASSES),
        }
    }

    /// Example count known without loading, if any.
    pub fn known_size(&self) -> Option<usize> {
        match *self {
            DatasetSource::Synthetic { num_classes, per_class, .. } => Some(num_classes * per_class),
            DatasetSource::Mnist { .. } => None,
        }
    }

    pub fn load(&self, seed: u64) -> Result<Dataset, HarnessError> {
        match self {
            DatasetSource::Synthetic { num_classes, per_class, input_dim, spread } => Ok(SyntheticSpec {
                num_classes: *num_classes,
                per_class: *per_class,
                input_dim: *input_dim,
                spread: *spread,
                seed,
            }
            .generate()?),
            DatasetSource::Mnist { dir, limit } => {
                let dir = dir
                    .clone()
                    .ok_or_else(|| HarnessError::Config(format!("dataset.dir is not set (or set {MNIST_DIR_ENV})")))?;
                Ok(learner::load_mnist_dir(dir, *limit)?)
            }
        }
    }
}

fn default_n() -> usize {
    7
}
fn default_f() -> usize {
    2
}
fn default_epochs() -> usize {
    10
}
fn default_batch() -> usize {
    32
}
fn default_eval_every() -> usize {
    10
}
fn default_test_fraction() -> f64 {
    learner::DEFAULT_TEST_FRACTION
}
fn default_hidden() -> usize {
    learner::DEFAULT_HIDDEN
}
fn default_gar() -> GarRule {
    GarRule::WeightedMean
}

/// Everything that determines one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_f")]
    pub f: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Evaluate pooled test accuracy every this many rounds (and at the end).
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Number of data shards, `n` when unset. Node `i` trains on shard `i`;
    /// shards past `n` only contribute their test rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shards: Option<usize>,
    /// Hidden width of the MLP.
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_gar")]
    pub gar: GarRule,
    #[serde(default)]
    pub attack: AttackSpec,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub dataset: DatasetSource,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: default_n(),
            f: default_f(),
            seed: 0,
            epochs: default_epochs(),
            batch_size: default_batch(),
            eval_every: default_eval_every(),
            test_fraction: default_test_fraction(),
            shards: None,
            hidden: default_hidden(),
            gar: default_gar(),
            attack: AttackSpec::None,
            optimizer: OptimizerConfig::default(),
            dataset: DatasetSource::default(),
        }
    }
}

impl ExperimentConfig {
    /// Laptop-scale setting: 8,000 synthetic examples in 10 classes (spread
    /// 0.5), a 32-unit MLP, n = 7, f = 2, three epochs of batch-8 Adam at
    /// lr 0.001. Mean aggregation, no attack.
    pub fn desk(seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            seed,
            epochs: 3,
            batch_size: 8,
            eval_every: 50,
            hidden: 32,
            dataset: DatasetSource::Synthetic { num_classes: 10, per_class: 800, input_dim: 64, spread: 0.5 },
            ..ExperimentConfig::default()
        }
    }

    pub fn gar_spec(&self) -> GarSpec {
        GarSpec::new(self.gar, self.f)
    }

    pub fn model_shape(&self) -> MlpShape {
        let (input_dim, classes) = self.dataset.input_shape();
        MlpShape::new(input_dim, self.hidden, classes)
    }

    pub fn shard_count(&self) -> usize {
        self.shards.unwrap_or(self.n)
    }

    /// Number of nodes that compute real gradients.
    pub fn honest_count(&self) -> usize {
        if self.attack.is_none() {
            self.n
        } else {
            self.n - self.f
        }
    }

    /// The no-attack twin of this config.
    pub fn baseline(&self) -> ExperimentConfig {
        ExperimentConfig { attack: AttackSpec::None, ..self.clone() }
    }

    /// Static checks. Returns non-fatal warnings; every hard failure that
    /// `run_experiment` would hit before loading data is an error here.
    pub fn validate(&self) -> Result<Vec<String>, HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.n == 0 {
            return bad("n must be >= 1".into());
        }
        if self.f >= self.n {
            return bad(format!("f must satisfy 0 <= f < n (n = {}, f = {})", self.n, self.f));
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.eval_every == 0 {
            return bad("eval_every must be >= 1".into());
        }
        if self.hidden == 0 {
            return bad("hidden must be >= 1".into());
        }
        if self.shard_count() < self.n {
            return bad(format!("shards must be >= n (n = {}, shards = {})", self.n, self.shard_count()));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return bad(format!("test_fraction must lie in [0, 1), got {}", self.test_fraction));
        }
        let lr = self.optimizer.learning_rate();
        if !(lr.is_finite() && lr > 0.0) {
            return bad(format!("optimizer.lr must be > 0, got {lr}"));
        }
        let (input_dim, classes) = self.dataset.input_shape();
        if input_dim == 0 || classes < 2 {
            return bad("dataset needs input_dim >= 1 and num_classes >= 2".into());
        }
        if let DatasetSource::Synthetic { per_class, spread, .. } = self.dataset {
            if per_class == 0 {
                return bad("dataset.per_class must be >= 1".into());
            }
            if !(spread.is_finite() && spread >= 0.0) {
                return bad(format!("dataset.spread must be >= 0, got {spread}"));
            }
        }
        self.gar_spec().check_feasible(self.n)?;
        self.attack.validate(self.model_shape().param_count())?;
        if let Some(size) = self.dataset.known_size() {
            self.check_dataset_size(size)?;
        }

        let mut warnings = Vec::new();
        if self.f > 0 && self.n < 2 * self.f + 3 {
            warnings.push(format!(
                "n = {} is below 2f + 3 = {}: Krum's classical resilience condition does not hold",
                self.n,
                2 * self.f + 3
            ));
        }
        if 2 * self.f >= self.n {
            warnings.push("Byzantine nodes are not a minority".to_string());
        }
        if self.shard_count() != self.n {
            warnings.push(format!(
                "{} shards for {} nodes: shards {}.. are used for testing only",
                self.shard_count(),
                self.n,
                self.n
            ));
        }
        if !self.attack.is_none() && self.f == 0 {
            warnings.push("attack configured but f = 0: no Byzantine nodes exist".to_string());
        }
        Ok(warnings)
    }

    /// Checks that a dataset of `size` examples yields usable shards.
    pub fn check_dataset_size(&self, size: usize) -> Result<(), HarnessError> {
        let shards = self.shard_count();
        if size < shards {
            return Err(LearnerError::TooFewExamples { size, n: shards }.into());
        }
        let smallest = size / shards;
        let smallest_train = smallest - ((smallest as f64) * self.test_fraction).round() as usize;
        if smallest_train == 0 {
            return Err(HarnessError::Config(format!(
                "smallest shard ({smallest} examples) has no training rows at test_fraction {}",
                self.test_fraction
            )));
        }
        let extra = size % shards;
        let pooled_test: usize = (0..shards)
            .map(|i| {
                let s = smallest + usize::from(i < extra);
                ((s as f64) * self.test_fraction).round() as usize
            })
            .sum();
        if pooled_test == 0 {
            return Err(HarnessError::Config("pooled test set is empty; raise test_fraction".into()));
        }
        Ok(())
    }
}

/// Per-round metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub epoch: usize,
    /// Mean minibatch loss over the honest nodes, before the update.
    pub train_loss: f64,
    /// Pooled test accuracy after the update, on evaluation rounds.
    pub test_accuracy: Option<f64>,
    pub selected_indices: Vec<usize>,
    /// Whether the GAR used a forged report (one of the last `f` slots under an attack).
    pub byzantine_selected: bool,
    pub aggregate_norm: f64,
}

/// What an observer sees after each round's aggregation, before the update.
#[derive(Debug)]
pub struct RoundEvent<'a> {
    pub round: usize,
    pub epoch: usize,
    pub params: &'a [f64],
    pub honest: &'a [GradientVector],
    pub byzantine: &'a [GradientVector],
    pub outcome: &'a AggregationOutcome,
}

/// Byzantine submissions plus GAR outcome for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedRound {
    pub byzantine: Vec<GradientVector>,
    pub outcome: AggregationOutcome,
}

/// Steps (2) and (3) of a round: let the adversary forge `f` reports from
/// the honest ones, then aggregate all `honest.len() + f` reports. The
/// adversary only receives `honest`, `params`, `round` and `seed`.
pub fn aggregate_round(
    gar: &GarSpec,
    attack_spec: &AttackSpec,
    f: usize,
    honest: &[GradientVector],
    params: &[f64],
    round: u64,
    seed: u64,
) -> Result<AggregatedRound, HarnessError> {
    let byzantine = if attack_spec.is_none() || f == 0 {
        Vec::new()
    } else {
        let view = AdversaryView { honest, params, round, seed };
        attack::craft(attack_spec, &view, f)?
    };
    let outcome = if byzantine.is_empty() {
        gar.aggregate(honest)?
    } else {
        let mut reports = honest.to_vec();
        reports.extend(byzantine.iter().cloned());
        gar.aggregate(&reports)?
    };
    Ok(AggregatedRound { byzantine, outcome })
}

/// Shards and the pooled test set for a config.
pub struct Prepared {
    pub shards: Vec<Shard>,
    pub pooled_test: Dataset,
    pub shape: MlpShape,
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared, HarnessError> {
    config.validate()?;
    let data = config.dataset.load(config.seed)?;
    config.check_dataset_size(data.len())?;
    let shards = learner::partition(&data, config.shard_count(), config.test_fraction, config.seed)?;
    let tests: Vec<&Dataset> = shards.iter().map(|s| &s.test).collect();
    let pooled_test = Dataset::concat(&tests)?;
    let shape = MlpShape::new(data.input_dim(), config.hidden, data.num_classes());
    Ok(Prepared { shards, pooled_test, shape })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RoundRecord>, HarnessError> {
    run_experiment_observed(config, |_| {})
}

/// Like [`run_experiment`], calling `observe` once per round.
pub fn run_experiment_observed<F>(config: &ExperimentConfig, mut observe: F) -> Result<Vec<RoundRecord>, HarnessError>
where
    F: FnMut(&RoundEvent<'_>),
{
    let Prepared { shards, pooled_test, shape } = prepare(config)?;
    let n = config.n;
    let f = config.f;
    let honest_count = config.honest_count();
    let gar = config.gar_spec();
    let mut params = ModelParams::init(shape, config.seed);
    let mut optimizer = OptimizerState::new(config.optimizer, params.len());

    let batch = config.batch_size;
    let rounds_per_epoch = shards[..n].iter().map(|s| s.train.len().div_ceil(batch)).min().unwrap_or(0);
    let total_rounds = rounds_per_epoch * config.epochs;
    let mut records = Vec::with_capacity(total_rounds);
    let mut round = 0;

    for epoch in 1..=config.epochs {
        let orders: Vec<Vec<usize>> = shards[..honest_count]
            .iter()
            .map(|s| {
                let mut order: Vec<usize> = (0..s.train.len()).collect();
                order.shuffle(&mut rng_for(&[config.seed, TAG_BATCHES, s.node_index as u64, epoch as u64]));
                order
            })
            .collect();

        for step in 0..rounds_per_epoch {
            round += 1;
            let results: Vec<(f64, GradientVector)> = shards[..honest_count]
                .par_iter()
                .zip(orders.par_iter())
                .map(|(shard, order)| {
                    let end = ((step + 1) * batch).min(order.len());
                    let minibatch = shard.train.subset(&order[step * batch..end]);
                    learner::loss_and_gradient(&params, &minibatch).map(|(loss, _, g)| (loss, g))
                })
                .collect::<Result<_, _>>()?;
            let train_loss = results.iter().map(|(l, _)| l).sum::<f64>() / honest_count as f64;
            let honest: Vec<GradientVector> = results.into_iter().map(|(_, g)| g).collect();

            let AggregatedRound { byzantine, outcome } =
                aggregate_round(&gar, &config.attack, f, &honest, params.values(), round as u64, config.seed)?;
            observe(&RoundEvent {
                round,
                epoch,
                params: params.values(),
                honest: &honest,
                byzantine: &byzantine,
                outcome: &outcome,
            });

            optimizer.step(params.values_mut(), outcome.aggregate.as_slice())?;

            let test_accuracy = if round % config.eval_every == 0 || round == total_rounds {
                Some(learner::evaluate(&params, &pooled_test)?.1)
            } else {
                None
            };
            records.push(RoundRecord {
                round,
                epoch,
                train_loss,
                test_accuracy,
                byzantine_selected: !byzantine.is_empty() && outcome.selected_indices.iter().any(|&i| i >= n - f),
                aggregate_norm: outcome.aggregate.norm(),
                selected_indices: outcome.selected_indices,
            });
        }
    }
    Ok(records)
}

/// Last evaluated accuracy of a trace.
pub fn final_accuracy(records: &[RoundRecord]) -> Option<f64> {
    records.iter().rev().find_map(|r| r.test_accuracy)
}

/// Outcome of one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GridEntry {
    pub config: ExperimentConfig,
    pub records: Vec<RoundRecord>,
    pub final_accuracy: Option<f64>,
    /// Final accuracy of the same config with `attack = none`.
    pub baseline_accuracy: Option<f64>,
    /// `baseline_accuracy - final_accuracy` (fraction, not percent).
    pub accuracy_drop: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GridSummary {
    pub entries: Vec<GridEntry>,
}

impl GridSummary {
    pub fn find(&self, gar: &str, attack: &str, seed: u64) -> Option<&GridEntry> {
        self.entries
            .iter()
            .find(|e| e.config.gar.name() == gar && e.config.attack.name() == attack && e.config.seed == seed)
    }
}

fn config_key(config: &ExperimentConfig) -> String {
    serde_json::to_string(config).expect("config serializes")
}

/// Runs every config (in parallel) plus any missing no-attack baselines.
/// A failed experiment is recorded in its entry and the grid continues.
pub fn run_grid(configs: &[ExperimentConfig]) -> GridSummary {
    let mut unique: Vec<ExperimentConfig> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for c in configs.iter().flat_map(|c| [c.clone(), c.baseline()]) {
        index.entry(config_key(&c)).or_insert_with(|| {
            unique.push(c);
            unique.len() - 1
        });
    }
    let results: Vec<Result<Vec<RoundRecord>, String>> =
        unique.par_iter().map(|c| run_experiment(c).map_err(|e| e.to_string())).collect();

    let entries = configs
        .iter()
        .map(|c| {
            let own = &results[index[&config_key(c)]];
            let base = &results[index[&config_key(&c.baseline())]];
            let final_accuracy = own.as_ref().ok().and_then(|r| self::final_accuracy(r));
            let baseline_accuracy = base.as_ref().ok().and_then(|r| self::final_accuracy(r));
            let accuracy_drop = match (baseline_accuracy, final_accuracy) {
                (Some(b), Some(a)) => Some(b - a),
                _ => None,
            };
            let error = match (own, base) {
                (Err(e), _) => Some(e.clone()),
                (Ok(_), Err(e)) => Some(format!("baseline failed: {e}")),
                _ => None,
            };
            GridEntry {
                config: c.clone(),
                records: own.clone().unwrap_or_default(),
                final_accuracy,
                baseline_accuracy,
                accuracy_drop,
                error,
            }
        })
        .collect();
    GridSummary { entries }
}
