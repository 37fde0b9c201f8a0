use garlab::learner::{self, make_synthetic, partition, MlpShape, ModelParams, OptimizerConfig, OptimizerState};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Single-node minibatch Adam; returns test accuracy after `steps` updates.
fn train_alone(seed: u64, steps: usize) -> f64 {
    let data = make_synthetic(2, 200, 4, seed).unwrap();
    let shard = partition(&data, 1, 0.2, seed).unwrap().remove(0);
    let mut params = ModelParams::init(MlpShape::new(4, 16, 2), seed);
    let mut opt = OptimizerState::new(OptimizerConfig::default(), params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = Vec::new();
    for _ in 0..steps {
        if order.len() < 32 {
            order = (0..shard.train.len()).collect();
            order.shuffle(&mut rng);
        }
        let rows: Vec<usize> = order.drain(..32).collect();
        let grad = learner::backward(&params, &shard.train.subset(&rows)).unwrap();
        opt.step(params.values_mut(), grad.as_slice()).unwrap();
    }
    learner::evaluate(&params, &shard.test).unwrap().1
}

#[test]
fn two_class_blobs_learned_within_200_adam_steps() {
    for seed in 0..5 {
        let acc = train_alone(seed, 200);
        assert!(acc >= 0.95, "seed {seed}: accuracy {acc}");
    }
}

#[test]
fn default_spread_is_linearly_separable() {
    // logistic-regression probe, plain gradient descent on the full set
    let data = make_synthetic(2, 50, 4, 3).unwrap();
    let mut w = [0.0f64; 5];
    for _ in 0..2000 {
        let mut g = [0.0f64; 5];
        for i in 0..data.len() {
            let x = data.row(i);
            let z = w[4] + (0..4).map(|k| w[k] * x[k]).sum::<f64>();
            let err = 1.0 / (1.0 + (-z).exp()) - data.labels()[i] as f64;
            (0..4).for_each(|k| g[k] += err * x[k]);
            g[4] += err;
        }
        (0..5).for_each(|k| w[k] -= 0.1 * g[k] / data.len() as f64);
    }
    let correct = (0..data.len())
        .filter(|&i| {
            let x = data.row(i);
            let z = w[4] + (0..4).map(|k| w[k] * x[k]).sum::<f64>();
            usize::from(z > 0.0) == data.labels()[i]
        })
        .count();
    assert!(correct as f64 / data.len() as f64 >= 0.99, "{correct}/{}", data.len());
}

#[test]
fn wide_synthetic_shapes() {
    let data = make_synthetic(10, 10, 784, 1).unwrap();
    assert_eq!((data.len(), data.input_dim(), data.num_classes()), (100, 784, 10));
    assert_eq!(partition(&data, 7, 0.2, 1).unwrap().len(), 7);
}
