//! One node, no aggregation: the MLP and Adam on two Gaussian blobs.
//!
//! cargo run --example train_single_node

use garlab::learner::{self, make_synthetic, partition, MlpShape, ModelParams, OptimizerConfig, OptimizerState};

fn main() {
    let data = make_synthetic(2, 200, 4, 7).unwrap();
    let shard = partition(&data, 1, 0.2, 7).unwrap().remove(0);
    let mut params = ModelParams::init(MlpShape::new(4, 16, 2), 7);
    let mut opt = OptimizerState::new(OptimizerConfig::default(), params.len());
    let batch = 32;
    let batches = shard.train.len().div_ceil(batch);

    for step in 0..200 {
        let start = (step % batches) * batch;
        let rows: Vec<usize> = (start..(start + batch).min(shard.train.len())).collect();
        let (loss, _, grad) = learner::loss_and_gradient(&params, &shard.train.subset(&rows)).unwrap();
        opt.step(params.values_mut(), grad.as_slice()).unwrap();
        if step % 40 == 0 {
            let (_, acc) = learner::evaluate(&params, &shard.test).unwrap();
            println!("step {step:>3}  batch loss {loss:.4}  test accuracy {acc:.3}");
        }
    }
    let (loss, acc) = learner::evaluate(&params, &shard.test).unwrap();
    println!("final     test loss {loss:.4}  test accuracy {acc:.3}");
}
