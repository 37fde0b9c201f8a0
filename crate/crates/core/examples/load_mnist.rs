//! Loads the MNIST training files and shards them across seven nodes.
//!
//! GARLAB_MNIST_DIR=/path/to/mnist cargo run --example load_mnist

use garlab::harness::MNIST_DIR_ENV;
use garlab::learner::{load_mnist_dir, partition};

fn main() {
    let Some(dir) = std::env::var_os(MNIST_DIR_ENV) else {
        eprintln!("set {MNIST_DIR_ENV} to a directory containing train-images-idx3-ubyte and train-labels-idx1-ubyte");
        std::process::exit(2);
    };
    let data = match load_mnist_dir(&dir, Some(8000)) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    };
    println!("{} examples, {} features, {} classes", data.len(), data.input_dim(), data.num_classes());
    let mut counts = [0usize; 10];
    data.labels().iter().for_each(|&l| counts[l] += 1);
    println!("label counts {counts:?}");
    for shard in partition(&data, 7, 0.2, 0).unwrap() {
        println!("node {}: {} train, {} test", shard.node_index, shard.train.len(), shard.test.len());
    }
}
