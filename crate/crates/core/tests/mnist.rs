//! Runs only when `GARLAB_MNIST_DIR` points at the IDX training files.

use garlab::harness::MNIST_DIR_ENV;
use garlab::learner::load_mnist_dir;

#[test]
fn standard_training_files() {
    let Some(dir) = std::env::var_os(MNIST_DIR_ENV) else {
        eprintln!("{MNIST_DIR_ENV} not set; skipping");
        return;
    };
    let data = load_mnist_dir(&dir, None).unwrap();
    assert_eq!((data.len(), data.input_dim(), data.num_classes()), (60_000, 784, 10));
    assert!(data.features().iter().all(|p| (0.0..=1.0).contains(p)));
    assert_eq!(load_mnist_dir(&dir, Some(8000)).unwrap().len(), 8000);
}
