//! Two-layer perceptron `input -> hidden (ReLU) -> classes (log-softmax)`
//! trained with mean negative log-likelihood.
//!
//! Flattened parameter layout: `W1` (hidden x input, row-major), `b1`,
//! `W2` (classes x hidden, row-major), `b2`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, LearnerError};
use crate::rng::{rng_for, TAG_INIT};
use crate::vecmath::GradientVector;

pub const DEFAULT_HIDDEN: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpShape {
    pub input_dim: usize,
    pub hidden: usize,
    pub num_classes: usize,
}

impl MlpShape {
    pub fn new(input_dim: usize, hidden: usize, num_classes: usize) -> Self {
        MlpShape { input_dim, hidden, num_classes }
    }

    pub fn param_count(&self) -> usize {
        self.hidden * self.input_dim + self.hidden + self.num_classes * self.hidden + self.num_classes
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.input_dim;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.num_classes * self.hidden;
        (b1, w2, b2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    shape: MlpShape,
    values: Vec<f64>,
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases.
    pub fn init(shape: MlpShape, seed: u64) -> Self {
        let mut rng = rng_for(&[seed, TAG_INIT]);
        let mut values = vec![0.0; shape.param_count()];
        let (b1, w2, b2) = shape.offsets();
        let limit1 = (6.0 / (shape.input_dim + shape.hidden) as f64).sqrt();
        values[..b1].iter_mut().for_each(|w| *w = rng.random_range(-limit1..limit1));
        let limit2 = (6.0 / (shape.hidden + shape.num_classes) as f64).sqrt();
        values[w2..b2].iter_mut().for_each(|w| *w = rng.random_range(-limit2..limit2));
        ModelParams { shape, values }
    }

    pub fn zeros(shape: MlpShape) -> Self {
        ModelParams { shape, values: vec![0.0; shape.param_count()] }
    }

    pub fn from_values(shape: MlpShape, values: Vec<f64>) -> Result<Self, LearnerError> {
        if values.len() != shape.param_count() {
            return Err(LearnerError::Shape {
                what: "parameter vector",
                expected: shape.param_count(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LearnerError::InvalidDataset("non-finite parameter".into()));
        }
        Ok(ModelParams { shape, values })
    }

    pub fn shape(&self) -> MlpShape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn check_batch(params: &ModelParams, batch: &Dataset) -> Result<(), LearnerError> {
    let shape = params.shape;
    if batch.is_empty() {
        return Err(LearnerError::InvalidDataset("empty batch".into()));
    }
    if batch.input_dim() != shape.input_dim {
        return Err(LearnerError::Shape { what: "input dimension", expected: shape.input_dim, got: batch.input_dim() });
    }
    if batch.num_classes() != shape.num_classes {
        return Err(LearnerError::Shape { what: "class count", expected: shape.num_classes, got: batch.num_classes() });
    }
    Ok(())
}

struct Activations {
    pre: Vec<f64>,
    hidden: Vec<f64>,
    log_probs: Vec<f64>,
}

fn forward_one(params: &ModelParams, x: &[f64], act: &mut Activations) {
    let s = params.shape;
    let p = &params.values;
    let (b1, w2, b2) = s.offsets();
    for h in 0..s.hidden {
        let row = &p[h * s.input_dim..(h + 1) * s.input_dim];
        let z = row.iter().zip(x).fold(p[b1 + h], |acc, (w, xi)| acc + w * xi);
        act.pre[h] = z;
        act.hidden[h] = z.max(0.0);
    }
    for c in 0..s.num_classes {
        let row = &p[w2 + c * s.hidden..w2 + (c + 1) * s.hidden];
        act.log_probs[c] = row.iter().zip(&act.hidden).fold(p[b2 + c], |acc, (w, h)| acc + w * h);
    }
    let max = act.log_probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + act.log_probs.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    act.log_probs.iter_mut().for_each(|z| *z -= lse);
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn accumulate(
    params: &ModelParams,
    batch: &Dataset,
    mut grad: Option<&mut [f64]>,
) -> Result<(f64, usize), LearnerError> {
    check_batch(params, batch)?;
    let s = params.shape;
    let p = &params.values;
    let (b1, w2, b2) = s.offsets();
    let mut act =
        Activations { pre: vec![0.0; s.hidden], hidden: vec![0.0; s.hidden], log_probs: vec![0.0; s.num_classes] };
    let mut dz = vec![0.0; s.num_classes];
    let mut dh = vec![0.0; s.hidden];
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut correct = 0;
    for i in 0..batch.len() {
        let x = batch.row(i);
        let label = batch.labels()[i];
        forward_one(params, x, &mut act);
        loss -= act.log_probs[label];
        if argmax(&act.log_probs) == label {
            correct += 1;
        }
        let Some(g) = grad.as_deref_mut() else { continue };
        for c in 0..s.num_classes {
            dz[c] = (act.log_probs[c].exp() - if c == label { 1.0 } else { 0.0 }) * scale;
        }
        dh.iter_mut().for_each(|v| *v = 0.0);
        for c in 0..s.num_classes {
            let row = w2 + c * s.hidden;
            g[b2 + c] += dz[c];
            for h in 0..s.hidden {
                g[row + h] += dz[c] * act.hidden[h];
                dh[h] += p[row + h] * dz[c];
            }
        }
        for h in 0..s.hidden {
            if act.pre[h] <= 0.0 {
                continue;
            }
            let d = dh[h];
            g[b1 + h] += d;
            let row = h * s.input_dim;
            for (gw, xi) in g[row..row + s.input_dim].iter_mut().zip(x) {
                *gw += d * xi;
            }
        }
    }
    Ok((loss * scale, correct))
}

/// Mean negative log-likelihood over `batch` and the number of correct
/// argmax predictions.
pub fn forward_loss(params: &ModelParams, batch: &Dataset) -> Result<(f64, usize), LearnerError> {
    accumulate(params, batch, None)
}

/// Loss, correct count, and gradient of the mean loss in one pass.
pub fn loss_and_gradient(params: &ModelParams, batch: &Dataset) -> Result<(f64, usize, GradientVector), LearnerError> {
    let mut grad = vec![0.0; params.len()];
    let (loss, correct) = accumulate(params, batch, Some(&mut grad))?;
    Ok((loss, correct, GradientVector::new(grad)?))
}

pub fn backward(params: &ModelParams, batch: &Dataset) -> Result<GradientVector, LearnerError> {
    loss_and_gradient(params, batch).map(|(_, _, g)| g)
}

/// Mean loss and accuracy over a whole dataset.
pub fn evaluate(params: &ModelParams, data: &Dataset) -> Result<(f64, f64), LearnerError> {
    let (loss, correct) = forward_loss(params, data)?;
    Ok((loss, correct as f64 / data.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::make_synthetic;

    #[test]
    fn param_count_and_layout() {
        let s = MlpShape::new(784, 128, 10);
        assert_eq!(s.param_count(), 784 * 128 + 128 + 128 * 10 + 10);
        let p = ModelParams::init(s, 3);
        assert_eq!(p.len(), s.param_count());
        let (b1, w2, b2) = s.offsets();
        assert!(p.values()[b1..w2].iter().all(|&b| b == 0.0));
        assert!(p.values()[b2..].iter().all(|&b| b == 0.0));
        let limit = (6.0f64 / (784.0 + 128.0)).sqrt();
        assert!(p.values()[..b1].iter().all(|w| w.abs() <= limit));
        assert_eq!(p, ModelParams::init(s, 3));
    }

    #[test]
    fn uniform_model_loss_is_ln_classes() {
        let data = make_synthetic(10, 3, 5, 1).unwrap();
        let params = ModelParams::zeros(MlpShape::new(5, 4, 10));
        let (loss, _) = forward_loss(&params, &data).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn closed_form_two_class_loss() {
        let shape = MlpShape::new(1, 1, 2);
        let mut params = ModelParams::zeros(shape);
        let (_, _, b2) = shape.offsets();
        params.values_mut()[b2] = 1.0;
        let batch = Dataset::new(vec![0.3], vec![0], 1, 2).unwrap();
        let (loss, correct) = forward_loss(&params, &batch).unwrap();
        assert!((loss - (1.0 + (-1f64).exp()).ln()).abs() < 1e-15);
        assert!((loss - 0.3133).abs() < 1e-4);
        assert_eq!(correct, 1);
    }

    #[test]
    fn confident_model_loss_vanishes() {
        let shape = MlpShape::new(1, 1, 2);
        let mut params = ModelParams::zeros(shape);
        let (_, _, b2) = shape.offsets();
        params.values_mut()[b2] = 50.0;
        let batch = Dataset::new(vec![0.0, 1.0], vec![0, 0], 1, 2).unwrap();
        assert!(forward_loss(&params, &batch).unwrap().0 < 1e-20);
    }

    #[test]
    fn balanced_symmetric_batch_has_zero_output_bias_gradient() {
        let shape = MlpShape::new(2, 3, 2);
        let params = ModelParams::zeros(shape);
        let batch = Dataset::new(vec![0.5, 1.0, -0.5, 2.0], vec![0, 1], 2, 2).unwrap();
        let g = backward(&params, &batch).unwrap();
        let (_, _, b2) = shape.offsets();
        assert_eq!(&g.as_slice()[b2..], &[0.0, 0.0]);
    }

    #[test]
    fn duplicated_batch_gives_same_gradient() {
        let data = make_synthetic(3, 4, 5, 2).unwrap();
        let params = ModelParams::init(MlpShape::new(5, 6, 3), 1);
        let doubled = Dataset::concat(&[&data, &data]).unwrap();
        let a = backward(&params, &data).unwrap();
        let b = backward(&params, &doubled).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() <= 1e-14 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn shape_errors() {
        let params = ModelParams::zeros(MlpShape::new(3, 2, 2));
        let wrong = Dataset::new(vec![0.0; 4], vec![0, 1], 2, 2).unwrap();
        assert!(matches!(forward_loss(&params, &wrong), Err(LearnerError::Shape { .. })));
        assert!(matches!(backward(&params, &wrong), Err(LearnerError::Shape { .. })));
        assert!(ModelParams::from_values(MlpShape::new(3, 2, 2), vec![0.0; 3]).is_err());
    }
}
