//! Multinomial logistic regression.
//!
//! Parameters are laid out row-major: `num_classes × input_dim` weights followed
//! by `num_classes` biases. That flat layout is the [`ParamVec`] nodes exchange.

use super::{Dataset, LearnerError};
use crate::param::ParamVec;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    num_classes: usize,
    input_dim: usize,
    params: Vec<T>,
}

impl<T: Scalar> Model<T> {
    pub fn param_count(num_classes: usize, input_dim: usize) -> usize {
        num_classes * input_dim + num_classes
    }

    pub fn zeros(num_classes: usize, input_dim: usize) -> Self {
        Self { num_classes, input_dim, params: vec![T::zero(); Self::param_count(num_classes, input_dim)] }
    }

    pub fn from_parts(
        num_classes: usize,
        input_dim: usize,
        weights: Vec<T>,
        bias: Vec<T>,
    ) -> Result<Self, LearnerError> {
        if weights.len() != num_classes * input_dim || bias.len() != num_classes {
            return Err(LearnerError::DimensionMismatch(format!(
                "{} weights and {} biases for a {num_classes}x{input_dim} model",
                weights.len(),
                bias.len()
            )));
        }
        let mut params = weights;
        params.extend(bias);
        Ok(Self { num_classes, input_dim, params })
    }

    /// Interprets a flat parameter vector as a model of the given shape.
    pub fn unflatten(params: &[T], num_classes: usize, input_dim: usize) -> Result<Self, LearnerError> {
        let expected = Self::param_count(num_classes, input_dim);
        if params.len() != expected {
            return Err(LearnerError::DimensionMismatch(format!(
                "{} parameters for a {num_classes}x{input_dim} model (expected {expected})",
                params.len()
            )));
        }
        Ok(Self { num_classes, input_dim, params: params.to_vec() })
    }

    pub fn flatten(&self) -> ParamVec<T> {
        ParamVec::new(self.params.clone())
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn weights(&self) -> &[T] {
        &self.params[..self.num_classes * self.input_dim]
    }

    pub fn bias(&self) -> &[T] {
        &self.params[self.num_classes * self.input_dim..]
    }

    pub fn weights_mut(&mut self) -> &mut [T] {
        let split = self.num_classes * self.input_dim;
        &mut self.params[..split]
    }

    pub fn bias_mut(&mut self) -> &mut [T] {
        let split = self.num_classes * self.input_dim;
        &mut self.params[split..]
    }

    pub(crate) fn as_slice(&self) -> &[T] {
        &self.params
    }

    /// Shape check against a dataset.
    pub fn check_dataset(&self, ds: &Dataset<T>) -> Result<(), LearnerError> {
        if ds.input_dim() != self.input_dim || ds.num_classes() != self.num_classes {
            return Err(LearnerError::DimensionMismatch(format!(
                "model is {}x{}, dataset has {} classes of dimension {}",
                self.num_classes,
                self.input_dim,
                ds.num_classes(),
                ds.input_dim()
            )));
        }
        Ok(())
    }
}

/// `logits = W x + b` for one sample, written into `out`.
pub(crate) fn logits_into<T: Scalar>(params: &[T], input_dim: usize, x: &[T], out: &mut [T]) {
    let c = out.len();
    let (weights, bias) = params.split_at(c * input_dim);
    for (k, o) in out.iter_mut().enumerate() {
        let row = &weights[k * input_dim..(k + 1) * input_dim];
        *o = row.iter().zip(x).fold(bias[k], |acc, (&w, &xi)| acc + w * xi);
    }
}

/// Log-sum-exp with max subtraction.
pub(crate) fn log_sum_exp<T: Scalar>(logits: &[T]) -> T {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    max + logits.iter().map(|&l| (l - max).exp()).sum::<T>().ln()
}

/// Replaces logits by softmax probabilities in place.
pub(crate) fn softmax_in_place<T: Scalar>(logits: &mut [T]) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        total += *l;
    }
    logits.iter_mut().for_each(|l| *l /= total);
}

/// Adds the gradient contribution of one sample (unscaled) into `grad`.
/// `scratch` must have length `num_classes`.
pub(crate) fn accumulate_sample_gradient<T: Scalar>(
    params: &[T],
    input_dim: usize,
    x: &[T],
    label: usize,
    scratch: &mut [T],
    grad: &mut [T],
) {
    let c = scratch.len();
    logits_into(params, input_dim, x, scratch);
    softmax_in_place(scratch);
    scratch[label] -= T::one();
    let (gw, gb) = grad.split_at_mut(c * input_dim);
    for (k, &r) in scratch.iter().enumerate() {
        for (g, &xi) in gw[k * input_dim..(k + 1) * input_dim].iter_mut().zip(x) {
            *g += r * xi;
        }
        gb[k] += r;
    }
}

fn batch_rows<T: Scalar>(model: &Model<T>, features: &[T]) -> Result<usize, LearnerError> {
    let d = model.input_dim;
    if !features.len().is_multiple_of(d) {
        return Err(LearnerError::DimensionMismatch(format!(
            "{} feature values is not a multiple of input_dim {d}",
            features.len()
        )));
    }
    Ok(features.len() / d)
}

fn check_labels(labels: &[usize], rows: usize, num_classes: usize) -> Result<(), LearnerError> {
    if labels.len() != rows {
        return Err(LearnerError::DimensionMismatch(format!(
            "{} labels for {rows} samples",
            labels.len()
        )));
    }
    if rows == 0 {
        return Err(LearnerError::EmptyBatch);
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(LearnerError::LabelOutOfRange { label, num_classes });
    }
    Ok(())
}

/// Logits for a row-major batch; the result is `rows × num_classes`, row-major.
pub fn predict_logits<T: Scalar>(model: &Model<T>, features: &[T]) -> Result<Vec<T>, LearnerError> {
    let rows = batch_rows(model, features)?;
    let c = model.num_classes;
    let mut out = vec![T::zero(); rows * c];
    for (x, o) in features.chunks_exact(model.input_dim).zip(out.chunks_exact_mut(c.max(1))) {
        logits_into(&model.params, model.input_dim, x, o);
    }
    Ok(out)
}

/// Mean negative log-likelihood of `labels` under softmax(`logits`).
pub fn cross_entropy_loss<T: Scalar>(logits: &[T], labels: &[usize]) -> Result<T, LearnerError> {
    if labels.is_empty() {
        return Err(LearnerError::EmptyBatch);
    }
    if !logits.len().is_multiple_of(labels.len()) || logits.is_empty() {
        return Err(LearnerError::DimensionMismatch(format!(
            "{} logits for {} labels",
            logits.len(),
            labels.len()
        )));
    }
    let c = logits.len() / labels.len();
    check_labels(labels, labels.len(), c)?;
    let total: T = logits
        .chunks_exact(c)
        .zip(labels)
        .map(|(row, &y)| log_sum_exp(row) - row[y])
        .sum();
    Ok(total / T::lit(labels.len() as f64))
}

/// Gradient of the mean cross-entropy over the batch, in the model's flat layout.
pub fn gradient<T: Scalar>(
    model: &Model<T>,
    features: &[T],
    labels: &[usize],
) -> Result<ParamVec<T>, LearnerError> {
    let rows = batch_rows(model, features)?;
    check_labels(labels, rows, model.num_classes)?;
    let mut grad = vec![T::zero(); model.params.len()];
    let mut scratch = vec![T::zero(); model.num_classes];
    for (x, &y) in features.chunks_exact(model.input_dim).zip(labels) {
        accumulate_sample_gradient(&model.params, model.input_dim, x, y, &mut scratch, &mut grad);
    }
    let scale = T::lit(rows as f64);
    grad.iter_mut().for_each(|g| *g /= scale);
    Ok(grad.into())
}
