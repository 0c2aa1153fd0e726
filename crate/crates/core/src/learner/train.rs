use rand::seq::SliceRandom;
use rand::Rng;

use super::adam::{adam_step, OptimizerState};
use super::model::{accumulate_sample_gradient, log_sum_exp, logits_into, Model};
use super::{Dataset, LearnerError, TrainingConfig};
use crate::param::ParamVec;
use crate::scalar::Scalar;

/// Runs `cfg.epochs` passes of mini-batch Adam over `shard`, starting from
/// `params` with fresh optimizer state. The shard is reshuffled from `stream`
/// every epoch and the final partial batch is kept.
pub fn local_train<T: Scalar, R: Rng + ?Sized>(
    params: &[T],
    ds: &Dataset<T>,
    shard: &[usize],
    cfg: &TrainingConfig,
    stream: &mut R,
) -> Result<ParamVec<T>, LearnerError> {
    if shard.is_empty() {
        return Err(LearnerError::EmptyShard);
    }
    if let Some(&i) = shard.iter().find(|&&i| i >= ds.len()) {
        return Err(LearnerError::DimensionMismatch(format!(
            "shard index {i} outside dataset of {}",
            ds.len()
        )));
    }
    let model = Model::unflatten(params, ds.num_classes(), ds.input_dim())?;
    let mut w = model.as_slice().to_vec();
    if cfg.epochs == 0 {
        return Ok(w.into());
    }
    let d = ds.input_dim();
    let mut order = shard.to_vec();
    let mut state = OptimizerState::new(w.len());
    let mut grad = vec![T::zero(); w.len()];
    let mut scratch = vec![T::zero(); ds.num_classes()];
    for _ in 0..cfg.epochs {
        order.shuffle(stream);
        for batch in order.chunks(cfg.batch_size.max(1)) {
            grad.iter_mut().for_each(|g| *g = T::zero());
            for &i in batch {
                accumulate_sample_gradient(&w, d, ds.row(i), ds.labels()[i], &mut scratch, &mut grad);
            }
            let scale = T::lit(batch.len() as f64);
            grad.iter_mut().for_each(|g| *g /= scale);
            adam_step(&mut w, &grad, &mut state, cfg)?;
        }
    }
    Ok(w.into())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

/// Accuracy and mean cross-entropy of `params` on `ds`. Ties in the argmax go
/// to the lowest class index.
pub fn evaluate_with_loss<T: Scalar>(params: &[T], ds: &Dataset<T>) -> Result<Evaluation, LearnerError> {
    let model = Model::unflatten(params, ds.num_classes(), ds.input_dim())?;
    if ds.is_empty() {
        return Err(LearnerError::EmptyBatch);
    }
    let mut logits = vec![T::zero(); ds.num_classes()];
    let mut correct = 0usize;
    let mut loss = 0.0;
    for (i, &y) in ds.labels().iter().enumerate() {
        logits_into(model.as_slice(), ds.input_dim(), ds.row(i), &mut logits);
        let mut best = 0;
        for (k, &l) in logits.iter().enumerate().skip(1) {
            if l > logits[best] {
                best = k;
            }
        }
        correct += usize::from(best == y);
        loss += (log_sum_exp(&logits) - logits[y]).as_f64();
    }
    let n = ds.len() as f64;
    Ok(Evaluation { accuracy: correct as f64 / n, loss: loss / n })
}

pub fn evaluate<T: Scalar>(params: &[T], ds: &Dataset<T>) -> Result<f64, LearnerError> {
    evaluate_with_loss(params, ds).map(|e| e.accuracy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::{cross_entropy_loss, partition, predict_logits, synth_blobs};
    use crate::rng;

    fn blobs(spread: f64) -> Dataset<f64> {
        synth_blobs(5, 12, 60, spread, 21).unwrap()
    }

    #[test]
    fn zero_epochs_returns_input() {
        let ds = blobs(0.1);
        let p = vec![0.25; Model::<f64>::param_count(5, 12)];
        let cfg = TrainingConfig { epochs: 0, ..Default::default() };
        let out = local_train(&p, &ds, &[0, 1, 2], &cfg, &mut rng::stream(0)).unwrap();
        assert_eq!(out.as_slice(), &p[..]);
    }

    #[test]
    fn empty_shard_is_rejected() {
        let ds = blobs(0.1);
        let p = vec![0.0; Model::<f64>::param_count(5, 12)];
        let err = local_train(&p, &ds, &[], &TrainingConfig::default(), &mut rng::stream(0));
        assert!(matches!(err, Err(LearnerError::EmptyShard)));
    }

    #[test]
    fn separable_blobs_are_memorized() {
        let ds = blobs(0.0);
        let shard = partition(ds.len(), 1, 250, 3).unwrap().remove(0);
        let p = vec![0.0; Model::<f64>::param_count(5, 12)];
        let out = local_train(&p, &ds, &shard, &TrainingConfig::default(), &mut rng::stream(1)).unwrap();
        let train = ds.subset(&shard);
        assert_eq!(evaluate(&out, &train).unwrap(), 1.0);
    }

    #[test]
    fn training_does_not_increase_loss_on_easy_data() {
        let ds = blobs(0.05);
        for seed in 0..5 {
            let shard = partition(ds.len(), 1, 250, seed).unwrap().remove(0);
            let train = ds.subset(&shard);
            let p = vec![0.0; Model::<f64>::param_count(5, 12)];
            let before = evaluate_with_loss(&p, &train).unwrap().loss;
            let out = local_train(&p, &ds, &shard, &TrainingConfig::default(), &mut rng::stream(seed)).unwrap();
            let after = evaluate_with_loss(&out, &train).unwrap().loss;
            assert!(after <= before, "{after} > {before}");
        }
    }

    #[test]
    fn local_train_is_pure() {
        let ds = blobs(0.3);
        let shard: Vec<usize> = (0..50).collect();
        let p = vec![0.01; Model::<f64>::param_count(5, 12)];
        let cfg = TrainingConfig::default();
        let a = local_train(&p, &ds, &shard, &cfg, &mut rng::stream(8)).unwrap();
        let b = local_train(&p, &ds, &shard, &cfg, &mut rng::stream(8)).unwrap();
        assert!(a.bitwise_eq(&b));
        let c = local_train(&p, &ds, &shard, &cfg, &mut rng::stream(9)).unwrap();
        assert!(!a.bitwise_eq(&c));
    }

    #[test]
    fn zero_model_predicts_class_zero() {
        let ds = blobs(0.3);
        let acc = evaluate(&vec![0.0; Model::<f64>::param_count(5, 12)], &ds).unwrap();
        let zeros = ds.labels().iter().filter(|&&y| y == 0).count();
        assert_eq!(acc, zeros as f64 / ds.len() as f64);
        assert_eq!(acc, 0.2);
    }

    #[test]
    fn accuracy_counts_correct_predictions() {
        // bias-only model always predicts class 1; 8 of 10 labels are 1
        let labels = vec![1, 1, 0, 1, 1, 1, 0, 1, 1, 1];
        let ds = Dataset::new(vec![0.5; 10], 1, labels.clone(), 2).unwrap();
        let m = Model::from_parts(2, 1, vec![0.0, 0.0], vec![0.0, 1.0]).unwrap();
        let e = evaluate_with_loss(m.flatten().as_slice(), &ds).unwrap();
        assert_eq!(e.accuracy, 0.8);
        let logits = predict_logits(&m, ds.features()).unwrap();
        let loss = cross_entropy_loss(&logits, &labels).unwrap();
        assert!((e.loss - loss).abs() < 1e-12);
    }

    #[test]
    fn evaluate_checks_shape() {
        let ds = blobs(0.3);
        assert!(evaluate(&[0.0; 3], &ds).is_err());
    }
}
