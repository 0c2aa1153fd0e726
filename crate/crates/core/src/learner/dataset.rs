use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use super::LearnerError;
use crate::rng;
use crate::scalar::Scalar;

/// Labeled samples stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    features: Vec<T>,
    input_dim: usize,
    labels: Vec<usize>,
    num_classes: usize,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(
        features: Vec<T>,
        input_dim: usize,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self, LearnerError> {
        if input_dim == 0 || features.len() != labels.len() * input_dim {
            return Err(LearnerError::DimensionMismatch(format!(
                "{} feature values for {} samples of dimension {input_dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(LearnerError::LabelOutOfRange { label, num_classes });
        }
        Ok(Self { features, input_dim, labels, num_classes })
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

    pub fn features(&self) -> &[T] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.features[i * self.input_dim..(i + 1) * self.input_dim]
    }

    /// Widens the label space, e.g. to align a train split with a test split
    /// that happens to contain a class the train split lacks.
    pub fn with_num_classes(mut self, num_classes: usize) -> Result<Self, LearnerError> {
        if num_classes < self.num_classes {
            return Err(LearnerError::InvalidParams(format!(
                "cannot shrink {} classes to {num_classes}",
                self.num_classes
            )));
        }
        self.num_classes = num_classes;
        Ok(self)
    }

    /// Copies the given rows into a new dataset.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.input_dim);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Self {
            features,
            input_dim: self.input_dim,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }
}

/// Gaussian class clusters around seeded unit-norm centers.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobSource {
    centers: Vec<Vec<f64>>,
}

impl BlobSource {
    pub fn new(num_classes: usize, input_dim: usize, seed: u64) -> Result<Self, LearnerError> {
        if num_classes == 0 || input_dim == 0 {
            return Err(LearnerError::InvalidParams(
                "num_classes and input_dim must be positive".into(),
            ));
        }
        let mut stream = rng::stream(seed);
        let centers = (0..num_classes)
            .map(|_| loop {
                let v: Vec<f64> =
                    (0..input_dim).map(|_| StandardNormal.sample(&mut stream)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    break v.into_iter().map(|x| x / norm).collect();
                }
            })
            .collect();
        Ok(Self { centers })
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    /// `samples_per_class` points per class, `center + Normal(0, spread²)` per
    /// coordinate, in a seeded random order.
    pub fn sample<T: Scalar>(
        &self,
        samples_per_class: usize,
        spread: f64,
        seed: u64,
    ) -> Result<Dataset<T>, LearnerError> {
        if samples_per_class == 0 || !spread.is_finite() || spread < 0.0 {
            return Err(LearnerError::InvalidParams(format!(
                "need samples_per_class > 0 and spread >= 0, got {samples_per_class} and {spread}"
            )));
        }
        let num_classes = self.centers.len();
        let input_dim = self.centers[0].len();
        let mut stream = rng::stream(seed);
        let mut rows: Vec<(Vec<T>, usize)> = Vec::with_capacity(num_classes * samples_per_class);
        for (label, center) in self.centers.iter().enumerate() {
            for _ in 0..samples_per_class {
                let x = center
                    .iter()
                    .map(|&c| {
                        let z: f64 = StandardNormal.sample(&mut stream);
                        T::lit(c + spread * z)
                    })
                    .collect();
                rows.push((x, label));
            }
        }
        rows.shuffle(&mut stream);
        let labels = rows.iter().map(|r| r.1).collect();
        let features = rows.into_iter().flat_map(|r| r.0).collect();
        Dataset::new(features, input_dim, labels, num_classes)
    }
}

/// Seeded blob dataset: centers and samples both derive from `seed`.
pub fn synth_blobs<T: Scalar>(
    num_classes: usize,
    input_dim: usize,
    samples_per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset<T>, LearnerError> {
    BlobSource::new(num_classes, input_dim, rng::derive_seed(seed, &[0]))?.sample(
        samples_per_class,
        spread,
        rng::derive_seed(seed, &[1]),
    )
}

/// Disjoint IID shards of exactly `samples_per_node` indices each.
pub fn partition(
    dataset_len: usize,
    n_nodes: usize,
    samples_per_node: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>, LearnerError> {
    let needed = n_nodes * samples_per_node;
    if needed > dataset_len {
        return Err(LearnerError::NotEnoughData { needed, available: dataset_len });
    }
    let mut order: Vec<usize> = (0..dataset_len).collect();
    order.shuffle(&mut rng::stream(seed));
    Ok(order.chunks(samples_per_node.max(1)).take(n_nodes).map(<[usize]>::to_vec).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn blobs_shape_and_balance() {
        let ds: Dataset<f64> = synth_blobs(10, 32, 100, 0.3, 1).unwrap();
        assert_eq!(ds.len(), 1000);
        assert_eq!(ds.input_dim(), 32);
        assert_eq!(ds.num_classes(), 10);
        let mut counts = [0usize; 10];
        ds.labels().iter().for_each(|&l| counts[l] += 1);
        assert!(counts.iter().all(|&c| c == 100));
        // shuffled, not grouped by class
        assert_ne!(&ds.labels()[..100], &[0; 100][..]);
    }

    #[test]
    fn blobs_without_spread_sit_on_centers() {
        let src = BlobSource::new(4, 8, 3).unwrap();
        let ds: Dataset<f64> = src.sample(5, 0.0, 4).unwrap();
        for i in 0..ds.len() {
            assert_eq!(ds.row(i), &src.centers()[ds.labels()[i]][..]);
        }
        for c in src.centers() {
            let norm: f64 = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn blobs_are_deterministic() {
        let a: Dataset<f64> = synth_blobs(3, 4, 10, 0.5, 9).unwrap();
        let b: Dataset<f64> = synth_blobs(3, 4, 10, 0.5, 9).unwrap();
        assert_eq!(a, b);
        let c: Dataset<f64> = synth_blobs(3, 4, 10, 0.5, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn blob_params_validated() {
        assert!(synth_blobs::<f64>(0, 4, 10, 0.5, 9).is_err());
        assert!(synth_blobs::<f64>(3, 0, 10, 0.5, 9).is_err());
        assert!(synth_blobs::<f64>(3, 4, 0, 0.5, 9).is_err());
        assert!(synth_blobs::<f64>(3, 4, 10, -0.5, 9).is_err());
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(vec![0.0f64; 6], 3, vec![0, 1], 2).is_ok());
        assert!(Dataset::new(vec![0.0f64; 5], 3, vec![0, 1], 2).is_err());
        assert!(matches!(
            Dataset::new(vec![0.0f64; 6], 3, vec![0, 2], 2),
            Err(LearnerError::LabelOutOfRange { label: 2, num_classes: 2 })
        ));
    }

    #[test]
    fn partitions_are_disjoint() {
        let shards = partition(1000, 4, 250, 0).unwrap();
        assert_eq!(shards.len(), 4);
        let all: BTreeSet<_> = shards.iter().flatten().copied().collect();
        assert_eq!(all.len(), 1000);

        let shards = partition(1000, 4, 200, 0).unwrap();
        assert!(shards.iter().all(|s| s.len() == 200));
        let all: BTreeSet<_> = shards.iter().flatten().copied().collect();
        assert_eq!(all.len(), 800);

        assert!(matches!(
            partition(100, 4, 250, 0),
            Err(LearnerError::NotEnoughData { needed: 1000, available: 100 })
        ));
    }
}
