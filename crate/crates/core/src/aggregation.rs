//! Aggregation kernels over flat parameter vectors: FedAvg, Krum, and the
//! geometric median (Weiszfeld iteration).
//!
//! Every kernel takes its inputs as a slice of anything that views as `&[T]`,
//! so callers can pass owned [`ParamVec`]s or borrowed references without
//! copying model-sized buffers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::param::{squared_distance, ParamVec};
use crate::scalar::Scalar;

/// Distances below this are floored in the Weiszfeld update.
pub const WEISZFELD_DISTANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AggregationError {
    #[error("no updates to aggregate")]
    EmptyInput,
    #[error("update {index} has length {found}, expected {expected}")]
    DimensionMismatch { index: usize, expected: usize, found: usize },
    #[error("krum needs at least f + 3 = {needed} updates, got {got}")]
    TooFewUpdates { got: usize, needed: usize },
    #[error("{weights} geomed weights for {updates} updates")]
    WeightMismatch { weights: usize, updates: usize },
    #[error("invalid aggregator config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregatorKind {
    #[serde(rename = "fedavg")]
    FedAvg,
    Krum,
    #[serde(rename = "geomed")]
    GeoMed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregatorConfig {
    pub kind: AggregatorKind,
    /// Number of Byzantine updates Krum is asked to tolerate.
    pub f_assumed: usize,
    /// Per-update weights for the geometric median; uniform when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geomed_weights: Option<Vec<f64>>,
    pub geomed_tol: f64,
    pub geomed_max_iter: usize,
    /// Whether a node's own update joins its aggregation input.
    pub include_self: bool,
}

impl Default for AggregatorConfig {
    fn default() -> Self {
        Self {
            kind: AggregatorKind::FedAvg,
            f_assumed: 1,
            geomed_weights: None,
            geomed_tol: 1e-10,
            geomed_max_iter: 1000,
            include_self: true,
        }
    }
}

impl AggregatorConfig {
    pub fn new(kind: AggregatorKind) -> Self {
        Self { kind, ..Self::default() }
    }

    pub fn krum(f_assumed: usize) -> Self {
        Self { kind: AggregatorKind::Krum, f_assumed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), AggregationError> {
        if self.geomed_tol.is_nan() || self.geomed_tol <= 0.0 {
            return Err(AggregationError::InvalidConfig("geomed_tol must be > 0".into()));
        }
        if self.geomed_max_iter == 0 {
            return Err(AggregationError::InvalidConfig("geomed_max_iter must be >= 1".into()));
        }
        if let Some(w) = &self.geomed_weights {
            if w.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
                return Err(AggregationError::InvalidConfig(
                    "geomed_weights must be positive and finite".into(),
                ));
            }
        }
        Ok(())
    }
}

fn common_dim<T, U: AsRef<[T]>>(updates: &[U]) -> Result<usize, AggregationError> {
    let first = updates.first().ok_or(AggregationError::EmptyInput)?.as_ref().len();
    for (index, u) in updates.iter().enumerate() {
        let found = u.as_ref().len();
        if found != first {
            return Err(AggregationError::DimensionMismatch { index, expected: first, found });
        }
    }
    Ok(first)
}

/// Coordinate-wise arithmetic mean.
pub fn fedavg<T: Scalar, U: AsRef<[T]>>(updates: &[U]) -> Result<ParamVec<T>, AggregationError> {
    let d = common_dim(updates)?;
    let mut acc = vec![T::zero(); d];
    for u in updates {
        for (a, &x) in acc.iter_mut().zip(u.as_ref()) {
            *a += x;
        }
    }
    let m = T::lit(updates.len() as f64);
    acc.iter_mut().for_each(|a| *a /= m);
    Ok(acc.into())
}

/// Krum score of every update: the sum of squared distances to its
/// `m - f - 2` nearest other updates.
pub fn krum_scores<T: Scalar, U: AsRef<[T]>>(
    updates: &[U],
    f_assumed: usize,
) -> Result<Vec<T>, AggregationError> {
    let m = updates.len();
    let needed = f_assumed + 3;
    if m < needed {
        return Err(AggregationError::TooFewUpdates { got: m, needed });
    }
    common_dim(updates)?;
    let mut dist = vec![T::zero(); m * m];
    for i in 0..m {
        for j in i + 1..m {
            let d = squared_distance(updates[i].as_ref(), updates[j].as_ref());
            dist[i * m + j] = d;
            dist[j * m + i] = d;
        }
    }
    let nearest = m - f_assumed - 2;
    let mut row = Vec::with_capacity(m - 1);
    Ok((0..m)
        .map(|i| {
            row.clear();
            row.extend((0..m).filter(|&j| j != i).map(|j| dist[i * m + j]));
            row.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            row[..nearest].iter().copied().sum()
        })
        .collect())
}

/// Index of the Krum winner; ties go to the lowest index.
pub fn krum_select<T: Scalar, U: AsRef<[T]>>(
    updates: &[U],
    f_assumed: usize,
) -> Result<usize, AggregationError> {
    let scores = krum_scores(updates, f_assumed)?;
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s < scores[best] {
            best = i;
        }
    }
    Ok(best)
}

pub fn krum<T: Scalar, U: AsRef<[T]>>(
    updates: &[U],
    f_assumed: usize,
) -> Result<ParamVec<T>, AggregationError> {
    let winner = krum_select(updates, f_assumed)?;
    Ok(updates[winner].as_ref().to_vec().into())
}

/// Weighted geometric median by Weiszfeld iteration.
///
/// Starts at the weighted mean and stops once a step moves less than `tol`
/// or after `max_iter` steps. Weiszfeld converges slowly when the median sits
/// on an input point, so the last iterate is finally compared against the
/// inputs and the lower-objective point is returned.
pub fn geometric_median<T: Scalar, U: AsRef<[T]>>(
    updates: &[U],
    weights: Option<&[T]>,
    tol: T,
    max_iter: usize,
) -> Result<ParamVec<T>, AggregationError> {
    let d = common_dim(updates)?;
    let uniform;
    let weights = match weights {
        Some(w) if w.len() != updates.len() => {
            return Err(AggregationError::WeightMismatch { weights: w.len(), updates: updates.len() })
        }
        Some(w) => w,
        None => {
            uniform = vec![T::one(); updates.len()];
            &uniform[..]
        }
    };
    if updates.len() == 1 {
        return Ok(updates[0].as_ref().to_vec().into());
    }

    let total: T = weights.iter().copied().sum();
    let mut y = vec![T::zero(); d];
    for (u, &a) in updates.iter().zip(weights) {
        for (yk, &x) in y.iter_mut().zip(u.as_ref()) {
            *yk += a * x;
        }
    }
    y.iter_mut().for_each(|yk| *yk /= total);

    let floor = T::lit(WEISZFELD_DISTANCE_FLOOR);
    let mut next = vec![T::zero(); d];
    for _ in 0..max_iter {
        next.iter_mut().for_each(|v| *v = T::zero());
        let mut denom = T::zero();
        for (u, &a) in updates.iter().zip(weights) {
            let u = u.as_ref();
            let coef = a / squared_distance(u, &y).sqrt().max(floor);
            denom += coef;
            for (v, &x) in next.iter_mut().zip(u) {
                *v += coef * x;
            }
        }
        next.iter_mut().for_each(|v| *v /= denom);
        let step = squared_distance(&next, &y).sqrt();
        std::mem::swap(&mut y, &mut next);
        if step < tol {
            break;
        }
    }
    let at_iterate = geomed_objective(&y, updates, Some(weights));
    let best_input = updates
        .iter()
        .map(|u| (u, geomed_objective(u.as_ref(), updates, Some(weights))))
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    match best_input {
        Some((u, obj)) if obj < at_iterate => Ok(u.as_ref().to_vec().into()),
        _ => Ok(y.into()),
    }
}

/// Geometric median with the weights and stopping rule from `cfg`.
pub fn geomed<T: Scalar, U: AsRef<[T]>>(
    updates: &[U],
    cfg: &AggregatorConfig,
) -> Result<ParamVec<T>, AggregationError> {
    let weights: Option<Vec<T>> =
        cfg.geomed_weights.as_ref().map(|w| w.iter().map(|&a| T::lit(a)).collect());
    geometric_median(updates, weights.as_deref(), T::lit(cfg.geomed_tol), cfg.geomed_max_iter)
}

/// `Σ αⱼ ‖point − wⱼ‖`, the quantity the geometric median minimizes.
pub fn geomed_objective<T: Scalar, U: AsRef<[T]>>(
    point: &[T],
    updates: &[U],
    weights: Option<&[T]>,
) -> T {
    updates
        .iter()
        .enumerate()
        .map(|(j, u)| {
            let a = weights.map_or(T::one(), |w| w[j]);
            a * squared_distance(point, u.as_ref()).sqrt()
        })
        .sum()
}

/// Aggregates a node's own update with the updates received from neighbors.
///
/// With `include_self`, the own update is placed first, so it wins Krum ties.
pub fn aggregate<T: Scalar, U: AsRef<[T]>>(
    own: &[T],
    received: &[U],
    cfg: &AggregatorConfig,
) -> Result<ParamVec<T>, AggregationError> {
    let mut inputs: Vec<&[T]> = Vec::with_capacity(received.len() + 1);
    if cfg.include_self {
        inputs.push(own);
    }
    inputs.extend(received.iter().map(AsRef::as_ref));
    if let Some(index) = inputs.iter().position(|u| u.len() != own.len()) {
        return Err(AggregationError::DimensionMismatch {
            index,
            expected: own.len(),
            found: inputs[index].len(),
        });
    }
    combine(&inputs, cfg)
}

/// Runs the configured kernel over an already assembled input list.
pub fn combine<T: Scalar, U: AsRef<[T]>>(
    inputs: &[U],
    cfg: &AggregatorConfig,
) -> Result<ParamVec<T>, AggregationError> {
    let Some(first) = inputs.first() else {
        return Err(AggregationError::EmptyInput);
    };
    let d = first.as_ref().len();
    if let Some(index) = inputs.iter().position(|u| u.as_ref().len() != d) {
        return Err(AggregationError::DimensionMismatch {
            index,
            expected: d,
            found: inputs[index].as_ref().len(),
        });
    }
    match cfg.kind {
        AggregatorKind::FedAvg => fedavg(inputs),
        AggregatorKind::Krum => krum(inputs, cfg.f_assumed),
        AggregatorKind::GeoMed => geomed(inputs, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ParamVec<f64> {
        ParamVec::new(v.to_vec())
    }

    fn scalars(xs: &[f64]) -> Vec<ParamVec<f64>> {
        xs.iter().map(|&x| pv(&[x])).collect()
    }

    #[test]
    fn fedavg_examples() {
        assert_eq!(fedavg(&[pv(&[1., 1.]), pv(&[3., 3.])]).unwrap(), pv(&[2., 2.]));
        assert_eq!(fedavg(&[pv(&[4., -7.])]).unwrap(), pv(&[4., -7.]));
        assert_eq!(
            fedavg(&[pv(&[0., 0.]), pv(&[0., 0.]), pv(&[3., -3.])]).unwrap(),
            pv(&[1., -1.])
        );
    }

    #[test]
    fn fedavg_errors() {
        let empty: [ParamVec<f64>; 0] = [];
        assert_eq!(fedavg(&empty), Err(AggregationError::EmptyInput));
        assert_eq!(
            fedavg(&[pv(&[1.]), pv(&[1., 2.])]),
            Err(AggregationError::DimensionMismatch { index: 1, expected: 1, found: 2 })
        );
    }

    #[test]
    fn fedavg_in_f32() {
        let u = [ParamVec::new(vec![1.0f32, 2.0]), ParamVec::new(vec![3.0f32, 4.0])];
        assert_eq!(fedavg(&u).unwrap().as_slice(), &[2.0f32, 3.0]);
    }

    #[test]
    fn krum_scores_example() {
        // subset size 4 - 1 - 2 = 1: each score is the squared distance to the nearest other
        let u = scalars(&[0.0, 0.1, 0.2, 10.0]);
        let s = krum_scores(&u, 1).unwrap();
        let expected = [0.01, 0.01, 0.01, 96.04];
        for (a, b) in s.iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn krum_three_way_tie() {
        let u = scalars(&[0.0, 0.1, 0.2, 10.0]);
        assert_eq!(krum(&u, 1).unwrap(), pv(&[0.0]));
    }

    #[test]
    fn krum_tie_goes_to_lowest_index() {
        // exact ties: |0 - 0.5|^2 and |0.5 - 1|^2 are both 0.25 in binary floating point
        let u = scalars(&[0.0, 0.5, 1.0, 10.0]);
        assert_eq!(krum_select(&u, 1).unwrap(), 0);
        assert_eq!(krum(&u, 1).unwrap(), pv(&[0.0]));
    }

    #[test]
    fn krum_majority_identical() {
        assert_eq!(krum(&scalars(&[5., 5., 5., 99.]), 1).unwrap(), pv(&[5.]));
        let same = vec![pv(&[1., 2.]); 5];
        assert!(krum_scores(&same, 1).unwrap().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn krum_precondition() {
        assert_eq!(
            krum_scores(&scalars(&[1., 2., 3.]), 1),
            Err(AggregationError::TooFewUpdates { got: 3, needed: 4 })
        );
        assert!(krum_scores(&scalars(&[1., 2., 3.]), 0).is_ok());
    }

    #[test]
    fn geomed_examples() {
        let cfg = AggregatorConfig::new(AggregatorKind::GeoMed);
        let v = pv(&[1.5, -2.0, 3.0]);
        assert_eq!(geomed(&vec![v.clone(); 4], &cfg).unwrap(), v);

        let cross = [pv(&[1., 0.]), pv(&[-1., 0.]), pv(&[0., 1.]), pv(&[0., -1.])];
        let m = geomed(&cross, &cfg).unwrap();
        assert!(m.norm() < 1e-8);

        let m = geomed(&scalars(&[1., 2., 100.]), &cfg).unwrap();
        assert_abs_diff_eq!(m[0], 2.0, epsilon = 1e-6);
    }

    #[test]
    fn geomed_one_dimensional_matches_grid_scan() {
        let xs = [1.0, 2.0, 100.0];
        let objective = |w: f64| xs.iter().map(|x| (w - x).abs()).sum::<f64>();
        let best = (0..=100_000)
            .map(|i| i as f64 * 1e-3)
            .min_by(|a, b| objective(*a).partial_cmp(&objective(*b)).unwrap())
            .unwrap();
        let m = geomed(&scalars(&xs), &AggregatorConfig::new(AggregatorKind::GeoMed)).unwrap();
        assert_abs_diff_eq!(m[0], best, epsilon = 1e-6);
    }

    #[test]
    fn geomed_weight_errors() {
        let cfg = AggregatorConfig {
            kind: AggregatorKind::GeoMed,
            geomed_weights: Some(vec![1.0, 2.0]),
            ..AggregatorConfig::default()
        };
        assert_eq!(
            geomed(&scalars(&[1., 2., 3.]), &cfg),
            Err(AggregationError::WeightMismatch { weights: 2, updates: 3 })
        );
    }

    #[test]
    fn geomed_weights_pull_toward_heavy_point() {
        let cfg = AggregatorConfig {
            kind: AggregatorKind::GeoMed,
            geomed_weights: Some(vec![1.0, 1.0, 5.0]),
            ..AggregatorConfig::default()
        };
        // the heavy point outweighs the other two combined, so it is the median
        let m = geomed(&[pv(&[0., 0.]), pv(&[1., 0.]), pv(&[0., 3.])], &cfg).unwrap();
        assert!(m.distance(&[0., 3.]) < 1e-6, "{m:?}");
    }

    #[test]
    fn config_validation() {
        assert!(AggregatorConfig::default().validate().is_ok());
        let bad = [
            AggregatorConfig { geomed_tol: 0.0, ..Default::default() },
            AggregatorConfig { geomed_max_iter: 0, ..Default::default() },
            AggregatorConfig { geomed_weights: Some(vec![1.0, -1.0]), ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn aggregate_examples() {
        let fedavg_cfg = AggregatorConfig::new(AggregatorKind::FedAvg);
        assert_eq!(aggregate(&[2.0], &[pv(&[4.0])], &fedavg_cfg).unwrap(), pv(&[3.0]));

        // scores: own 0.01, 0.1 -> 0.01, 9 -> 8.41^2; own is first and wins the tie
        let krum_cfg = AggregatorConfig::krum(0);
        let received = [pv(&[0.1]), pv(&[9.0])];
        let out = aggregate(&[0.0], &received, &krum_cfg).unwrap();
        let inputs = [pv(&[0.0]), pv(&[0.1]), pv(&[9.0])];
        let oracle = (0..3)
            .map(|j| {
                (0..3)
                    .filter(|&i| i != j)
                    .map(|i| (inputs[i][0] - inputs[j][0]).powi(2))
                    .fold(f64::INFINITY, f64::min)
            })
            .enumerate()
            .fold((0, f64::INFINITY), |best, (j, s)| if s < best.1 { (j, s) } else { best });
        assert_eq!(out, inputs[oracle.0]);
        assert_eq!(out, pv(&[0.0]));

        let geo_cfg = AggregatorConfig::new(AggregatorKind::GeoMed);
        let none: [ParamVec<f64>; 0] = [];
        assert_eq!(aggregate(&[7.0, 8.0], &none, &geo_cfg).unwrap(), pv(&[7.0, 8.0]));
    }

    #[test]
    fn aggregate_without_self() {
        let cfg = AggregatorConfig { include_self: false, ..Default::default() };
        let none: [ParamVec<f64>; 0] = [];
        assert_eq!(aggregate(&[1.0], &none, &cfg), Err(AggregationError::EmptyInput));
        assert_eq!(aggregate(&[100.0], &[pv(&[1.0]), pv(&[3.0])], &cfg).unwrap(), pv(&[2.0]));
        assert_eq!(
            aggregate(&[1.0], &[pv(&[1.0, 2.0])], &cfg),
            Err(AggregationError::DimensionMismatch { index: 0, expected: 1, found: 2 })
        );
    }

    #[test]
    fn breakdown_contrast() {
        let v = [1.0, -2.0, 0.5];
        let m = 6;
        let mut last_geo_dist = 0.0;
        for r in [1e1, 1e3, 1e6] {
            let mut updates = vec![pv(&v); m - 1];
            updates.push(pv(&[v[0] + r, v[1], v[2]]));
            let avg = fedavg(&updates).unwrap();
            assert_abs_diff_eq!(avg.distance(&v), r / m as f64, epsilon = 1e-9 * r);
            assert_eq!(krum(&updates, 1).unwrap(), pv(&v));
            let geo = geomed(&updates, &AggregatorConfig::new(AggregatorKind::GeoMed)).unwrap();
            let geo_dist = geo.distance(&v);
            assert!(geo_dist < 1e-6, "r={r}: {geo_dist}");
            last_geo_dist = geo_dist;
        }
        assert!(last_geo_dist < 1e-6);
    }

    fn instance() -> impl Strategy<Value = Vec<Vec<f64>>> {
        instance_with_dim(1)
    }

    // the geometric median is unique only for non-collinear points, so
    // invariance checks on it start at d = 2
    fn instance_with_dim(min_d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        (4usize..8, min_d..4).prop_flat_map(|(m, d)| {
            proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, d), m)
        })
    }

    fn to_params(rows: &[Vec<f64>]) -> Vec<ParamVec<f64>> {
        rows.iter().map(|r| pv(r)).collect()
    }

    proptest! {
        #[test]
        fn fedavg_and_geomed_are_permutation_invariant(rows in instance_with_dim(2), rot in 0usize..8) {
            let u = to_params(&rows);
            let mut shuffled = u.clone();
            let rot = rot % shuffled.len();
            shuffled.rotate_left(rot);
            shuffled.swap(0, 1);
            let a = fedavg(&u).unwrap();
            let b = fedavg(&shuffled).unwrap();
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            let cfg = AggregatorConfig::new(AggregatorKind::GeoMed);
            let a = geomed(&u, &cfg).unwrap();
            let b = geomed(&shuffled, &cfg).unwrap();
            prop_assert!(a.distance(&b) < 1e-7);
        }

        #[test]
        fn krum_selects_an_input_independent_of_order(rows in instance(), rot in 0usize..8) {
            let u = to_params(&rows);
            let f = u.len() - 3;
            let out = krum(&u, f).unwrap();
            prop_assert!(u.contains(&out));
            let mut shuffled = u.clone();
            shuffled.rotate_left(rot % u.len());
            let scores = krum_scores(&u, f).unwrap();
            let mut sorted = scores.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            // only compare when the winner is unambiguous
            if sorted[1] - sorted[0] > 1e-9 {
                prop_assert_eq!(krum(&shuffled, f).unwrap(), out);
            }
        }

        #[test]
        fn kernels_are_translation_equivariant(rows in instance_with_dim(2), shift in proptest::collection::vec(-50.0f64..50.0, 3)) {
            let u = to_params(&rows);
            let d = u[0].len();
            let moved: Vec<_> = u.iter().map(|v| v.iter().zip(&shift).map(|(x, c)| x + c).collect::<ParamVec<f64>>()).collect();
            let shifted = |p: &ParamVec<f64>| p.iter().zip(&shift).map(|(x, c)| x + c).collect::<ParamVec<f64>>();

            let a = shifted(&fedavg(&u).unwrap());
            prop_assert!(a.distance(&fedavg(&moved).unwrap()) < 1e-9);

            let f = u.len() - 3;
            let scores = krum_scores(&u, f).unwrap();
            let mut sorted = scores.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if sorted[1] - sorted[0] > 1e-6 {
                prop_assert_eq!(krum_select(&u, f).unwrap(), krum_select(&moved, f).unwrap());
            }

            let cfg = AggregatorConfig::new(AggregatorKind::GeoMed);
            let a = shifted(&geomed(&u, &cfg).unwrap());
            let b = geomed(&moved, &cfg).unwrap();
            prop_assert!(a.distance(&b) < 1e-6 * (d as f64), "{:?} vs {:?}", a, b);
        }

        #[test]
        fn geomed_beats_every_input_point(rows in instance()) {
            let u = to_params(&rows);
            let m = geomed(&u, &AggregatorConfig::new(AggregatorKind::GeoMed)).unwrap();
            let at_median = geomed_objective(&m, &u, None);
            for p in &u {
                prop_assert!(at_median <= geomed_objective(p, &u, None) + 1e-6);
            }
        }
    }
}
