//! Independent reference implementations used to cross-check the kernels.
//!
//! Nothing here calls into the code under test except to obtain the value
//! being checked. The references are slow and only meant for tiny instances.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::aggregation;
use crate::learner::{self, Model};
use crate::rng;

pub const KRUM_INSTANCES: usize = 200;
pub const GEOMED_INSTANCES: usize = 50;
pub const GRAD_INSTANCES: usize = 50;
pub const GEOMED_TOLERANCE: f64 = 1e-6;
pub const GRAD_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_ORACLE_SEED: u64 = 20240917;

/// Calls `visit` with every `k`-subset of `items`, in lexicographic order.
fn for_each_subset(items: &[usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    fn rec(items: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            visit(cur);
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            rec(items, k, i + 1, cur, visit);
            cur.pop();
        }
    }
    rec(items, k, 0, &mut Vec::with_capacity(k), visit);
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Krum winner by exhaustive search: each candidate's score is the minimum,
/// over all `(m - f - 2)`-subsets of the other updates, of the summed squared
/// distances. Ties go to the lowest index.
pub fn brute_force_krum(updates: &[Vec<f64>], f: usize) -> usize {
    let m = updates.len();
    assert!(m >= f + 3, "brute_force_krum needs m >= f + 3");
    let k = m - f - 2;
    let mut best = (f64::INFINITY, 0);
    for i in 0..m {
        let others: Vec<usize> = (0..m).filter(|&j| j != i).collect();
        let mut score = f64::INFINITY;
        for_each_subset(&others, k, &mut |s| {
            score = score.min(s.iter().map(|&j| sq_dist(&updates[i], &updates[j])).sum());
        });
        if score < best.0 {
            best = (score, i);
        }
    }
    best.1
}

/// `Σ wⱼ ‖x − pⱼ‖`.
pub fn weighted_distance_sum(x: &[f64], points: &[Vec<f64>], weights: &[f64]) -> f64 {
    points.iter().zip(weights).map(|(p, w)| w * sq_dist(x, p).sqrt()).sum()
}

/// Minimizer of [`weighted_distance_sum`] for `d <= 3`: a grid scan over the
/// bounding box, then a pattern search over all `3^d - 1` compass and diagonal
/// directions, restarted from every input point as well.
pub fn geomed_reference(points: &[Vec<f64>], weights: &[f64]) -> (Vec<f64>, f64) {
    let d = points[0].len();
    assert!((1..=3).contains(&d), "grid reference supports d <= 3");
    let obj = |x: &[f64]| weighted_distance_sum(x, points, weights);

    let lo: Vec<f64> = (0..d).map(|c| points.iter().map(|p| p[c]).fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..d).map(|c| points.iter().map(|p| p[c]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let steps: usize = [0, 2001, 101, 31][d];
    let mut starts: Vec<Vec<f64>> = points.to_vec();
    let mut best_grid = (f64::INFINITY, lo.clone());
    let total = steps.pow(d as u32);
    let mut x = vec![0.0; d];
    for idx in 0..total {
        let mut r = idx;
        for c in 0..d {
            let t = (r % steps) as f64 / (steps - 1) as f64;
            r /= steps;
            x[c] = lo[c] + t * (hi[c] - lo[c]);
        }
        let v = obj(&x);
        if v < best_grid.0 {
            best_grid = (v, x.clone());
        }
    }
    starts.push(best_grid.1);

    let dirs: Vec<Vec<f64>> = (0..3usize.pow(d as u32))
        .map(|code| {
            let mut r = code;
            (0..d)
                .map(|_| {
                    let v = (r % 3) as f64 - 1.0;
                    r /= 3;
                    v
                })
                .collect::<Vec<f64>>()
        })
        .filter(|v| v.iter().any(|&c| c != 0.0))
        .map(|v| {
            let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            v.into_iter().map(|c| c / n).collect()
        })
        .collect();
    let span = (0..d).map(|c| hi[c] - lo[c]).fold(0.0, f64::max).max(1e-3);

    let mut best = (f64::INFINITY, Vec::new());
    for start in starts {
        let mut x = start;
        let mut fx = obj(&x);
        let mut step = span / 10.0;
        while step > 1e-13 {
            let mut improved = false;
            for dir in &dirs {
                let y: Vec<f64> = x.iter().zip(dir).map(|(a, b)| a + step * b).collect();
                let fy = obj(&y);
                if fy < fx {
                    x = y;
                    fx = fy;
                    improved = true;
                    break;
                }
            }
            if !improved {
                step /= 2.0;
            }
        }
        if fx < best.0 {
            best = (fx, x);
        }
    }
    (best.1, best.0)
}

fn reference_loss(params: &[f64], c: usize, d: usize, features: &[f64], labels: &[usize]) -> f64 {
    let (w, b) = params.split_at(c * d);
    let mut total = 0.0;
    for (x, &y) in features.chunks_exact(d).zip(labels) {
        let z: Vec<f64> = (0..c).map(|k| b[k] + (0..d).map(|j| w[k * d + j] * x[j]).sum::<f64>()).collect();
        let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = zmax + z.iter().map(|v| (v - zmax).exp()).sum::<f64>().ln();
        total += lse - z[y];
    }
    total / labels.len() as f64
}

/// Central finite-difference gradient of the mean cross-entropy.
pub fn finite_difference_gradient(
    params: &[f64],
    num_classes: usize,
    input_dim: usize,
    features: &[f64],
    labels: &[usize],
    h: f64,
) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = reference_loss(&p, num_classes, input_dim, features, labels);
            p[i] = orig - h;
            let down = reference_loss(&p, num_classes, input_dim, features, labels);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a − b| / max(|a|, |b|, 1e-4)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KrumInstance {
    pub f: usize,
    pub updates: Vec<Vec<f64>>,
    pub kernel_index: usize,
    pub reference_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeomedInstance {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub kernel_objective: f64,
    pub reference_objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradInstance {
    pub num_classes: usize,
    pub input_dim: usize,
    pub params: Vec<f64>,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum FailingInstance {
    Krum(KrumInstance),
    Geomed(GeomedInstance),
    Grad(GradInstance),
}

/// Outcome of one oracle batch.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub name: &'static str,
    pub instances: usize,
    pub passed: usize,
    /// Largest observed error (objective gap or relative error); zero for Krum.
    pub max_error: f64,
    pub tolerance: f64,
    pub first_failure: Option<FailingInstance>,
}

impl OracleReport {
    pub fn ok(&self) -> bool {
        self.passed == self.instances
    }

    pub fn summary(&self) -> String {
        let verdict = if self.ok() { "PASS" } else { "FAIL" };
        match self.name {
            "krum" => format!("{verdict} {}/{}", self.passed, self.instances),
            _ => format!(
                "{verdict} {}/{} max_error={:.3e} tolerance={:.0e}",
                self.passed, self.instances, self.max_error, self.tolerance
            ),
        }
    }
}

fn uniform_points<R: Rng>(rng: &mut R, m: usize, d: usize) -> Vec<Vec<f64>> {
    (0..m).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

/// Kernel Krum selection versus [`brute_force_krum`] on `count` instances
/// with `m ∈ 4..=6`, `d ∈ 1..=3`, `f ∈ 0..=m-3`.
pub fn run_krum_oracle(count: usize, seed: u64) -> OracleReport {
    let mut rng = rng::stream(seed);
    let mut report =
        OracleReport { name: "krum", instances: count, passed: 0, max_error: 0.0, tolerance: 0.0, first_failure: None };
    for _ in 0..count {
        let m = rng.random_range(4..=6);
        let d = rng.random_range(1..=3);
        let f = rng.random_range(0..=m - 3);
        let updates = uniform_points(&mut rng, m, d);
        let kernel_index = aggregation::krum_select(&updates, f).expect("m >= f + 3 by construction");
        let reference_index = brute_force_krum(&updates, f);
        if kernel_index == reference_index {
            report.passed += 1;
        } else if report.first_failure.is_none() {
            report.first_failure =
                Some(FailingInstance::Krum(KrumInstance { f, updates, kernel_index, reference_index }));
        }
    }
    report
}

/// Weiszfeld objective versus [`geomed_reference`] on `count` instances with
/// `m ∈ 1..=7` and `d ∈ 1..=3`. Half use random weights, and some contain
/// duplicated points so the median can sit on an input.
pub fn run_geomed_oracle(count: usize, seed: u64) -> OracleReport {
    let mut rng = rng::stream(seed);
    let mut report = OracleReport {
        name: "geomed",
        instances: count,
        passed: 0,
        max_error: 0.0,
        tolerance: GEOMED_TOLERANCE,
        first_failure: None,
    };
    for i in 0..count {
        let m = rng.random_range(1..=7);
        let d = rng.random_range(1..=3);
        let mut points = uniform_points(&mut rng, m, d);
        if i % 5 == 4 && m >= 3 {
            points[1] = points[0].clone();
            points[2] = points[0].clone();
        }
        let weights: Vec<f64> =
            if i % 2 == 0 { vec![1.0; m] } else { (0..m).map(|_| rng.random_range(0.1..2.0)).collect() };
        let median = aggregation::geometric_median(&points, Some(&weights), 1e-10, 1000)
            .expect("well-formed instance");
        let kernel_objective = weighted_distance_sum(&median, &points, &weights);
        let (_, reference_objective) = geomed_reference(&points, &weights);
        let gap = kernel_objective - reference_objective;
        report.max_error = report.max_error.max(gap);
        if gap <= GEOMED_TOLERANCE {
            report.passed += 1;
        } else if report.first_failure.is_none() {
            report.first_failure = Some(FailingInstance::Geomed(GeomedInstance {
                points,
                weights,
                kernel_objective,
                reference_objective,
            }));
        }
    }
    report
}

/// Analytic gradient versus central differences on `count` small softmax
/// regression instances.
pub fn run_grad_oracle(count: usize, seed: u64) -> OracleReport {
    let mut rng = rng::stream(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut report = OracleReport {
        name: "grad",
        instances: count,
        passed: 0,
        max_error: 0.0,
        tolerance: GRAD_TOLERANCE,
        first_failure: None,
    };
    for _ in 0..count {
        let c = rng.random_range(2..=5);
        let d = rng.random_range(1..=6);
        let rows = rng.random_range(1..=8);
        let params: Vec<f64> = (0..c * d + c).map(|_| 0.5 * normal.sample(&mut rng)).collect();
        let features: Vec<f64> = (0..rows * d).map(|_| normal.sample(&mut rng)).collect();
        let labels: Vec<usize> = (0..rows).map(|_| rng.random_range(0..c)).collect();
        let model = Model::unflatten(&params, c, d).expect("consistent shape");
        let analytic = learner::gradient(&model, &features, &labels).expect("consistent batch");
        let numeric = finite_difference_gradient(&params, c, d, &features, &labels, 1e-5);
        let err = analytic.iter().zip(&numeric).map(|(&a, &b)| relative_error(a, b)).fold(0.0, f64::max);
        report.max_error = report.max_error.max(err);
        if err <= GRAD_TOLERANCE {
            report.passed += 1;
        } else if report.first_failure.is_none() {
            report.first_failure = Some(FailingInstance::Grad(GradInstance {
                num_classes: c,
                input_dim: d,
                params,
                features,
                labels,
                max_relative_error: err,
            }));
        }
    }
    report
}
