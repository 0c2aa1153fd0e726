//! Byzantine placement strategies and the Gaussian noise attack.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::param::ParamVec;
use crate::rng;
use crate::scalar::Scalar;
use crate::topology::{Graph, RewireLog};

// floor(b * n) is taken after adding this, so 0.29 * 100 selects 29 nodes
const COUNT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdversaryError {
    #[error("proportion must be in [0, 1], got {0}")]
    InvalidProportion(f64),
    #[error("rewire log names node {node}, but the graph has {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("attack std must be positive and finite, got {0}")]
    InvalidStd(f64),
}

/// How the Byzantine set was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum Placement {
    Random { proportion: f64 },
    SmallWorldRewired,
    ScaleFreeTopDegree { b: f64 },
}

/// The Byzantine node set together with the strategy that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryPlan {
    pub byzantine: BTreeSet<usize>,
    #[serde(flatten)]
    pub placement: Placement,
    pub seed: u64,
}

impl AdversaryPlan {
    /// Plan with no Byzantine nodes.
    pub fn none() -> Self {
        Self {
            byzantine: BTreeSet::new(),
            placement: Placement::Random { proportion: 0.0 },
            seed: 0,
        }
    }

    pub fn is_byzantine(&self, node: usize) -> bool {
        self.byzantine.contains(&node)
    }

    pub fn count(&self) -> usize {
        self.byzantine.len()
    }
}

fn check_proportion(p: f64) -> Result<(), AdversaryError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(AdversaryError::InvalidProportion(p))
    }
}

/// Exactly `round(proportion * n)` distinct nodes, uniformly without replacement.
pub fn select_random(n: usize, proportion: f64, seed: u64) -> Result<AdversaryPlan, AdversaryError> {
    check_proportion(proportion)?;
    let count = ((proportion * n as f64).round() as usize).min(n);
    let mut stream = rng::stream(seed);
    let byzantine = rand::seq::index::sample(&mut stream, n, count).into_iter().collect();
    Ok(AdversaryPlan { byzantine, placement: Placement::Random { proportion }, seed })
}

/// The new endpoint of every rewired edge, deduplicated.
pub fn select_smallworld_strategic(log: &RewireLog, n: usize) -> Result<AdversaryPlan, AdversaryError> {
    let byzantine: BTreeSet<usize> = log.entries.iter().map(|r| r.new).collect();
    if let Some(&node) = byzantine.iter().find(|&&v| v >= n) {
        return Err(AdversaryError::NodeOutOfRange { node, n });
    }
    Ok(AdversaryPlan { byzantine, placement: Placement::SmallWorldRewired, seed: 0 })
}

/// The first `floor(b * n)` entries of the degree sequence.
pub fn select_scalefree_strategic(g: &Graph, b: f64) -> Result<AdversaryPlan, AdversaryError> {
    check_proportion(b)?;
    let n = g.node_count();
    let count = ((b * n as f64 + COUNT_EPS).floor() as usize).min(n);
    let byzantine = g.degree_sequence().into_iter().take(count).map(|(v, _)| v).collect();
    Ok(AdversaryPlan { byzantine, placement: Placement::ScaleFreeTopDegree { b }, seed: 0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    GaussianNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub kind: AttackKind,
    pub mean: f64,
    pub std: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self { kind: AttackKind::GaussianNoise, mean: 0.0, std: 1.0 }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<(), AdversaryError> {
        if self.std > 0.0 && self.std.is_finite() && self.mean.is_finite() {
            Ok(())
        } else {
            Err(AdversaryError::InvalidStd(self.std))
        }
    }
}

/// `d` independent Normal(mean, std²) draws from `stream`.
pub fn gaussian_attack<T: Scalar, R: Rng + ?Sized>(
    d: usize,
    cfg: &AttackConfig,
    stream: &mut R,
) -> Result<ParamVec<T>, AdversaryError> {
    cfg.validate()?;
    let normal = Normal::new(cfg.mean, cfg.std).map_err(|_| AdversaryError::InvalidStd(cfg.std))?;
    Ok((0..d).map(|_| T::lit(normal.sample(stream))).collect())
}
