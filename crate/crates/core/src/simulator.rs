//! The decentralized training protocol: every round, honest nodes train
//! locally, Byzantine nodes emit noise, everyone exchanges with graph neighbors,
//! and honest nodes aggregate what they received.
//!
//! Rounds are synchronous. All nodes read the same pre-round snapshot and
//! every random draw comes from a stream keyed by `(master seed, node, round)`,
//! so results do not depend on node processing order or on thread count.

use std::fmt;
use std::path::PathBuf;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{self, AdversaryError, AdversaryPlan, AttackConfig};
use crate::aggregation::{self, AggregationError, AggregatorConfig};
use crate::learner::{self, BlobSource, LearnerError, TrainingConfig};
use crate::rng::{self, tags};
use crate::topology::{self, Graph, RewireLog, ScaleFreeParams, SmallWorldParams, TopologyError};
use crate::{Dataset, Model, ParamVector};

/// Standard deviation of the shared initial parameters.
pub const INIT_STD: f64 = 0.01;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("config error at `{key}`: {msg}")]
    Config { key: String, msg: String },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error("aggregation failed at node {node} in round {round}: {source}")]
    Aggregation {
        node: usize,
        round: usize,
        #[source]
        source: AggregationError,
    },
    #[error("no honest nodes to evaluate")]
    NoHonestNodes,
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

impl SimulationError {
    fn config(key: &str, msg: impl fmt::Display) -> Self {
        Self::Config { key: key.to_string(), msg: msg.to_string() }
    }

    /// True when the error stems from the experiment configuration rather than
    /// from something that happened while running it.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Self::Config { .. }
                | Self::Topology(TopologyError::InvalidParams(_))
                | Self::Adversary(AdversaryError::InvalidProportion(_) | AdversaryError::InvalidStd(_))
                | Self::Learner(LearnerError::NotEnoughData { .. } | LearnerError::InvalidParams(_))
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    SmallWorld,
    ScaleFree,
    Complete,
}

/// Which graph to build. Fields not used by `kind` are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologySpec {
    pub kind: TopologyKind,
    pub n: usize,
    /// Small-world lattice degree.
    pub k: usize,
    /// Small-world rewiring probability.
    pub beta: f64,
    /// Scale-free core size.
    pub m0: usize,
    /// Scale-free edges per arriving node.
    pub m: usize,
    /// Derived from the master seed when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for TopologySpec {
    fn default() -> Self {
        Self { kind: TopologyKind::SmallWorld, n: 128, k: 4, beta: 0.1, m0: 10, m: 10, seed: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementKind {
    None,
    Random,
    SmallWorldRewired,
    ScaleFreeTopDegree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdversarySpec {
    pub placement: PlacementKind,
    /// Byzantine fraction for random placement.
    pub proportion: f64,
    /// Fraction of top-degree nodes for scale-free strategic placement.
    pub b: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub attack: AttackConfig,
}

impl Default for AdversarySpec {
    fn default() -> Self {
        Self {
            placement: PlacementKind::None,
            proportion: 0.0,
            b: 0.0,
            seed: None,
            attack: AttackConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Blobs,
    Mnist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub num_classes: usize,
    pub input_dim: usize,
    pub samples_per_class: usize,
    pub spread: f64,
    pub test_samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Blobs,
            num_classes: 10,
            input_dim: 32,
            samples_per_class: 3200,
            spread: 0.25,
            test_samples: 2000,
            seed: None,
            train_images: "data/mnist/train-images-idx3-ubyte".into(),
            train_labels: "data/mnist/train-labels-idx1-ubyte".into(),
            test_images: "data/mnist/t10k-images-idx3-ubyte".into(),
            test_labels: "data/mnist/t10k-labels-idx1-ubyte".into(),
        }
    }
}

/// Everything needed to reproduce one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub rounds: usize,
    pub master_seed: u64,
    pub topology: TopologySpec,
    pub adversary: AdversarySpec,
    pub aggregator: AggregatorConfig,
    pub training: TrainingConfig,
    pub dataset: DatasetSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            rounds: 30,
            master_seed: 0,
            topology: TopologySpec::default(),
            adversary: AdversarySpec::default(),
            aggregator: AggregatorConfig::default(),
            training: TrainingConfig::default(),
            dataset: DatasetSpec::default(),
        }
    }
}

impl ExperimentConfig {
    /// Copy with every optional seed materialized from the master seed.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        let master = self.master_seed;
        out.topology.seed.get_or_insert(rng::derive_seed63(master, &[tags::TOPOLOGY]));
        out.adversary.seed.get_or_insert(rng::derive_seed63(master, &[tags::ADVERSARY]));
        out.dataset.seed.get_or_insert(rng::derive_seed63(master, &[tags::DATASET]));
        out
    }

    /// Checks every field that can be checked without building anything.
    pub fn validate(&self) -> Result<(), SimulationError> {
        fn err(key: &str, msg: impl fmt::Display) -> SimulationError {
            SimulationError::config(key, msg)
        }
        if self.rounds == 0 {
            return Err(err("rounds", "must be >= 1"));
        }
        for (key, seed) in [
            ("master_seed", Some(self.master_seed)),
            ("topology.seed", self.topology.seed),
            ("adversary.seed", self.adversary.seed),
            ("dataset.seed", self.dataset.seed),
        ] {
            if seed.is_some_and(|s| s > i64::MAX as u64) {
                return Err(err(key, "must fit in 63 bits"));
            }
        }

        let t = &self.topology;
        if t.n == 0 {
            return Err(err("topology.n", "must be >= 1"));
        }
        match t.kind {
            TopologyKind::SmallWorld => {
                if t.k < 2 || !t.k.is_multiple_of(2) {
                    return Err(err("topology.k", format!("must be even and >= 2, got {}", t.k)));
                }
                if t.k >= t.n {
                    return Err(err("topology.k", format!("must be < n = {}, got {}", t.n, t.k)));
                }
                if !(0.0..=1.0).contains(&t.beta) {
                    return Err(err("topology.beta", format!("must be in [0, 1], got {}", t.beta)));
                }
            }
            TopologyKind::ScaleFree => {
                if t.m0 > t.n {
                    return Err(err("topology.m0", format!("must be <= n = {}, got {}", t.n, t.m0)));
                }
                if t.m < 1 || t.m > t.m0 {
                    return Err(err("topology.m", format!("must be in 1..=m0 ({}), got {}", t.m0, t.m)));
                }
            }
            TopologyKind::Complete => {}
        }

        let a = &self.adversary;
        match a.placement {
            PlacementKind::Random if !(0.0..=1.0).contains(&a.proportion) => {
                return Err(err("adversary.proportion", format!("must be in [0, 1], got {}", a.proportion)));
            }
            PlacementKind::ScaleFreeTopDegree if !(0.0..=1.0).contains(&a.b) => {
                return Err(err("adversary.b", format!("must be in [0, 1], got {}", a.b)));
            }
            PlacementKind::SmallWorldRewired if t.kind != TopologyKind::SmallWorld => {
                return Err(err("adversary.placement", "small_world_rewired needs a small_world topology"));
            }
            _ => {}
        }
        if !(a.attack.std > 0.0 && a.attack.std.is_finite()) {
            return Err(err("adversary.attack.std", format!("must be positive, got {}", a.attack.std)));
        }
        if !a.attack.mean.is_finite() {
            return Err(err("adversary.attack.mean", "must be finite"));
        }

        let g = &self.aggregator;
        if g.geomed_tol.is_nan() || g.geomed_tol <= 0.0 {
            return Err(err("aggregator.geomed_tol", "must be > 0"));
        }
        if g.geomed_max_iter == 0 {
            return Err(err("aggregator.geomed_max_iter", "must be >= 1"));
        }
        if let Some(w) = &g.geomed_weights {
            if w.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(err("aggregator.geomed_weights", "must be positive and finite"));
            }
        }

        let tr = &self.training;
        if tr.batch_size == 0 {
            return Err(err("training.batch_size", "must be >= 1"));
        }
        if tr.samples_per_node == 0 {
            return Err(err("training.samples_per_node", "must be >= 1"));
        }
        if tr.batch_size > tr.samples_per_node {
            return Err(err("training.batch_size", "must not exceed training.samples_per_node"));
        }
        if !(tr.learning_rate > 0.0 && tr.learning_rate.is_finite()) {
            return Err(err("training.learning_rate", "must be positive"));
        }
        if !(0.0..1.0).contains(&tr.adam_beta1) {
            return Err(err("training.adam_beta1", "must be in [0, 1)"));
        }
        if !(0.0..1.0).contains(&tr.adam_beta2) {
            return Err(err("training.adam_beta2", "must be in [0, 1)"));
        }
        if tr.adam_eps.is_nan() || tr.adam_eps <= 0.0 {
            return Err(err("training.adam_eps", "must be positive"));
        }

        let d = &self.dataset;
        if d.kind == DatasetKind::Blobs {
            if d.num_classes == 0 {
                return Err(err("dataset.num_classes", "must be >= 1"));
            }
            if d.input_dim == 0 {
                return Err(err("dataset.input_dim", "must be >= 1"));
            }
            if d.samples_per_class == 0 {
                return Err(err("dataset.samples_per_class", "must be >= 1"));
            }
            if !(d.spread >= 0.0 && d.spread.is_finite()) {
                return Err(err("dataset.spread", "must be >= 0"));
            }
            if d.test_samples < d.num_classes {
                return Err(err("dataset.test_samples", "must be >= num_classes"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Honest,
    Byzantine,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Honest => "honest",
            Role::Byzantine => "byzantine",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub id: usize,
    pub role: Role,
    /// Current model. Never read for Byzantine nodes.
    pub params: ParamVector,
    /// Training sample indices; empty for Byzantine nodes.
    pub shard: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeMetrics {
    pub id: usize,
    pub role: Role,
    pub accuracy: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    /// 1-based round index.
    pub round: usize,
    pub per_node: Vec<NodeMetrics>,
    pub honest_mean_accuracy: f64,
}

/// Running totals of protocol work.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ProtocolCounters {
    pub local_train_calls: usize,
    pub attack_draws: usize,
}

/// Mean accuracy over honest entries only.
pub fn honest_mean_accuracy(per_node: &[NodeMetrics]) -> Result<f64, SimulationError> {
    let honest: Vec<f64> =
        per_node.iter().filter(|m| m.role == Role::Honest).map(|m| m.accuracy).collect();
    if honest.is_empty() {
        return Err(SimulationError::NoHonestNodes);
    }
    Ok(honest.iter().sum::<f64>() / honest.len() as f64)
}

/// Builds the graph (and rewire log for small-world) described by `spec`.
pub fn build_topology(spec: &TopologySpec, seed: u64) -> Result<(Graph, Option<RewireLog>), SimulationError> {
    Ok(match spec.kind {
        TopologyKind::SmallWorld => {
            let (g, log) = topology::generate_small_world(&SmallWorldParams {
                n: spec.n,
                k: spec.k,
                beta: spec.beta,
                seed,
            })?;
            (g, Some(log))
        }
        TopologyKind::ScaleFree => (
            topology::generate_scale_free(&ScaleFreeParams { n: spec.n, m0: spec.m0, m: spec.m, seed })?,
            None,
        ),
        TopologyKind::Complete => (Graph::complete(spec.n), None),
    })
}

fn build_plan(
    spec: &AdversarySpec,
    graph: &Graph,
    log: Option<&RewireLog>,
    seed: u64,
) -> Result<AdversaryPlan, SimulationError> {
    let n = graph.node_count();
    Ok(match spec.placement {
        PlacementKind::None => AdversaryPlan::none(),
        PlacementKind::Random => adversary::select_random(n, spec.proportion, seed)?,
        PlacementKind::SmallWorldRewired => {
            let log = log.ok_or_else(|| {
                SimulationError::config("adversary.placement", "small_world_rewired needs a rewire log")
            })?;
            adversary::select_smallworld_strategic(log, n)?
        }
        PlacementKind::ScaleFreeTopDegree => adversary::select_scalefree_strategic(graph, spec.b)?,
    })
}

fn build_datasets(spec: &DatasetSpec, seed: u64) -> Result<(Dataset, Dataset), SimulationError> {
    match spec.kind {
        DatasetKind::Blobs => {
            let source = BlobSource::new(spec.num_classes, spec.input_dim, rng::derive_seed(seed, &[0]))?;
            let train = source.sample(spec.samples_per_class, spec.spread, rng::derive_seed(seed, &[1]))?;
            let per_class = spec.test_samples / spec.num_classes;
            let test = source.sample(per_class, spec.spread, rng::derive_seed(seed, &[2]))?;
            Ok((train, test))
        }
        DatasetKind::Mnist => {
            let train: Dataset = learner::load_idx_files(&spec.train_images, &spec.train_labels)?;
            let test: Dataset = learner::load_idx_files(&spec.test_images, &spec.test_labels)?;
            if train.input_dim() != test.input_dim() {
                return Err(LearnerError::DimensionMismatch(format!(
                    "train images have {} pixels, test images {}",
                    train.input_dim(),
                    test.input_dim()
                ))
                .into());
            }
            let classes = train.num_classes().max(test.num_classes());
            Ok((train.with_num_classes(classes)?, test.with_num_classes(classes)?))
        }
    }
}

/// A running simulation.
pub struct Simulation {
    cfg: ExperimentConfig,
    graph: Graph,
    rewire_log: Option<RewireLog>,
    plan: AdversaryPlan,
    train: Dataset,
    test: Dataset,
    nodes: Vec<NodeState>,
    round: usize,
    counters: ProtocolCounters,
    pool: Option<rayon::ThreadPool>,
}

impl fmt::Debug for Simulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Simulation")
            .field("round", &self.round)
            .field("nodes", &self.nodes.len())
            .field("byzantine", &self.plan.byzantine)
            .finish_non_exhaustive()
    }
}

impl Simulation {
    /// Builds graph, adversary plan, datasets, shards and the shared initial model.
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, SimulationError> {
        let cfg = cfg.resolved();
        cfg.validate()?;
        let (graph, rewire_log) = build_topology(&cfg.topology, cfg.topology.seed.unwrap_or_default())?;
        if !graph.is_connected() {
            log::warn!("communication graph is disconnected; honest nodes will not reach consensus");
        }
        let plan = build_plan(&cfg.adversary, &graph, rewire_log.as_ref(), cfg.adversary.seed.unwrap_or_default())?;

        let (train, test) = build_datasets(&cfg.dataset, cfg.dataset.seed.unwrap_or_default())?;
        let n = graph.node_count();
        let honest: Vec<usize> = (0..n).filter(|&v| !plan.is_byzantine(v)).collect();
        let mut shards = learner::partition(
            train.len(),
            honest.len(),
            cfg.training.samples_per_node,
            rng::derive_seed(cfg.master_seed, &[tags::PARTITION]),
        )?
        .into_iter();

        let d = Model::param_count(train.num_classes(), train.input_dim());
        let normal = Normal::new(0.0, INIT_STD).expect("constant std is valid");
        let mut init_stream = rng::stream(rng::derive_seed(cfg.master_seed, &[tags::INIT_PARAMS]));
        let w0: ParamVector = (0..d).map(|_| normal.sample(&mut init_stream)).collect();

        let nodes = (0..n)
            .map(|id| {
                let byz = plan.is_byzantine(id);
                NodeState {
                    id,
                    role: if byz { Role::Byzantine } else { Role::Honest },
                    params: w0.clone(),
                    shard: if byz { Vec::new() } else { shards.next().unwrap_or_default() },
                }
            })
            .collect();
        log::info!(
            "initialized {} nodes ({} byzantine, {} edges, d = {d})",
            n,
            plan.count(),
            graph.edge_count()
        );
        Ok(Self {
            cfg,
            graph,
            rewire_log,
            plan,
            train,
            test,
            nodes,
            round: 0,
            counters: ProtocolCounters::default(),
            pool: None,
        })
    }

    /// Spreads per-node work over `threads` workers. Results are identical for
    /// every thread count.
    pub fn with_threads(mut self, threads: usize) -> Result<Self, SimulationError> {
        self.pool = if threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| SimulationError::ThreadPool(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(self)
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn rewire_log(&self) -> Option<&RewireLog> {
        self.rewire_log.as_ref()
    }

    pub fn plan(&self) -> &AdversaryPlan {
        &self.plan
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn test_set(&self) -> &Dataset {
        &self.test
    }

    /// Number of completed rounds.
    pub fn round(&self) -> usize {
        self.round
    }

    pub fn counters(&self) -> ProtocolCounters {
        self.counters
    }

    pub fn param_dim(&self) -> usize {
        self.nodes.first().map_or(0, |n| n.params.len())
    }

    /// Runs one synchronous round.
    pub fn run_round(&mut self) -> Result<RoundMetrics, SimulationError> {
        self.step(None)
    }

    /// Runs one round visiting nodes sequentially in `order` (a permutation of
    /// all node ids). The outcome equals [`Simulation::run_round`].
    pub fn run_round_in_order(&mut self, order: &[usize]) -> Result<RoundMetrics, SimulationError> {
        let mut seen = vec![false; self.nodes.len()];
        for &v in order {
            if v >= seen.len() || std::mem::replace(&mut seen[v], true) {
                return Err(SimulationError::config("order", "must be a permutation of node ids"));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(SimulationError::config("order", "must be a permutation of node ids"));
        }
        self.step(Some(order))
    }

    fn for_each_node<R, F>(&self, order: Option<&[usize]>, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        let n = self.nodes.len();
        match (order, &self.pool) {
            (Some(order), _) => {
                let mut slots: Vec<Option<R>> = (0..n).map(|_| None).collect();
                for &v in order {
                    slots[v] = Some(f(v));
                }
                slots.into_iter().map(|s| s.expect("order covers every node")).collect()
            }
            (None, Some(pool)) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
            (None, None) => (0..n).map(f).collect(),
        }
    }

    fn step(&mut self, order: Option<&[usize]>) -> Result<RoundMetrics, SimulationError> {
        let round = self.round + 1;
        let d = self.param_dim();

        // (a) local training / attack draws, from the pre-round snapshot
        let updates: Vec<ParamVector> = self
            .for_each_node(order, |v| {
                let node = &self.nodes[v];
                let mut stream = rng::node_round_stream(self.cfg.master_seed, v, round);
                match node.role {
                    Role::Honest => learner::local_train(
                        &node.params,
                        &self.train,
                        &node.shard,
                        &self.cfg.training,
                        &mut stream,
                    )
                    .map_err(SimulationError::from),
                    Role::Byzantine => adversary::gaussian_attack(d, &self.cfg.adversary.attack, &mut stream)
                        .map_err(SimulationError::from),
                }
            })
            .into_iter()
            .collect::<Result<_, _>>()?;

        // (b, c) exchange with neighbors and aggregate
        let aggregated: Vec<Option<ParamVector>> = self
            .for_each_node(order, |v| {
                if self.nodes[v].role == Role::Byzantine {
                    return Ok(None);
                }
                // closed neighborhood in ascending id order, so nodes with the
                // same neighborhood see the same input list
                let neighbors = self.graph.neighbors(v).expect("node ids come from the graph");
                let include_self = self.cfg.aggregator.include_self;
                let inputs: Vec<&ParamVector> = neighbors
                    .iter()
                    .copied()
                    .chain(include_self.then_some(v))
                    .collect::<std::collections::BTreeSet<_>>()
                    .into_iter()
                    .map(|u| &updates[u])
                    .collect();
                aggregation::combine(&inputs, &self.cfg.aggregator)
                    .map(Some)
                    .map_err(|source| SimulationError::Aggregation { node: v, round, source })
            })
            .into_iter()
            .collect::<Result<_, _>>()?;

        let honest = self.nodes.iter().filter(|n| n.role == Role::Honest).count();
        self.counters.local_train_calls += honest;
        self.counters.attack_draws += self.nodes.len() - honest;
        for (node, new) in self.nodes.iter_mut().zip(aggregated) {
            if let Some(p) = new {
                node.params = p;
            }
        }
        self.round = round;

        // (d) evaluation; Byzantine rows report the vector they emitted
        let per_node: Vec<NodeMetrics> = self
            .for_each_node(order, |v| {
                let node = &self.nodes[v];
                let params = match node.role {
                    Role::Honest => &node.params,
                    Role::Byzantine => &updates[v],
                };
                learner::evaluate_with_loss(params, &self.test).map(|e| NodeMetrics {
                    id: v,
                    role: node.role,
                    accuracy: e.accuracy,
                    loss: e.loss,
                })
            })
            .into_iter()
            .collect::<Result<_, _>>()?;
        let honest_mean_accuracy = honest_mean_accuracy(&per_node)?;
        log::info!("round {round}: honest mean accuracy {honest_mean_accuracy:.4}");
        Ok(RoundMetrics { round, per_node, honest_mean_accuracy })
    }
}

/// Initializes and runs `cfg.rounds` rounds.
pub fn run_experiment(cfg: &ExperimentConfig, threads: usize) -> Result<Vec<RoundMetrics>, SimulationError> {
    let mut sim = Simulation::new(cfg)?.with_threads(threads)?;
    (0..sim.config().rounds).map(|_| sim.run_round()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_blob_config(n: usize) -> ExperimentConfig {
        ExperimentConfig {
            rounds: 3,
            master_seed: 42,
            topology: TopologySpec { kind: TopologyKind::Complete, n, ..Default::default() },
            dataset: DatasetSpec { samples_per_class: 100, input_dim: 8, num_classes: 4, test_samples: 200, ..Default::default() },
            training: TrainingConfig { samples_per_node: 50, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn clean_initialization() {
        let sim = Simulation::new(&small_blob_config(4)).unwrap();
        assert!(sim.nodes().iter().all(|n| n.role == Role::Honest));
        let first = &sim.nodes()[0].params;
        assert!(sim.nodes().iter().all(|n| n.params.bitwise_eq(first)));
        assert_eq!(first.len(), 4 * 8 + 4);
        assert!(sim.nodes().iter().all(|n| n.shard.len() == 50));
    }

    #[test]
    fn initialization_is_deterministic() {
        let a = Simulation::new(&small_blob_config(4)).unwrap();
        let b = Simulation::new(&small_blob_config(4)).unwrap();
        assert_eq!(a.nodes(), b.nodes());
        assert_eq!(a.graph(), b.graph());
        assert_eq!(a.config(), b.config());
    }

    #[test]
    fn not_enough_data() {
        let mut cfg = small_blob_config(4);
        cfg.dataset.num_classes = 9;
        cfg.dataset.samples_per_class = 100;
        cfg.training.samples_per_node = 250;
        let err = Simulation::new(&cfg).unwrap_err();
        assert!(matches!(err, SimulationError::Learner(LearnerError::NotEnoughData { needed: 1000, available: 900 })));
        assert!(err.is_config_error());
    }

    #[test]
    fn fully_connected_fedavg_reaches_consensus() {
        let mut sim = Simulation::new(&small_blob_config(4)).unwrap();
        sim.run_round().unwrap();
        let first = &sim.nodes()[0].params;
        assert!(sim.nodes().iter().all(|n| n.params.bitwise_eq(first)));
    }

    #[test]
    fn honest_mean_examples() {
        let m = |id, role, accuracy| NodeMetrics { id, role, accuracy, loss: 0.0 };
        assert_eq!(honest_mean_accuracy(&[m(0, Role::Honest, 1.0), m(1, Role::Honest, 0.5)]).unwrap(), 0.75);
        assert_eq!(honest_mean_accuracy(&[m(0, Role::Honest, 0.3)]).unwrap(), 0.3);
        assert_eq!(
            honest_mean_accuracy(&[m(0, Role::Honest, 0.9), m(1, Role::Byzantine, 0.0)]).unwrap(),
            0.9
        );
        assert!(matches!(honest_mean_accuracy(&[m(0, Role::Byzantine, 0.1)]), Err(SimulationError::NoHonestNodes)));
    }

    #[test]
    fn validation_names_the_key() {
        let mut cfg = ExperimentConfig::default();
        cfg.topology.k = 3;
        match cfg.validate() {
            Err(SimulationError::Config { key, .. }) => assert_eq!(key, "topology.k"),
            other => panic!("{other:?}"),
        }
        let mut cfg = ExperimentConfig::default();
        cfg.adversary.placement = PlacementKind::SmallWorldRewired;
        cfg.topology.kind = TopologyKind::ScaleFree;
        assert!(cfg.validate().unwrap_err().is_config_error());
        let cfg = ExperimentConfig { rounds: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::default().validate().is_ok());
    }

    #[test]
    fn resolved_config_is_stable() {
        let cfg = ExperimentConfig::default().resolved();
        assert!(cfg.topology.seed.is_some());
        assert_eq!(cfg.resolved(), cfg);
    }
}
