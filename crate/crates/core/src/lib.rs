//! Deterministic simulator for decentralized federated learning over arbitrary
//! communication graphs, with Byzantine nodes and robust aggregation.
//!
//! The numeric kernels ([`aggregation`], [`learner`], [`adversary::gaussian_attack`])
//! are generic over [`Scalar`] (`f32` or `f64`). The simulator runs in `f64`;
//! the aliases below name the concrete types it uses.

pub mod adversary;
pub mod aggregation;
pub mod learner;
pub mod oracle;
pub mod param;
pub mod rng;
pub mod scalar;
pub mod simulator;
pub mod topology;

pub use param::ParamVec;
pub use scalar::Scalar;

/// Parameter vector exchanged by simulated nodes.
pub type ParamVector = ParamVec<f64>;
/// Dataset type used by the simulator.
pub type Dataset = learner::Dataset<f64>;
/// Classifier type used by the simulator.
pub type Model = learner::Model<f64>;
