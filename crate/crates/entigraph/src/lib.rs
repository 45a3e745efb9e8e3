//! Simulator and analytics for knowledge-graph augmentation on random
//! directed graphs.
//!
//! The model: start from a sparse Erdos-Renyi digraph over `V` entities.
//! Each step samples an ordered entity pair uniformly at random; if the
//! source graph contains a directed path between them, every edge from the
//! start vertex to a vertex on that path is added to the learned relation
//! set. The crate provides the simulator, an exact per-pair probability
//! oracle, closed-form link-density bounds, a Poisson branching-process
//! approximation, mixture-of-exponential curve fitting, and tooling for the
//! text-corpus side of the pipeline (relation enumeration, prompt
//! rendering, n-gram and shingle quality metrics).
//!
//! Numeric routines are generic over the scalar type via [`Real`]; the
//! `f64` instantiations are the defaults and have aliases at the crate
//! root.

pub mod analytics;
pub mod corpus;
pub mod fit;
pub mod graph;
pub mod process;
mod scalar;

pub use scalar::Real;

pub use corpus::{CorpusError, DefaultTokenizer, Document, EntityPlan, Tokenizer};
pub use graph::{bfs_shortest_path, generate_er, reachability_closure};
pub use graph::{BfsTree, DirectedGraph, GraphError, Path};
pub use process::{estimate_acc_curve, exact_acc_curve, pair_probabilities};
pub use process::{AccuracyCurve, AugmentationState, PairProbabilities, ShortestPathForest};

/// Model parameters with the default `f64` scalar.
pub type ModelParams = graph::ModelParams<f64>;
/// Accuracy curve with the default `f64` scalar.
pub type Curve = process::AccuracyCurve<f64>;
/// Theorem bound evaluator with the default `f64` scalar.
pub type Bounds = analytics::TheoremBounds<f64>;
/// Branching-process approximation with the default `f64` scalar.
pub type Approx = analytics::BranchingApprox<f64>;
/// Fitted exponential mixture with the default `f64` scalar.
pub type Fit = fit::MoEFit<f64>;
