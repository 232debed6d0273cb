//! Optimal classification trees of bounded depth under group-fairness constraints.
//!
//! The crate is organised around the pipeline used in experiments:
//!
//! * [`dataset`] turns delimited text into binary features, labels and protected groups.
//! * [`tree`] holds the perfect-binary-tree topology and decision-tree solutions.
//! * [`fairness`] compiles a fairness notion into countable constraint instances and
//!   evaluates disparities of arbitrary predictions.
//! * [`solver`] finds provably optimal trees by branch-and-bound, and extends trees
//!   greedily one level at a time.
//! * [`baselines`] holds the information-gain tree induction and leaf relabeling used
//!   for comparisons.
//! * [`mip`] writes the flow-based mixed-integer model for external solvers and reads
//!   solutions back.
//! * [`harness`] runs accuracy/discrimination sweeps and writes report tables.

pub mod baselines;
pub mod dataset;
pub mod error;
pub mod fairness;
pub mod harness;
pub mod mip;
pub mod solver;
pub mod tree;

pub use dataset::{BinarizationConfig, Dataset};
pub use error::{Error, Result};
pub use fairness::{FairnessKind, FairnessSpec, Mode};
pub use solver::{SolveOptions, SolveResult, SolveStatus};
pub use tree::{DecisionTree, NodeKind, TreeTopology};
