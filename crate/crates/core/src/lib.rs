//! Temporal knowledge-graph embeddings.
//!
//! Facts are `(head, relation, tail, start, end)` quintuples. Years are
//! clubbed into `T` time bins, every bin owns a hyperplane normal `w_t`, and
//! entity/relation vectors are scored by the translational residual of their
//! projections onto that hyperplane. Training minimises a margin ranking
//! objective with entity *and* relation negatives, a smoothness penalty tying
//! adjacent hyperplanes together, and soft unit-norm penalties.
//!
//! The modules follow the pipeline:
//!
//! * [`dataset`]: parsing, year binning, per-bin subgraphs.
//! * [`model`]: parameters, projection and scoring, checkpoints.
//! * [`sampler`]: corrupted negatives and constraint pairs.
//! * [`trainer`]: objective, analytic gradients, alternating descent.
//! * [`eval`]: rank-based evaluation and the synthetic graph generator.
//! * [`oracle`]: brute-force references used by the test suites.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod model;
pub mod oracle;
pub mod sampler;
pub mod trainer;

pub use dataset::{Fact, TemporalGraph, TimeBinning, Triple};
pub use error::{Error, Result};
pub use model::{HyperParams, ModelState, Norm};
pub use trainer::{Mode, TrainReport};
