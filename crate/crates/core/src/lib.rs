//! Structured prediction with perturb-and-MAP predictors over small
//! combinatorial output families (directed spanning trees, bounded-indegree
//! DAGs and fixed-size subsets).
//!
//! Training minimizes either the exact CRF loss over every output or a
//! randomized loss over a few proposed candidates per sample; max-margin
//! baselines share the same optimizer. [`harness`] runs the synthetic
//! comparison end to end.

pub mod bounds;
pub mod error;
pub mod gumbel_crf;
pub mod harness;
pub mod io;
pub mod losses;
pub mod proposal;
pub mod seeding;
pub mod spaces;
pub mod trainer;

pub use error::{Error, Result};
pub use gumbel_crf::{CandidateSet, WeightVector};
pub use losses::{Dataset, LossKind, LossReport, Sample};
pub use spaces::{OutputSpace, StructureFamily, StructuredInput, StructuredOutput};
pub use trainer::{Method, TrainConfig};
