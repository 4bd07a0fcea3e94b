//! Dynamic trees: sequential Bayesian regression and classification trees
//! inferred by particle learning, with posterior variable selection,
//! Sobol-style sensitivity analysis and expected-improvement search.
//!
//! The crate is organised bottom-up:
//!
//! * [`tree`] holds the persistent tree structure, split rules and the tree prior.
//! * [`leaf`] provides the constant, linear and multinomial leaf models.
//! * [`smc`] runs the resample/propagate particle filter and marginal likelihoods.
//! * [`varsel`] computes importance indices, relevance and backward selection.
//! * [`sensitivity`] estimates first-order/total indices and main effects.
//! * [`optimize`] implements maximin subsampling and EI-driven search.
//! * [`io`] covers datasets, configuration, snapshots, reports and workflows.

pub mod data;
pub mod error;
pub mod io;
pub mod leaf;
pub mod optimize;
pub mod rng;
pub mod schema;
pub mod sensitivity;
pub mod smc;
pub mod stats;
pub mod synthetic;
pub mod tree;
pub mod varsel;

pub use data::Observations;
pub use error::{Error, Result};
pub use leaf::{LeafModel, LeafSuffStats, PredictiveMoments};
pub use smc::{CloudConfig, ParticleCloud};
pub use tree::{NodeId, Rect, SplitRule, Tree, TreePrior};
