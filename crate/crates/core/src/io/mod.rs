//! Files in and out: datasets, configuration, snapshots, reports and the
//! workflows behind the command-line tool.

pub mod config;
pub mod dataset;
pub mod report;
pub mod snapshot;
pub mod workflow;

pub use config::{LeafChoice, RestrictSpec, RunConfig};
pub use dataset::{augment_indicator, load_dataset, parse_dataset, Dataset, IndicatorRule, SchemaSpec};
pub use report::{Manifest, Report};
pub use workflow::{run, Command, Inputs};
