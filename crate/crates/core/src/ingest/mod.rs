//! Corpus ingestion, experiment sampling and synthetic cohorts.

mod cohort;
mod corpus;
mod listlit;
mod sample;

pub use cohort::{generate_synthetic_cohort, CohortSpec, PlantedPie};
pub use corpus::{load_catalog, load_pkg, load_pkgs, CorpusPaths, Loaded, RowIssue};
pub use listlit::parse_list_literal;
pub use sample::{sample_experiment, training_count, ExperimentSplit, SampleConfig, SignFilter};
