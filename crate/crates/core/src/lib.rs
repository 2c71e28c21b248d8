//! Detecting and mitigating personalized information environments (PIEs) in
//! per-user knowledge graphs before they are handed to a recommender.

pub mod adapt;
pub mod backend;
pub mod catalog;
pub mod classify;
pub mod config;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod pie;
pub mod pipeline;
pub mod pkg;
pub mod prompt;
pub mod store;
pub mod tune;

pub use error::{Error, Result};
