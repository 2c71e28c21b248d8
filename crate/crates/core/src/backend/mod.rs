//! Recommender backends: anything that turns an (adapted) PKG plus a query
//! into free text naming a recipe.

mod http;
mod oracle;
mod scripted;

use std::time::Duration;

use thiserror::Error;

use crate::pkg::{Feature, Pkg, UserId};

pub use http::{HttpBackend, HttpConfig};
pub use oracle::{affinity, oracle_recommend, oracle_scores, OracleBackend, OracleWeights};
pub use scripted::ScriptedBackend;

#[derive(Debug, Clone, Copy)]
pub struct RecommendationRequest<'a> {
    /// Already adapted.
    pub pkg: &'a Pkg,
    pub query: &'a Feature,
    /// Set only for the prompt-only baseline.
    pub baseline_bias: Option<&'a Feature>,
}

impl RecommendationRequest<'_> {
    pub fn user_id(&self) -> &UserId {
        self.pkg.user_id()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRecommendation {
    pub text: String,
    pub backend_id: String,
    pub latency: Duration,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("network error: {0}")]
    Network(String),
    #[error("request timed out")]
    Timeout,
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("giving up after {attempts} attempts: {last}")]
    RetriesExhausted {
        attempts: u32,
        last: Box<BackendError>,
    },
    #[error("no candidate item left to recommend")]
    NoCandidate,
    #[error("scripted failure: {0}")]
    Scripted(String),
    #[error("script exhausted after {0} replies")]
    ScriptExhausted(usize),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Network(_) | BackendError::Timeout => true,
            BackendError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

pub trait Recommender: Send + Sync {
    fn id(&self) -> &str;

    fn recommend(&self, req: &RecommendationRequest<'_>)
        -> Result<RawRecommendation, BackendError>;
}

impl<R: Recommender + ?Sized> Recommender for Box<R> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn recommend(
        &self,
        req: &RecommendationRequest<'_>,
    ) -> Result<RawRecommendation, BackendError> {
        (**self).recommend(req)
    }
}
