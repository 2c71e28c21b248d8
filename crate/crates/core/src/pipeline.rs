//! One query end to end: adapt the base PKG, ask the backend, classify.

use crate::adapt::{apply_adaptation, AdaptationPolicy, Strategy};
use crate::backend::{BackendError, RecommendationRequest, Recommender};
use crate::catalog::Catalog;
use crate::classify::{classify_outcome, ClassifyOptions, RecommendationOutcome};
use crate::error::Result;
use crate::pie::FeaturePairBias;
use crate::pkg::Pkg;

#[derive(Clone, Copy)]
pub struct Harness<'a> {
    pub backend: &'a dyn Recommender,
    pub catalog: &'a Catalog,
    pub classify: ClassifyOptions,
}

impl<'a> Harness<'a> {
    pub fn new(backend: &'a dyn Recommender, catalog: &'a Catalog) -> Self {
        Harness {
            backend,
            catalog,
            classify: ClassifyOptions::default(),
        }
    }

    /// The outer `Result` carries harness errors (bad policy, inconsistent
    /// catalog); the inner one carries backend failures, which callers may
    /// choose to tolerate.
    pub fn run_query(
        &self,
        base: &Pkg,
        pie: &FeaturePairBias,
        policy: &AdaptationPolicy,
    ) -> Result<std::result::Result<RecommendationOutcome, BackendError>> {
        let adapted = apply_adaptation(base, pie, policy)?;
        let baseline_bias = (policy.strategy == Strategy::PromptOnly).then_some(&pie.f_bias);
        let request = RecommendationRequest {
            pkg: &adapted,
            query: &pie.f_given,
            baseline_bias,
        };
        let raw = match self.backend.recommend(&request) {
            Ok(raw) => raw,
            Err(e) => return Ok(Err(e)),
        };
        classify_outcome(raw, pie, self.catalog, base, &self.classify).map(Ok)
    }
}
