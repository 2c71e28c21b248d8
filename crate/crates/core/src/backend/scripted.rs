use std::sync::Mutex;
use std::time::Duration;

use super::{BackendError, RawRecommendation, RecommendationRequest, Recommender};

/// Replays a fixed sequence of replies, one per call. `Err` entries become
/// [`BackendError::Scripted`] failures.
#[derive(Debug)]
pub struct ScriptedBackend {
    replies: Vec<Result<String, String>>,
    cursor: Mutex<usize>,
    cycle: bool,
}

impl ScriptedBackend {
    pub fn new(replies: Vec<Result<String, String>>) -> Self {
        ScriptedBackend {
            replies,
            cursor: Mutex::new(0),
            cycle: false,
        }
    }

    pub fn from_texts<S: Into<String>>(texts: impl IntoIterator<Item = S>) -> Self {
        ScriptedBackend::new(texts.into_iter().map(|t| Ok(t.into())).collect())
    }

    /// Start over from the first reply once the script runs out.
    pub fn cycled(mut self) -> Self {
        self.cycle = true;
        self
    }

    pub fn calls(&self) -> usize {
        *self.cursor.lock().unwrap()
    }
}

impl Recommender for ScriptedBackend {
    fn id(&self) -> &str {
        "scripted"
    }

    fn recommend(
        &self,
        _req: &RecommendationRequest<'_>,
    ) -> Result<RawRecommendation, BackendError> {
        let mut cursor = self.cursor.lock().unwrap();
        let n = self.replies.len();
        if n == 0 || (!self.cycle && *cursor >= n) {
            return Err(BackendError::ScriptExhausted(n));
        }
        let reply = self.replies[*cursor % n].clone();
        *cursor += 1;
        reply
            .map(|text| RawRecommendation {
                text,
                backend_id: "scripted".to_string(),
                latency: Duration::ZERO,
            })
            .map_err(BackendError::Scripted)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pkg::{Feature, Pkg, RatingScale};

    #[test]
    fn replays_then_exhausts() {
        let pkg = Pkg::new("u", RatingScale::default());
        let q = Feature::tag("italian").unwrap();
        let req = RecommendationRequest {
            pkg: &pkg,
            query: &q,
            baseline_bias: None,
        };
        let backend = ScriptedBackend::new(vec![Ok("Pesto Pasta".into()), Err("boom".into())]);
        assert_eq!(backend.recommend(&req).unwrap().text, "Pesto Pasta");
        assert_eq!(
            backend.recommend(&req).unwrap_err(),
            BackendError::Scripted("boom".into())
        );
        assert_eq!(
            backend.recommend(&req).unwrap_err(),
            BackendError::ScriptExhausted(2)
        );

        let cyc = ScriptedBackend::from_texts(["a", "b"]).cycled();
        let got: Vec<_> = (0..5).map(|_| cyc.recommend(&req).unwrap().text).collect();
        assert_eq!(got, ["a", "b", "a", "b", "a"]);
    }
}
