//! Run configuration (TOML). Command-line flags override file values, which
//! override defaults. Backend credentials are only read from the environment.
//!
//! ```toml
//! seed = 42
//!
//! [scale]
//! min = 0
//! max = 5
//!
//! [detect]
//! threshold = 0.5
//! min_support = 2
//!
//! [sample]
//! n_users = 20
//! pies_per_user = 50
//! sign = "positive"
//!
//! [experiment]
//! rows = ["soft:personalized", "soft:global", "none:baseline"]
//! aggregation = "micro"
//! [experiment.tune]
//! learning_rate = 0.05
//!
//! [backend]
//! kind = "http"
//! [backend.http]
//! endpoint = "http://127.0.0.1:8000/v1/chat/completions"
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backend::{
    HttpBackend, HttpConfig, OracleBackend, OracleWeights, Recommender, ScriptedBackend,
};
use crate::catalog::Catalog;
use crate::classify::ClassifyOptions;
use crate::error::{Error, Result};
use crate::eval::ExperimentConfig;
use crate::ingest::SampleConfig;
use crate::pie::DetectConfig;
use crate::pkg::RatingScale;
use crate::prompt::PromptConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScaleConfig {
    pub min: i32,
    pub max: i32,
}

impl Default for ScaleConfig {
    fn default() -> Self {
        ScaleConfig { min: 0, max: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Oracle,
    Http,
    /// Canned replies read from a file, one per line, cycled.
    Scripted,
}

impl FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "oracle" => Ok(BackendKind::Oracle),
            "http" => Ok(BackendKind::Http),
            "scripted" => Ok(BackendKind::Scripted),
            other => Err(Error::Config(format!("unknown backend `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub oracle: OracleWeights,
    pub http: HttpConfig,
    /// Reply file for the scripted backend.
    pub replies: Option<PathBuf>,
}

impl BackendConfig {
    pub fn build(
        &self,
        catalog: Arc<Catalog>,
        prompt: &PromptConfig,
    ) -> Result<Box<dyn Recommender>> {
        Ok(match self.kind {
            BackendKind::Oracle => Box::new(OracleBackend::new(catalog, self.oracle)),
            BackendKind::Http => Box::new(HttpBackend::new(self.http.clone(), prompt.clone())?),
            BackendKind::Scripted => {
                let path = self
                    .replies
                    .as_ref()
                    .ok_or_else(|| Error::Config("scripted backend needs a replies file".into()))?;
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let replies: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
                if replies.is_empty() {
                    return Err(Error::Config(format!(
                        "{} holds no replies",
                        path.display()
                    )));
                }
                Box::new(ScriptedBackend::from_texts(replies).cycled())
            }
        })
    }

    /// Identity echoed into run manifests.
    pub fn describe(&self) -> String {
        match self.kind {
            BackendKind::Oracle => format!(
                "oracle(trait_bonus={}, affinity_scale={})",
                self.oracle.trait_bonus, self.oracle.affinity_scale
            ),
            BackendKind::Http => format!("http({}, model={})", self.http.endpoint, self.http.model),
            BackendKind::Scripted => format!(
                "scripted({})",
                self.replies
                    .as_deref()
                    .map_or("-".into(), |p| p.display().to_string())
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub scale: ScaleConfig,
    pub detect: DetectConfig,
    pub sample: SampleConfig,
    pub experiment: ExperimentConfig,
    pub backend: BackendConfig,
    pub prompt: PromptConfig,
    pub classify: ClassifyOptions,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// The file's settings, or defaults when no file is given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                RunConfig::from_toml(&text).map_err(|e| match e {
                    Error::Config(m) => Error::Config(format!("{}: {m}", p.display())),
                    other => other,
                })
            }
        }
    }

    pub fn rating_scale(&self) -> Result<RatingScale> {
        RatingScale::new(self.scale.min, self.scale.max)
    }

    /// Sampling settings with the run's detection settings applied.
    pub fn sample_config(&self) -> SampleConfig {
        SampleConfig {
            detect: self.detect,
            ..self.sample
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}
