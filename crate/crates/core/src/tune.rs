//! Feedback-driven tuning of the adaptation proportion.
//!
//! Each training PIE is run through the pipeline at the current proportion
//! `p`. In-PIE outcomes raise `p` by the learning rate, Invalid outcomes lower
//! it, Out-PIE leaves it alone; `p` is clamped to `[0, 1]`.

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::adapt::{AdaptationPolicy, Strategy};
use crate::classify::{Category, RecommendationOutcome};
use crate::error::{Error, Result};
use crate::ingest::ExperimentSplit;
use crate::pie::FeaturePairBias;
use crate::pipeline::Harness;
use crate::pkg::{Pkg, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuneConfig {
    pub learning_rate: f64,
    pub init_proportion: f64,
    pub epochs: usize,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            learning_rate: 0.05,
            init_proportion: 0.5,
            epochs: 1,
        }
    }
}

impl TuneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config(format!(
                "learning rate {} outside (0, 1]",
                self.learning_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.init_proportion) {
            return Err(Error::Config(format!(
                "initial proportion {} outside [0, 1]",
                self.init_proportion
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn update(p: f64, outcome: Category, lr: f64) -> f64 {
    let next = match outcome {
        Category::InPie => p + lr,
        Category::Invalid => p - lr,
        Category::OutPie => p,
    };
    next.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepResult {
    Classified(Box<RecommendationOutcome>),
    /// Backend failed; the proportion was left unchanged.
    Skipped(String),
}

impl StepResult {
    pub fn category(&self) -> Option<Category> {
        match self {
            StepResult::Classified(o) => Some(o.category),
            StepResult::Skipped(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneStep {
    pub user_id: UserId,
    pub pie: FeaturePairBias,
    /// Proportion the PKG was adapted with on this step.
    pub proportion_before: f64,
    pub result: StepResult,
    pub proportion_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub proportion: f64,
    pub trace: Vec<TuneStep>,
    pub skipped: usize,
}

struct Tuner<'h> {
    harness: &'h Harness<'h>,
    strategy: Strategy,
    cfg: TuneConfig,
    p: f64,
    trace: Vec<TuneStep>,
    skipped: usize,
}

impl<'h> Tuner<'h> {
    fn new(harness: &'h Harness<'h>, strategy: Strategy, cfg: TuneConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Tuner {
            harness,
            strategy,
            cfg,
            p: cfg.init_proportion,
            trace: Vec::new(),
            skipped: 0,
        })
    }

    fn step(&mut self, pkg: &Pkg, pie: &FeaturePairBias) -> Result<()> {
        let before = self.p;
        let policy = AdaptationPolicy::new(self.strategy, before)?;
        let result = match self.harness.run_query(pkg, pie, &policy)? {
            Ok(outcome) => {
                self.p = update(before, outcome.category, self.cfg.learning_rate);
                StepResult::Classified(Box::new(outcome))
            }
            Err(e) => {
                warn!("tuning step for {} skipped: {e}", pkg.user_id());
                self.skipped += 1;
                StepResult::Skipped(e.to_string())
            }
        };
        self.trace.push(TuneStep {
            user_id: pkg.user_id().clone(),
            pie: pie.clone(),
            proportion_before: before,
            result,
            proportion_after: self.p,
        });
        Ok(())
    }

    fn finish(self) -> Result<TuneResult> {
        let total = self.trace.len();
        if self.skipped * 2 > total {
            return Err(Error::TuningFailed {
                skipped: self.skipped,
                total,
            });
        }
        Ok(TuneResult {
            proportion: self.p,
            trace: self.trace,
            skipped: self.skipped,
        })
    }
}

/// Sequential pass(es) over one user's training PIEs. Every step adapts the
/// base PKG afresh; adaptations do not accumulate.
pub fn tune_user(
    pkg: &Pkg,
    training: &[FeaturePairBias],
    strategy: Strategy,
    harness: &Harness<'_>,
    cfg: &TuneConfig,
) -> Result<TuneResult> {
    if training.is_empty() {
        return Err(Error::Config(format!(
            "user {} has no training PIEs",
            pkg.user_id()
        )));
    }
    let mut tuner = Tuner::new(harness, strategy, *cfg)?;
    for _ in 0..cfg.epochs {
        for pie in training {
            tuner.step(pkg, pie)?;
        }
    }
    tuner.finish()
}

/// One shared proportion threaded through every user's training PIEs, users
/// in split order.
pub fn tune_global(
    splits: &[ExperimentSplit],
    pkgs: &BTreeMap<UserId, Pkg>,
    strategy: Strategy,
    harness: &Harness<'_>,
    cfg: &TuneConfig,
) -> Result<TuneResult> {
    if splits.iter().all(|s| s.training_pies.is_empty()) {
        return Err(Error::Config("no training PIEs in any split".into()));
    }
    let mut tuner = Tuner::new(harness, strategy, *cfg)?;
    for _ in 0..cfg.epochs {
        for split in splits {
            let pkg = pkgs
                .get(&split.user_id)
                .ok_or_else(|| Error::NotFound(format!("PKG for user {}", split.user_id)))?;
            for pie in &split.training_pies {
                tuner.step(pkg, pie)?;
            }
        }
    }
    tuner.finish()
}
