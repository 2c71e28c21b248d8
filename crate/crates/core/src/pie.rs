//! Feature-pair bias scoring and detection of over-personalized pairs (PIEs).
//!
//! For a pair `(given, bias)` the score is
//!
//! ```text
//! q = Σ_{o has given and bias} (r(o) - μ) / (μ · |{o has given}|)
//! ```
//!
//! with `μ` the neutral midpoint of the rating scale. Working in doubled units
//! keeps everything integral: `q = Σ (2r - 2μ) / (2μ · |O_given|)`.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pkg::{Feature, Pkg};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasSign {
    Positive,
    Negative,
}

/// A scored feature pair. `numerator / denominator` is the exact score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePairBias {
    pub f_given: Feature,
    pub f_bias: Feature,
    pub q_bias: f64,
    pub numerator: i64,
    pub denominator: i64,
    /// Items containing both features.
    pub support: usize,
    /// Items containing `f_given`.
    pub given_count: usize,
}

impl FeaturePairBias {
    fn from_parts(
        f_given: Feature,
        f_bias: Feature,
        deviation_sum_x2: i64,
        midpoint_x2: i64,
        support: usize,
        given_count: usize,
    ) -> Self {
        let denominator = midpoint_x2 * given_count as i64;
        FeaturePairBias {
            f_given,
            f_bias,
            q_bias: deviation_sum_x2 as f64 / denominator as f64,
            numerator: deviation_sum_x2,
            denominator,
            support,
            given_count,
        }
    }

    /// `None` when the score is exactly zero.
    pub fn sign(&self) -> Option<BiasSign> {
        match self.numerator.cmp(&0) {
            Ordering::Greater => Some(BiasSign::Positive),
            Ordering::Less => Some(BiasSign::Negative),
            Ordering::Equal => None,
        }
    }

    /// Compares `|q|` exactly.
    pub fn cmp_magnitude(&self, other: &Self) -> Ordering {
        let lhs = i128::from(self.numerator.abs()) * i128::from(other.denominator);
        let rhs = i128::from(other.numerator.abs()) * i128::from(self.denominator);
        lhs.cmp(&rhs)
    }

    pub fn same_pair(&self, other: &Self) -> bool {
        self.f_given == other.f_given && self.f_bias == other.f_bias
    }
}

pub fn bias_score(pkg: &Pkg, f_given: &Feature, f_bias: &Feature) -> Result<FeaturePairBias> {
    if f_given == f_bias {
        return Err(Error::DegeneratePair(f_given.to_string()));
    }
    let mut given_count = 0usize;
    let mut support = 0usize;
    let mut sum_x2 = 0i64;
    for item in pkg.items().filter(|i| i.has(f_given)) {
        given_count += 1;
        if item.has(f_bias) {
            support += 1;
            sum_x2 += item.rating.deviation_x2();
        }
    }
    if given_count == 0 {
        return Err(Error::UndefinedScore(f_given.to_string()));
    }
    Ok(FeaturePairBias::from_parts(
        f_given.clone(),
        f_bias.clone(),
        sum_x2,
        pkg.scale().midpoint_x2(),
        support,
        given_count,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectConfig {
    pub threshold: f64,
    /// Minimum number of items carrying both features. Values below 1 are
    /// treated as 1: only co-occurring pairs are scored.
    pub min_support: usize,
    /// `|q| >= threshold` when true, `|q| > threshold` otherwise.
    pub inclusive: bool,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            threshold: 0.5,
            min_support: 2,
            inclusive: true,
        }
    }
}

impl DetectConfig {
    pub fn passes(&self, pie: &FeaturePairBias) -> bool {
        let magnitude = pie.q_bias.abs();
        let above = if self.inclusive {
            magnitude >= self.threshold
        } else {
            magnitude > self.threshold
        };
        above && pie.support >= self.min_support.max(1)
    }
}

/// Every ordered pair that clears the support and threshold filters, sorted by
/// `|q|` descending then by `(given.value, bias.value)`.
pub fn detect_pies(pkg: &Pkg, cfg: &DetectConfig) -> Vec<FeaturePairBias> {
    let min_support = cfg.min_support.max(1);

    let mut counts: HashMap<&Feature, usize> = HashMap::new();
    for item in pkg.items() {
        for f in &item.features {
            *counts.entry(f).or_default() += 1;
        }
    }
    // a feature on fewer than min_support items cannot reach min_support co-occurrences
    let mut vocab: Vec<&Feature> = counts
        .iter()
        .filter(|(_, &n)| n >= min_support)
        .map(|(f, _)| *f)
        .collect();
    vocab.sort();
    let index: HashMap<&Feature, usize> = vocab.iter().enumerate().map(|(i, f)| (*f, i)).collect();

    let mut pairs: HashMap<(usize, usize), (usize, i64)> = HashMap::new();
    let mut present = Vec::new();
    for item in pkg.items() {
        present.clear();
        present.extend(item.features.iter().filter_map(|f| index.get(f).copied()));
        let dev = item.rating.deviation_x2();
        for &a in &present {
            for &b in &present {
                if a != b {
                    let slot = pairs.entry((a, b)).or_default();
                    slot.0 += 1;
                    slot.1 += dev;
                }
            }
        }
    }

    let midpoint_x2 = pkg.scale().midpoint_x2();
    let mut found: Vec<FeaturePairBias> = pairs
        .into_iter()
        .filter(|(_, (support, _))| *support >= min_support)
        .map(|((a, b), (support, sum))| {
            FeaturePairBias::from_parts(
                vocab[a].clone(),
                vocab[b].clone(),
                sum,
                midpoint_x2,
                support,
                counts[vocab[a]],
            )
        })
        .filter(|p| cfg.passes(p))
        .collect();
    found.sort_by(rank_order);
    found
}

fn rank_order(a: &FeaturePairBias, b: &FeaturePairBias) -> Ordering {
    b.cmp_magnitude(a)
        .then_with(|| a.f_given.value().cmp(b.f_given.value()))
        .then_with(|| a.f_bias.value().cmp(b.f_bias.value()))
        .then_with(|| a.f_given.cmp(&b.f_given))
        .then_with(|| a.f_bias.cmp(&b.f_bias))
}
