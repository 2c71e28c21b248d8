use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pie::{detect_pies, BiasSign, DetectConfig, FeaturePairBias};
use crate::pkg::{Pkg, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignFilter {
    #[default]
    Both,
    Positive,
    Negative,
}

impl SignFilter {
    pub fn admits(self, pie: &FeaturePairBias) -> bool {
        match self {
            SignFilter::Both => true,
            SignFilter::Positive => pie.sign() == Some(BiasSign::Positive),
            SignFilter::Negative => pie.sign() == Some(BiasSign::Negative),
        }
    }
}

impl std::str::FromStr for SignFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "both" => Ok(SignFilter::Both),
            "positive" | "pos" => Ok(SignFilter::Positive),
            "negative" | "neg" => Ok(SignFilter::Negative),
            other => Err(Error::Config(format!("unknown sign filter `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleConfig {
    pub n_users: usize,
    pub pies_per_user: usize,
    /// Set from the run's detection settings rather than its own section.
    #[serde(skip)]
    pub detect: DetectConfig,
    /// Users with fewer rated items are not eligible.
    pub min_items: usize,
    /// Users with fewer qualifying pairs are passed over.
    pub min_pies: usize,
    pub sign: SignFilter,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            n_users: 20,
            pies_per_user: 50,
            detect: DetectConfig::default(),
            min_items: 20,
            min_pies: 1,
            sign: SignFilter::Both,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSplit {
    pub user_id: UserId,
    pub training_pies: Vec<FeaturePairBias>,
    pub eval_pies: Vec<FeaturePairBias>,
    pub seed: u64,
}

/// Training share of `n` sampled pairs: `floor(0.8 * n)`.
pub fn training_count(n: usize) -> usize {
    n * 4 / 5
}

/// Seeded selection of users and, per user, of PIE pairs split 80/20 in
/// sampled order.
pub fn sample_experiment(
    pkgs: &BTreeMap<UserId, Pkg>,
    cfg: &SampleConfig,
    seed: u64,
) -> Result<Vec<ExperimentSplit>> {
    if pkgs.len() < cfg.n_users {
        return Err(Error::Config(format!(
            "need {} user PKGs, only {} supplied",
            cfg.n_users,
            pkgs.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eligible: Vec<&Pkg> = pkgs.values().filter(|p| p.len() >= cfg.min_items).collect();
    eligible.shuffle(&mut rng);

    let mut splits = Vec::with_capacity(cfg.n_users);
    for pkg in eligible {
        if splits.len() == cfg.n_users {
            break;
        }
        let mut pies: Vec<FeaturePairBias> = detect_pies(pkg, &cfg.detect)
            .into_iter()
            .filter(|p| cfg.sign.admits(p))
            .collect();
        if pies.len() < cfg.min_pies.max(1) {
            continue;
        }
        pies.shuffle(&mut rng);
        pies.truncate(cfg.pies_per_user);
        let eval_pies = pies.split_off(training_count(pies.len()));
        splits.push(ExperimentSplit {
            user_id: pkg.user_id().clone(),
            training_pies: pies,
            eval_pies,
            seed,
        });
    }
    if splits.len() < cfg.n_users {
        return Err(Error::Config(format!(
            "only {} users have >= {} items and >= {} qualifying PIEs; {} requested",
            splits.len(),
            cfg.min_items,
            cfg.min_pies.max(1),
            cfg.n_users
        )));
    }
    Ok(splits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_rounding() {
        assert_eq!(training_count(50), 40);
        assert_eq!(training_count(7), 5);
        assert_eq!(7 - training_count(7), 2);
        assert_eq!(training_count(1), 0);
        assert_eq!(training_count(2), 1);
    }
}
