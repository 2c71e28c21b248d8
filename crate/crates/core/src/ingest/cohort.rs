//! Seeded synthetic cohorts with planted PIEs, for offline runs.
//!
//! Each planted pair `(given, bias)` contributes `support` items carrying
//! both features with bias-side ratings, a number of given-only items chosen
//! so the pair keeps at least its target strength, and a few bias-only items
//! rated on the other side of neutral. Remaining slots are filled with
//! single-feature items, so the only co-occurring pairs in a generated PKG are
//! the planted ones. The catalog additionally holds unrated items with the
//! planted features and a background of random items.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, CatalogEntry};
use crate::error::{Error, Result};
use crate::pie::{bias_score, BiasSign};
use crate::pkg::{Feature, ItemId, Pkg, RatedItem, RatingScale, Relation, UserId};

/// A pair planted into every generated user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedPie {
    pub given: Feature,
    pub bias: Feature,
    #[serde(default = "default_sign")]
    pub sign: BiasSign,
    /// Minimum `|q_bias|` the pair must reach; values below 0.5 are raised to 0.5.
    #[serde(default = "default_strength")]
    pub strength: f64,
    /// Items carrying both features.
    #[serde(default = "default_support")]
    pub support: usize,
}

fn default_sign() -> BiasSign {
    BiasSign::Positive
}

fn default_strength() -> f64 {
    0.6
}

fn default_support() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortSpec {
    pub seed: u64,
    pub users: usize,
    pub items_per_user: usize,
    pub scale_min: i32,
    pub scale_max: i32,
    pub tag_vocab: usize,
    pub ingredient_vocab: usize,
    pub planted: Vec<PlantedPie>,
    pub random_planted_per_user: usize,
    /// Inclusive `[lo, hi]` support for randomly planted pairs.
    pub planted_support: [usize; 2],
    pub planted_strength: f64,
    /// Share of randomly planted pairs with a negative sign.
    pub negative_fraction: f64,
    /// Upper bound on given-only items per planted pair.
    pub max_given_only: usize,
    /// Inclusive `[lo, hi]` count of bias-only items per planted pair.
    pub bias_only_items: [usize; 2],
    /// Unrated catalog items per planted pair that carry both features.
    pub novel_pair_items: usize,
    /// Unrated catalog items per planted pair that carry the given feature only.
    pub novel_given_items: usize,
    /// Random background catalog items.
    pub background_items: usize,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            seed: 0,
            users: 20,
            items_per_user: 280,
            scale_min: 0,
            scale_max: 5,
            tag_vocab: 120,
            ingredient_vocab: 120,
            planted: Vec::new(),
            random_planted_per_user: 30,
            planted_support: [3, 4],
            planted_strength: 0.6,
            negative_fraction: 0.0,
            max_given_only: 2,
            bias_only_items: [0, 1],
            novel_pair_items: 2,
            novel_given_items: 3,
            background_items: 500,
        }
    }
}

impl CohortSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("cohort spec: {e}")))
    }

    pub fn scale(&self) -> Result<RatingScale> {
        RatingScale::new(self.scale_min, self.scale_max)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("cohort spec: {m}")));
        if self.planted_support[0] < 2 || self.planted_support[0] > self.planted_support[1] {
            return bad("planted_support must be an ordered range starting at 2 or more");
        }
        if self.bias_only_items[0] > self.bias_only_items[1] {
            return bad("bias_only_items must be an ordered range");
        }
        if !(0.0..=1.0).contains(&self.negative_fraction) {
            return bad("negative_fraction must lie in [0, 1]");
        }
        for s in self
            .planted
            .iter()
            .map(|p| p.strength)
            .chain([self.planted_strength])
        {
            if !(s.is_finite() && s <= 1.0) {
                return bad("planted strength must be a number no larger than 1");
            }
        }
        if let Some(p) = self.planted.iter().find(|p| p.support < 2) {
            return bad(&format!(
                "planted pair {} -> {} needs support >= 2",
                p.given, p.bias
            ));
        }
        Ok(())
    }
}

fn vocabulary(spec: &CohortSpec) -> Vec<Feature> {
    let tags = (0..spec.tag_vocab).map(|i| Feature::new(Relation::HasTag, &format!("tag{i:03}")));
    let ingr = (0..spec.ingredient_vocab)
        .map(|i| Feature::new(Relation::HasIngredient, &format!("ingredient{i:03}")));
    tags.chain(ingr)
        .map(|f| f.expect("generated values are non-empty"))
        .collect()
}

struct Ids(usize);

impl Ids {
    fn next(&mut self) -> (ItemId, String) {
        self.0 += 1;
        (
            ItemId::new(format!("r{:06}", self.0)),
            format!("Recipe {:06}", self.0),
        )
    }
}

/// Bias-side and opposite-side star bands for a sign.
struct Bands {
    bias_side: (i32, i32),
    other_side: (i32, i32),
}

fn bands(scale: RatingScale, sign: BiasSign) -> Bands {
    let (min, max) = (scale.min(), scale.max());
    let mid_x2 = min + max;
    // strictly above / below the midpoint
    let above_lo = mid_x2 / 2 + 1;
    let below_hi = (mid_x2 - 1) / 2;
    let high = (above_lo.max(max - 1), max);
    let low = (min, below_hi.min(min + 1));
    match sign {
        BiasSign::Positive => Bands {
            bias_side: high,
            other_side: (min, below_hi),
        },
        BiasSign::Negative => Bands {
            bias_side: low,
            other_side: (above_lo, max),
        },
    }
}

struct Plan {
    given: Feature,
    bias: Feature,
    sign: BiasSign,
    strength: f64,
    support: usize,
}

/// Largest given-only count that keeps `|q| >= strength`.
fn given_only_budget(
    pair_stars: &[i32],
    scale: RatingScale,
    strength: f64,
    cap: usize,
) -> Option<usize> {
    let mid_x2 = scale.midpoint_x2();
    let dev: i64 = pair_stars
        .iter()
        .map(|&r| (2 * i64::from(r) - mid_x2).abs())
        .sum();
    let k = pair_stars.len();
    let q_with = |m: usize| dev as f64 / (mid_x2 as f64 * (k + m) as f64);
    if q_with(0) < strength {
        return None;
    }
    let mut m = 0;
    while m < cap && q_with(m + 1) >= strength {
        m += 1;
    }
    Some(m)
}

pub fn generate_synthetic_cohort(spec: &CohortSpec, seed: u64) -> Result<(Catalog, Vec<Pkg>)> {
    spec.validate()?;
    let scale = spec.scale()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = vocabulary(spec);
    let explicit: BTreeSet<&Feature> = spec
        .planted
        .iter()
        .flat_map(|p| [&p.given, &p.bias])
        .collect();
    if explicit.len() != 2 * spec.planted.len() {
        return Err(Error::Config(
            "cohort spec: planted pairs must use distinct features".into(),
        ));
    }
    let pool: Vec<&Feature> = vocab.iter().filter(|f| !explicit.contains(f)).collect();

    let mut ids = Ids(0);
    let mut catalog = Catalog::new();
    let mut pkgs = Vec::with_capacity(spec.users);
    let add_entry = |catalog: &mut Catalog, ids: &mut Ids, features: BTreeSet<Feature>| {
        let (id, name) = ids.next();
        catalog.insert(CatalogEntry {
            id: id.clone(),
            name: name.clone(),
            features: features.clone(),
        });
        (id, name, features)
    };

    for u in 0..spec.users {
        let user = UserId::new(format!("u{u:03}"));
        let n_random = spec.random_planted_per_user;
        if pool.len() < 2 * n_random + 1 {
            return Err(Error::Config(format!(
                "cohort spec: vocabulary of {} features cannot host {} random planted pairs plus filler",
                pool.len(),
                n_random
            )));
        }
        let mut drawn: Vec<&Feature> = pool
            .choose_multiple(&mut rng, 2 * n_random)
            .copied()
            .collect();
        drawn.shuffle(&mut rng);
        let mut plans: Vec<Plan> = spec
            .planted
            .iter()
            .map(|p| Plan {
                given: p.given.clone(),
                bias: p.bias.clone(),
                sign: p.sign,
                strength: p.strength.max(0.5),
                support: p.support,
            })
            .collect();
        for pair in drawn.chunks(2) {
            let sign = if rng.gen_bool(spec.negative_fraction) {
                BiasSign::Negative
            } else {
                BiasSign::Positive
            };
            plans.push(Plan {
                given: pair[0].clone(),
                bias: pair[1].clone(),
                sign,
                strength: spec.planted_strength.max(0.5),
                support: rng.gen_range(spec.planted_support[0]..=spec.planted_support[1]),
            });
        }
        let planted_here: BTreeSet<&Feature> =
            plans.iter().flat_map(|p| [&p.given, &p.bias]).collect();
        let filler: Vec<&Feature> = vocab.iter().filter(|f| !planted_here.contains(f)).collect();
        if filler.is_empty() {
            return Err(Error::Config(
                "cohort spec: no vocabulary left for filler items".into(),
            ));
        }

        let mut pkg = Pkg::new(user.clone(), scale);
        let rate = |pkg: &mut Pkg,
                    catalog: &mut Catalog,
                    ids: &mut Ids,
                    features: BTreeSet<Feature>,
                    stars: i32| {
            let (id, name, features) = add_entry(catalog, ids, features);
            let rating = scale.rating(stars)?;
            pkg.insert(RatedItem {
                id,
                name,
                rating,
                features,
            })
        };

        for plan in &plans {
            let b = bands(scale, plan.sign);
            let mut pair_stars: Vec<i32> = (0..plan.support)
                .map(|_| rng.gen_range(b.bias_side.0..=b.bias_side.1))
                .collect();
            let extreme = match plan.sign {
                BiasSign::Positive => scale.max(),
                BiasSign::Negative => scale.min(),
            };
            let m = match given_only_budget(&pair_stars, scale, plan.strength, spec.max_given_only)
            {
                Some(m) => m,
                None => {
                    pair_stars.iter_mut().for_each(|r| *r = extreme);
                    given_only_budget(&pair_stars, scale, plan.strength, spec.max_given_only)
                        .ok_or_else(|| {
                            Error::Config(format!(
                                "cohort spec: planted pair {} -> {} cannot reach strength {}",
                                plan.given, plan.bias, plan.strength
                            ))
                        })?
                }
            };
            let nb = rng.gen_range(spec.bias_only_items[0]..=spec.bias_only_items[1]);
            if pkg.len() + plan.support + m + nb > spec.items_per_user {
                return Err(Error::Config(format!(
                    "cohort spec: planted pairs need more than items_per_user = {} items",
                    spec.items_per_user
                )));
            }
            let both: BTreeSet<Feature> = [plan.given.clone(), plan.bias.clone()].into();
            for &stars in &pair_stars {
                rate(&mut pkg, &mut catalog, &mut ids, both.clone(), stars)?;
            }
            for _ in 0..m {
                let stars = rng.gen_range(scale.min()..=scale.max());
                rate(
                    &mut pkg,
                    &mut catalog,
                    &mut ids,
                    [plan.given.clone()].into(),
                    stars,
                )?;
            }
            for _ in 0..nb {
                let stars = rng.gen_range(b.other_side.0..=b.other_side.1);
                rate(
                    &mut pkg,
                    &mut catalog,
                    &mut ids,
                    [plan.bias.clone()].into(),
                    stars,
                )?;
            }
        }
        while pkg.len() < spec.items_per_user {
            let f = (*filler.choose(&mut rng).expect("non-empty")).clone();
            let stars = rng.gen_range(scale.min()..=scale.max());
            rate(&mut pkg, &mut catalog, &mut ids, [f].into(), stars)?;
        }

        for plan in &plans {
            let score = bias_score(&pkg, &plan.given, &plan.bias)?;
            if score.q_bias.abs() < plan.strength || score.sign() != Some(plan.sign) {
                return Err(Error::Inconsistent(format!(
                    "planted pair {} -> {} for {user} scored {}",
                    plan.given, plan.bias, score.q_bias
                )));
            }
            for _ in 0..spec.novel_pair_items {
                let extra = (*filler.choose(&mut rng).expect("non-empty")).clone();
                add_entry(
                    &mut catalog,
                    &mut ids,
                    [plan.given.clone(), plan.bias.clone(), extra].into(),
                );
            }
            for _ in 0..spec.novel_given_items {
                let extra = (*filler.choose(&mut rng).expect("non-empty")).clone();
                add_entry(&mut catalog, &mut ids, [plan.given.clone(), extra].into());
            }
        }
        pkgs.push(pkg);
    }

    for _ in 0..spec.background_items {
        let n = rng.gen_range(1..=2usize.min(vocab.len()));
        let features: BTreeSet<Feature> = vocab.choose_multiple(&mut rng, n).cloned().collect();
        add_entry(&mut catalog, &mut ids, features);
    }
    Ok((catalog, pkgs))
}
