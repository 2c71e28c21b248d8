//! Deterministic preference-scoring stand-in for a fine-tuned model.
//!
//! Every catalog item the (adapted) PKG does not already hold is scored as
//!
//! ```text
//! score(c) = trait_bonus * [c has query trait] + affinity_scale * Σ_{f in c} aff(f)
//! aff(f)   = mean(rating - μ) over PKG items with f, 0 if none
//! ```
//!
//! and the highest-scoring item's name is returned (ties: smallest id).

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{BackendError, RawRecommendation, RecommendationRequest, Recommender};
use crate::catalog::Catalog;
use crate::pkg::{Feature, ItemId, Pkg};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleWeights {
    pub trait_bonus: f64,
    pub affinity_scale: f64,
}

impl Default for OracleWeights {
    fn default() -> Self {
        OracleWeights {
            trait_bonus: 10.0,
            affinity_scale: 1.0,
        }
    }
}

/// Mean deviation from neutral per feature present in the PKG.
pub fn affinity(pkg: &Pkg) -> BTreeMap<&Feature, f64> {
    let mut acc: BTreeMap<&Feature, (i64, i64)> = BTreeMap::new();
    for item in pkg.items() {
        let dev = item.rating.deviation_x2();
        for f in &item.features {
            let slot = acc.entry(f).or_default();
            slot.0 += dev;
            slot.1 += 1;
        }
    }
    acc.into_iter()
        .map(|(f, (sum_x2, n))| (f, sum_x2 as f64 / (2 * n) as f64))
        .collect()
}

fn candidate_scores<'c>(
    req: &'c RecommendationRequest<'_>,
    catalog: &'c Catalog,
    weights: &'c OracleWeights,
) -> impl Iterator<Item = (&'c ItemId, f64)> + 'c {
    let aff = affinity(req.pkg);
    catalog
        .entries()
        .filter(|e| !req.pkg.contains(&e.id))
        .map(move |e| {
            let bonus = if e.has(req.query) {
                weights.trait_bonus
            } else {
                0.0
            };
            let pull: f64 = e
                .features
                .iter()
                .map(|f| aff.get(f).copied().unwrap_or(0.0))
                .sum();
            (&e.id, bonus + weights.affinity_scale * pull)
        })
}

/// Scores for every candidate, in catalog (id) order.
pub fn oracle_scores(
    req: &RecommendationRequest<'_>,
    catalog: &Catalog,
    weights: &OracleWeights,
) -> Vec<(ItemId, f64)> {
    candidate_scores(req, catalog, weights)
        .map(|(id, s)| (id.clone(), s))
        .collect()
}

pub fn oracle_recommend(
    req: &RecommendationRequest<'_>,
    catalog: &Catalog,
    weights: &OracleWeights,
) -> Result<RawRecommendation, BackendError> {
    let start = Instant::now();
    // strict > keeps the first (smallest id) among equal scores
    let mut best: Option<(&ItemId, f64)> = None;
    for (id, score) in candidate_scores(req, catalog, weights) {
        if best.is_none_or(|(_, top)| score > top) {
            best = Some((id, score));
        }
    }
    let (id, _) = best.ok_or(BackendError::NoCandidate)?;
    let name = catalog.get(id).map(|e| e.name.clone()).unwrap_or_default();
    Ok(RawRecommendation {
        text: name,
        backend_id: "oracle".to_string(),
        latency: start.elapsed(),
    })
}

/// Catalog features interned to dense indices, entries in catalog order.
#[derive(Debug, Clone)]
struct FeatureIndex {
    ids: BTreeMap<Feature, usize>,
    /// Per entry, feature indices in the entry's feature order.
    entries: Vec<Vec<usize>>,
}

impl FeatureIndex {
    fn build(catalog: &Catalog) -> Self {
        let ids: BTreeMap<Feature, usize> = catalog
            .entries()
            .flat_map(|e| e.features.iter().cloned())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .enumerate()
            .map(|(i, f)| (f, i))
            .collect();
        let entries = catalog
            .entries()
            .map(|e| e.features.iter().map(|f| ids[f]).collect())
            .collect();
        FeatureIndex { ids, entries }
    }
}

/// Scores with [`oracle_recommend`]'s rule, using an index built once per
/// catalog.
#[derive(Debug, Clone)]
pub struct OracleBackend {
    catalog: Arc<Catalog>,
    weights: OracleWeights,
    index: FeatureIndex,
}

impl OracleBackend {
    pub fn new(catalog: Arc<Catalog>, weights: OracleWeights) -> Self {
        let index = FeatureIndex::build(&catalog);
        OracleBackend {
            catalog,
            weights,
            index,
        }
    }

    pub fn weights(&self) -> &OracleWeights {
        &self.weights
    }

    fn dense_affinity(&self, pkg: &Pkg) -> Vec<f64> {
        let n = self.index.ids.len();
        let (mut sum_x2, mut count) = (vec![0i64; n], vec![0i64; n]);
        for item in pkg.items() {
            let dev = item.rating.deviation_x2();
            for f in &item.features {
                if let Some(&i) = self.index.ids.get(f) {
                    sum_x2[i] += dev;
                    count[i] += 1;
                }
            }
        }
        sum_x2
            .iter()
            .zip(&count)
            .map(|(&s, &c)| {
                if c == 0 {
                    0.0
                } else {
                    s as f64 / (2 * c) as f64
                }
            })
            .collect()
    }
}

impl Recommender for OracleBackend {
    fn id(&self) -> &str {
        "oracle"
    }

    fn recommend(
        &self,
        req: &RecommendationRequest<'_>,
    ) -> Result<RawRecommendation, BackendError> {
        let start = Instant::now();
        let aff = self.dense_affinity(req.pkg);
        let query = self.index.ids.get(req.query).copied();
        // catalog and PKG are both ordered by id, so held items are skipped in one merge pass
        let mut held = req.pkg.items().map(|it| &it.id).peekable();
        let mut best: Option<(&ItemId, f64)> = None;
        for (entry, feats) in self.catalog.entries().zip(&self.index.entries) {
            while held.next_if(|id| *id < &entry.id).is_some() {}
            if held.peek() == Some(&&entry.id) {
                continue;
            }
            let bonus = match query {
                Some(q) if feats.contains(&q) => self.weights.trait_bonus,
                _ => 0.0,
            };
            let pull: f64 = feats.iter().map(|&i| aff[i]).sum();
            let score = bonus + self.weights.affinity_scale * pull;
            if best.is_none_or(|(_, top)| score > top) {
                best = Some((&entry.id, score));
            }
        }
        let (id, _) = best.ok_or(BackendError::NoCandidate)?;
        Ok(RawRecommendation {
            text: self
                .catalog
                .get(id)
                .map(|e| e.name.clone())
                .unwrap_or_default(),
            backend_id: "oracle".to_string(),
            latency: start.elapsed(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapt::{apply_adaptation, AdaptationPolicy, Strategy};
    use crate::catalog::CatalogEntry;
    use crate::pie::bias_score;
    use crate::pkg::{RatedItem, RatingScale};
    use proptest::prelude::*;

    fn f(s: &str) -> Feature {
        s.parse().unwrap()
    }

    fn entry(id: &str, name: &str, feats: &[&str]) -> CatalogEntry {
        CatalogEntry {
            id: ItemId::from(id),
            name: name.into(),
            features: feats.iter().map(|x| f(x)).collect(),
        }
    }

    /// PKG loves tomato; the only Italian candidates are one with tomato and one without.
    fn fixture() -> (Catalog, Pkg) {
        let s = RatingScale::default();
        let pkg = Pkg::from_items(
            "u",
            s,
            [
                RatedItem::new(
                    "p1",
                    "Margherita Pizza",
                    s.rating(5).unwrap(),
                    [f("hasTag:italian"), f("hasIngredient:tomato")],
                ),
                RatedItem::new(
                    "p2",
                    "Tomato Pasta",
                    s.rating(5).unwrap(),
                    [f("hasTag:italian"), f("hasIngredient:tomato")],
                ),
                RatedItem::new(
                    "p3",
                    "Cannoli",
                    s.rating(2).unwrap(),
                    [f("hasTag:italian"), f("hasIngredient:ricotta")],
                ),
                RatedItem::new(
                    "p4",
                    "Tomato Soup",
                    s.rating(1).unwrap(),
                    [f("hasIngredient:tomato")],
                ),
            ],
        )
        .unwrap();
        let mut entries = vec![
            entry(
                "c1",
                "Tomato Bruschetta",
                &["hasTag:italian", "hasIngredient:tomato"],
            ),
            entry(
                "c2",
                "Pesto Pasta",
                &["hasTag:italian", "hasIngredient:basil"],
            ),
            entry(
                "c3",
                "Gazpacho",
                &["hasTag:spanish", "hasIngredient:tomato"],
            ),
        ];
        entries.extend(pkg.items().map(|i| CatalogEntry {
            id: i.id.clone(),
            name: i.name.clone(),
            features: i.features.clone(),
        }));
        (Catalog::from_entries(entries), pkg)
    }

    #[test]
    fn affinity_is_mean_deviation() {
        let (_, pkg) = fixture();
        let aff = affinity(&pkg);
        // italian: (2.5 + 2.5 - 0.5) / 3 = 1.5
        assert!((aff[&f("hasTag:italian")] - 1.5).abs() < 1e-12);
        assert!((aff[&f("hasIngredient:tomato")] - 3.5 / 3.0).abs() < 1e-12);
        assert!((aff[&f("hasIngredient:ricotta")] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn unadapted_pkg_picks_tomato_dish() {
        let (catalog, pkg) = fixture();
        let query = f("hasTag:italian");
        let req = RecommendationRequest {
            pkg: &pkg,
            query: &query,
            baseline_bias: None,
        };
        // c1: 10 + 1.5 + 7/6; c2: 10 + 1.5; c3: 7/6
        let scores: BTreeMap<_, _> = oracle_scores(&req, &catalog, &OracleWeights::default())
            .into_iter()
            .collect();
        assert_eq!(scores.len(), 3);
        assert!((scores[&ItemId::from("c1")] - (11.5 + 7.0 / 6.0)).abs() < 1e-12);
        assert!((scores[&ItemId::from("c2")] - 11.5).abs() < 1e-12);
        assert!((scores[&ItemId::from("c3")] - 7.0 / 6.0).abs() < 1e-12);
        let out = oracle_recommend(&req, &catalog, &OracleWeights::default()).unwrap();
        assert_eq!(out.text, "Tomato Bruschetta");
    }

    #[test]
    fn removal_flips_to_out_of_bubble_dish() {
        let (catalog, pkg) = fixture();
        let pie = bias_score(&pkg, &f("hasTag:italian"), &f("hasIngredient:tomato")).unwrap();
        let adapted = apply_adaptation(
            &pkg,
            &pie,
            &AdaptationPolicy::new(Strategy::Removal, 1.0).unwrap(),
        )
        .unwrap();
        let query = f("hasTag:italian");
        let req = RecommendationRequest {
            pkg: &adapted,
            query: &query,
            baseline_bias: None,
        };
        // only the disliked soup keeps tomato: aff(tomato) = -1.5, aff(italian) = -0.5
        // c1: 10 - 0.5 - 1.5 = 8; c2: 10 - 0.5 = 9.5; removed p1/p2 are candidates again at 8
        let scores: BTreeMap<_, _> = oracle_scores(&req, &catalog, &OracleWeights::default())
            .into_iter()
            .collect();
        assert!((scores[&ItemId::from("c1")] - 8.0).abs() < 1e-12);
        assert!((scores[&ItemId::from("c2")] - 9.5).abs() < 1e-12);
        assert!((scores[&ItemId::from("p1")] - 8.0).abs() < 1e-12);
        let out = oracle_recommend(&req, &catalog, &OracleWeights::default()).unwrap();
        assert_eq!(out.text, "Pesto Pasta");
    }

    #[test]
    fn no_candidates_left() {
        let (_, pkg) = fixture();
        let only_pkg = Catalog::from_entries(pkg.items().map(|i| CatalogEntry {
            id: i.id.clone(),
            name: i.name.clone(),
            features: i.features.clone(),
        }));
        let query = f("hasTag:italian");
        let req = RecommendationRequest {
            pkg: &pkg,
            query: &query,
            baseline_bias: None,
        };
        assert_eq!(
            oracle_recommend(&req, &only_pkg, &OracleWeights::default()).unwrap_err(),
            BackendError::NoCandidate
        );
    }

    proptest! {
        #[test]
        fn oracle_is_deterministic_and_novel(ratings in prop::collection::vec(0i32..=5, 4), drop in 0usize..4) {
            let (catalog, base) = fixture();
            let s = base.scale();
            let mut pkg = Pkg::new("u", s);
            for (item, stars) in base.items().zip(&ratings) {
                let mut item = item.clone();
                item.rating = s.rating(*stars).unwrap();
                pkg.insert(item).unwrap();
            }
            let victim = pkg.items().nth(drop).unwrap().id.clone();
            pkg.remove(&victim);
            let query = f("hasTag:italian");
            let req = RecommendationRequest { pkg: &pkg, query: &query, baseline_bias: None };
            let a = oracle_recommend(&req, &catalog, &OracleWeights::default()).unwrap();
            let b = oracle_recommend(&req, &catalog, &OracleWeights::default()).unwrap();
            prop_assert_eq!(&a.text, &b.text);
            let id = catalog.lookup_name(&a.text).unwrap();
            prop_assert!(!pkg.contains(id));
        }

        #[test]
        fn lowering_bias_ratings_lowers_bias_affinity(ratings in prop::collection::vec(0i32..=5, 4), idx in 0usize..4, dec in 1i32..=5) {
            let (_, base) = fixture();
            let s = base.scale();
            let tomato = f("hasIngredient:tomato");
            let mut pkg = Pkg::new("u", s);
            for (item, stars) in base.items().zip(&ratings) {
                let mut item = item.clone();
                item.rating = s.rating(*stars).unwrap();
                pkg.insert(item).unwrap();
            }
            let mut lowered = pkg.clone();
            let id = lowered.items().nth(idx).unwrap().id.clone();
            let item = lowered.item_mut(&id).unwrap();
            if item.has(&tomato) {
                item.rating = s.rating((item.rating.stars() - dec).max(0)).unwrap();
            }
            prop_assert!(affinity(&lowered)[&tomato] <= affinity(&pkg)[&tomato]);
        }

        #[test]
        fn indexed_backend_matches_reference(
            items in prop::collection::vec((prop::collection::btree_set(0usize..8, 1..4), prop::option::of(0i32..=5)), 1..30),
            query in 0usize..9,
        ) {
            let vocab: Vec<Feature> = (0..9)
                .map(|i| Feature::new(if i % 2 == 0 { crate::pkg::Relation::HasTag } else { crate::pkg::Relation::HasIngredient }, &format!("v{i}")).unwrap())
                .collect();
            let s = RatingScale::default();
            let mut entries = Vec::new();
            let mut pkg = Pkg::new("u", s);
            for (n, (feats, rating)) in items.iter().enumerate() {
                let e = CatalogEntry {
                    id: ItemId::new(format!("i{n:02}")),
                    name: format!("Dish {n:02}"),
                    features: feats.iter().map(|&k| vocab[k].clone()).collect(),
                };
                if let Some(r) = rating {
                    pkg.insert(RatedItem::new(e.id.clone(), e.name.clone(), s.rating(*r).unwrap(), e.features.clone())).unwrap();
                }
                entries.push(e);
            }
            let catalog = Arc::new(Catalog::from_entries(entries));
            let backend = OracleBackend::new(catalog.clone(), OracleWeights::default());
            // query index 8 never occurs in the catalog
            let req = RecommendationRequest { pkg: &pkg, query: &vocab[query], baseline_bias: None };
            let fast = backend.recommend(&req).map(|r| r.text);
            let slow = oracle_recommend(&req, &catalog, &OracleWeights::default()).map(|r| r.text);
            prop_assert_eq!(fast, slow);
        }
    }
}
