//! Users, items, features, ratings and the personalized knowledge graph (PKG).
//!
//! A PKG is flattened into [`RatedItem`] records: every item carries the
//! user's rating plus its `hasIngredient` / `hasTag` feature triples.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The two feature relations a recipe item can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Relation {
    HasIngredient,
    HasTag,
}

impl Relation {
    pub fn as_str(self) -> &'static str {
        match self {
            Relation::HasIngredient => "hasIngredient",
            Relation::HasTag => "hasTag",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Relation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hasingredient" | "ingredient" => Ok(Relation::HasIngredient),
            "hastag" | "tag" => Ok(Relation::HasTag),
            _ => Err(Error::UnknownRelation(s.to_string())),
        }
    }
}

/// Lowercase, trim and collapse internal whitespace runs to one space.
pub fn normalize_feature_value(raw: &str) -> String {
    raw.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// A `(relation, value)` feature; the value is always normalized and non-empty.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Feature {
    relation: Relation,
    value: String,
}

impl Feature {
    pub fn new(relation: Relation, value: &str) -> Result<Self> {
        let value = normalize_feature_value(value);
        if value.is_empty() {
            return Err(Error::EmptyFeature);
        }
        Ok(Feature { relation, value })
    }

    pub fn tag(value: &str) -> Result<Self> {
        Feature::new(Relation::HasTag, value)
    }

    pub fn ingredient(value: &str) -> Result<Self> {
        Feature::new(Relation::HasIngredient, value)
    }

    pub fn relation(&self) -> Relation {
        self.relation
    }

    pub fn value(&self) -> &str {
        &self.value
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.relation, self.value)
    }
}

/// Parses `hasTag:italian` / `hasIngredient:tomato` (relation is case-insensitive).
impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (relation, value) = s.split_once(':').ok_or_else(|| {
            Error::Config(format!("feature `{s}` is not of the form relation:value"))
        })?;
        Feature::new(relation.parse()?, value)
    }
}

impl TryFrom<String> for Feature {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Feature> for String {
    fn from(f: Feature) -> Self {
        f.to_string()
    }
}

/// Inclusive integer rating scale. The neutral midpoint is `(min + max) / 2`,
/// kept exact by working in doubled units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RatingScale {
    min: i32,
    max: i32,
}

impl Default for RatingScale {
    fn default() -> Self {
        RatingScale { min: 0, max: 5 }
    }
}

impl RatingScale {
    /// Requires `0 <= min < max`, so the midpoint is strictly positive.
    pub fn new(min: i32, max: i32) -> Result<Self> {
        if min < 0 || min >= max {
            return Err(Error::InvalidScale { min, max });
        }
        Ok(RatingScale { min, max })
    }

    pub fn min(&self) -> i32 {
        self.min
    }

    pub fn max(&self) -> i32 {
        self.max
    }

    /// `2 * midpoint`, always an integer.
    pub fn midpoint_x2(&self) -> i64 {
        i64::from(self.min) + i64::from(self.max)
    }

    pub fn midpoint(&self) -> f64 {
        self.midpoint_x2() as f64 / 2.0
    }

    pub fn rating(&self, stars: i32) -> Result<Rating> {
        Rating::new(stars, *self)
    }
}

/// An integer rating that is always inside its scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rating {
    stars: i32,
    scale: RatingScale,
}

impl Rating {
    pub fn new(stars: i32, scale: RatingScale) -> Result<Self> {
        if stars < scale.min || stars > scale.max {
            return Err(Error::RatingOutOfRange {
                stars,
                min: scale.min,
                max: scale.max,
            });
        }
        Ok(Rating { stars, scale })
    }

    pub fn stars(&self) -> i32 {
        self.stars
    }

    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    /// `2 * (stars - midpoint)`; positive above neutral, negative below.
    pub fn deviation_x2(&self) -> i64 {
        2 * i64::from(self.stars) - self.scale.midpoint_x2()
    }

    pub fn is_above_neutral(&self) -> bool {
        self.deviation_x2() > 0
    }

    pub fn is_below_neutral(&self) -> bool {
        self.deviation_x2() < 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(pub String);

impl ItemId {
    pub fn new(id: impl Into<String>) -> Self {
        ItemId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ItemId {
    fn from(s: &str) -> Self {
        ItemId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub String);

impl UserId {
    pub fn new(id: impl Into<String>) -> Self {
        UserId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for UserId {
    fn from(s: &str) -> Self {
        UserId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatedItem {
    pub id: ItemId,
    pub name: String,
    pub rating: Rating,
    pub features: BTreeSet<Feature>,
}

impl RatedItem {
    pub fn new(
        id: impl Into<ItemId>,
        name: impl Into<String>,
        rating: Rating,
        features: impl IntoIterator<Item = Feature>,
    ) -> Self {
        RatedItem {
            id: id.into(),
            name: name.into(),
            rating,
            features: features.into_iter().collect(),
        }
    }

    pub fn has(&self, feature: &Feature) -> bool {
        self.features.contains(feature)
    }
}

impl From<String> for ItemId {
    fn from(s: String) -> Self {
        ItemId(s)
    }
}

/// One user's rated items, keyed by item id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pkg {
    user_id: UserId,
    scale: RatingScale,
    items: BTreeMap<ItemId, RatedItem>,
}

impl Pkg {
    pub fn new(user_id: impl Into<UserId>, scale: RatingScale) -> Self {
        Pkg {
            user_id: user_id.into(),
            scale,
            items: BTreeMap::new(),
        }
    }

    pub fn from_items(
        user_id: impl Into<UserId>,
        scale: RatingScale,
        items: impl IntoIterator<Item = RatedItem>,
    ) -> Result<Self> {
        let mut pkg = Pkg::new(user_id, scale);
        for item in items {
            pkg.insert(item)?;
        }
        Ok(pkg)
    }

    pub fn user_id(&self) -> &UserId {
        &self.user_id
    }

    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    pub fn neutral_midpoint(&self) -> f64 {
        self.scale.midpoint()
    }

    /// Rejects duplicate ids and ratings from a different scale.
    pub fn insert(&mut self, item: RatedItem) -> Result<()> {
        if item.rating.scale() != self.scale {
            return Err(Error::InvalidScale {
                min: item.rating.scale().min(),
                max: item.rating.scale().max(),
            });
        }
        if self.items.contains_key(&item.id) {
            return Err(Error::DuplicateItem(item.id.0));
        }
        self.items.insert(item.id.clone(), item);
        Ok(())
    }

    /// Inserts or overwrites; used for last-wins ingestion.
    pub(crate) fn upsert(&mut self, item: RatedItem) {
        self.items.insert(item.id.clone(), item);
    }

    pub(crate) fn item_mut(&mut self, id: &ItemId) -> Option<&mut RatedItem> {
        self.items.get_mut(id)
    }

    pub fn remove(&mut self, id: &ItemId) -> Option<RatedItem> {
        self.items.remove(id)
    }

    pub fn get(&self, id: &ItemId) -> Option<&RatedItem> {
        self.items.get(id)
    }

    pub fn contains(&self, id: &ItemId) -> bool {
        self.items.contains_key(id)
    }

    /// Items in ascending id order.
    pub fn items(&self) -> impl Iterator<Item = &RatedItem> {
        self.items.values()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Every feature present on at least one item.
    pub fn features(&self) -> BTreeSet<&Feature> {
        self.items
            .values()
            .flat_map(|i| i.features.iter())
            .collect()
    }

    /// Ids of items whose feature set contains `feature`.
    pub fn items_with_feature(&self, feature: &Feature) -> BTreeSet<ItemId> {
        self.items
            .values()
            .filter(|i| i.has(feature))
            .map(|i| i.id.clone())
            .collect()
    }

    /// Ids of items carrying both features. The pair must be non-degenerate.
    pub fn items_with_pair(&self, first: &Feature, second: &Feature) -> Result<BTreeSet<ItemId>> {
        if first == second {
            return Err(Error::DegeneratePair(first.to_string()));
        }
        Ok(self
            .items
            .values()
            .filter(|i| i.has(first) && i.has(second))
            .map(|i| i.id.clone())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(items: &[&str]) -> BTreeSet<ItemId> {
        items.iter().map(|s| ItemId::from(*s)).collect()
    }

    fn sample_pkg() -> Pkg {
        let s = RatingScale::default();
        let italian = Feature::tag("Italian").unwrap();
        let french = Feature::tag("french").unwrap();
        let tomato = Feature::ingredient("tomato").unwrap();
        Pkg::from_items(
            "u1",
            s,
            [
                RatedItem::new("A", "A", s.rating(5).unwrap(), [italian.clone(), tomato]),
                RatedItem::new("B", "B", s.rating(4).unwrap(), [italian]),
                RatedItem::new("C", "C", s.rating(2).unwrap(), [french]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn feature_normalization() {
        let f = Feature::tag("  Sweet   AND\tSour ").unwrap();
        assert_eq!(f.value(), "sweet and sour");
        assert!(matches!(Feature::tag("   "), Err(Error::EmptyFeature)));
        assert_ne!(
            Feature::tag("basil").unwrap(),
            Feature::ingredient("basil").unwrap()
        );
        assert_eq!(
            "HASTAG: Italian".parse::<Feature>().unwrap(),
            Feature::tag("italian").unwrap()
        );
        assert!("hasColor:red".parse::<Feature>().is_err());
    }

    #[test]
    fn midpoint_is_exact() {
        let s = RatingScale::default();
        assert_eq!(s.midpoint_x2(), 5);
        assert!(s.rating(3).unwrap().is_above_neutral());
        assert!(s.rating(2).unwrap().is_below_neutral());
        for stars in 0..=5 {
            assert_ne!(s.rating(stars).unwrap().deviation_x2(), 0);
        }
        assert!(RatingScale::new(3, 3).is_err());
        assert!(RatingScale::new(-1, 5).is_err());
    }

    #[test]
    fn feature_queries() {
        let pkg = sample_pkg();
        let italian = Feature::tag("italian").unwrap();
        let tomato = Feature::ingredient("tomato").unwrap();
        let french = Feature::tag("french").unwrap();
        assert_eq!(pkg.items_with_feature(&italian), ids(&["A", "B"]));
        assert!(pkg
            .items_with_feature(&Feature::tag("thai").unwrap())
            .is_empty());
        assert_eq!(pkg.items_with_pair(&italian, &tomato).unwrap(), ids(&["A"]));
        assert!(pkg.items_with_pair(&italian, &french).unwrap().is_empty());
        assert!(matches!(
            pkg.items_with_pair(&italian, &italian),
            Err(Error::DegeneratePair(_))
        ));
    }

    #[test]
    fn insert_rejects_duplicates_and_foreign_scale() {
        let mut pkg = sample_pkg();
        let s = pkg.scale();
        assert!(pkg
            .insert(RatedItem::new("A", "again", s.rating(1).unwrap(), []))
            .is_err());
        let other = RatingScale::new(1, 10).unwrap();
        assert!(pkg
            .insert(RatedItem::new("Z", "z", other.rating(7).unwrap(), []))
            .is_err());
    }

    fn arb_pkg() -> impl Strategy<Value = Pkg> {
        prop::collection::vec((0i32..=5, prop::collection::btree_set(0u8..8, 0..5)), 0..30)
            .prop_map(|rows| {
                let s = RatingScale::default();
                let items = rows.into_iter().enumerate().map(|(i, (stars, feats))| {
                    RatedItem::new(
                        format!("i{i:03}"),
                        format!("item {i}"),
                        s.rating(stars).unwrap(),
                        feats
                            .into_iter()
                            .map(|f| Feature::tag(&format!("f{f}")).unwrap()),
                    )
                });
                Pkg::from_items("u", s, items).unwrap()
            })
    }

    proptest! {
        #[test]
        fn ratings_out_of_range_rejected(min in 0i32..5, width in 1i32..10, stars in -20i32..40) {
            let scale = RatingScale::new(min, min + width).unwrap();
            let ok = stars >= min && stars <= min + width;
            prop_assert_eq!(scale.rating(stars).is_ok(), ok);
        }

        #[test]
        fn queries_match_linear_scan(pkg in arb_pkg(), a in 0u8..8, b in 0u8..8) {
            let fa = Feature::tag(&format!("f{a}")).unwrap();
            let fb = Feature::tag(&format!("f{b}")).unwrap();
            let mut scan = BTreeSet::new();
            for item in pkg.items() {
                if item.features.iter().any(|f| *f == fa) {
                    scan.insert(item.id.clone());
                }
            }
            prop_assert_eq!(pkg.items_with_feature(&fa), scan.clone());
            if a != b {
                let pair = pkg.items_with_pair(&fa, &fb).unwrap();
                let brute: BTreeSet<_> = scan
                    .iter()
                    .filter(|id| pkg.get(id).unwrap().features.iter().any(|f| *f == fb))
                    .cloned()
                    .collect();
                prop_assert!(pair.is_subset(&pkg.items_with_feature(&fa)));
                prop_assert_eq!(pair, brute);
            }
            let copy = pkg.clone();
            prop_assert_eq!(copy.items_with_feature(&fa), pkg.items_with_feature(&fa));
        }
    }
}
