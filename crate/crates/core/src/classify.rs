//! Resolving backend text to a catalog item and bucketing the outcome.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adapt::Strategy;
use crate::backend::RawRecommendation;
use crate::catalog::{normalize_name, Catalog};
use crate::error::{Error, Result};
use crate::pie::FeaturePairBias;
use crate::pkg::{Feature, ItemId, Pkg, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    /// Has the given feature but not the bias feature.
    OutPie,
    /// Has both.
    InPie,
    /// Lacks the given feature, is unresolvable, or is already known to the user.
    Invalid,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::OutPie, Category::InPie, Category::Invalid];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::OutPie => "Out-PIE",
            Category::InPie => "In-PIE",
            Category::Invalid => "Invalid",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s
            .trim()
            .to_ascii_lowercase()
            .replace(['-', '_'], "")
            .as_str()
        {
            "outpie" => Ok(Category::OutPie),
            "inpie" => Ok(Category::InPie),
            "invalid" => Ok(Category::Invalid),
            _ => Err(Error::Config(format!("unknown outcome category `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyOptions {
    /// Count a recommendation of an item the user already rated as Invalid.
    pub reject_known_items: bool,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            reject_known_items: true,
        }
    }
}

/// Longest catalog name occurring in the normalized text on word boundaries;
/// equal lengths resolve to the smallest id.
pub fn extract_item(raw: &str, catalog: &Catalog) -> Option<ItemId> {
    let text = normalize_name(raw);
    if text.is_empty() {
        return None;
    }
    let words: Vec<&str> = text.split(' ').collect();
    let max_span = catalog.max_name_words().min(words.len());
    let mut best: Option<(usize, &ItemId)> = None;
    for start in 0..words.len() {
        for len in 1..=max_span.min(words.len() - start) {
            let candidate = words[start..start + len].join(" ");
            if let Some(id) = catalog.lookup_normalized(&candidate) {
                let better = match best {
                    None => true,
                    Some((best_len, best_id)) => {
                        candidate.len() > best_len || (candidate.len() == best_len && id < best_id)
                    }
                };
                if better {
                    best = Some((candidate.len(), id));
                }
            }
        }
    }
    best.map(|(_, id)| id.clone())
}

/// Buckets a resolved (or unresolved) item against a PIE. `pkg` is the user's
/// base PKG, used for the already-known check.
pub fn classify(
    item: Option<&ItemId>,
    pie: &FeaturePairBias,
    catalog: &Catalog,
    pkg: &Pkg,
    opts: &ClassifyOptions,
) -> Result<Category> {
    let Some(id) = item else {
        return Ok(Category::Invalid);
    };
    let entry = catalog
        .get(id)
        .ok_or_else(|| Error::Inconsistent(format!("resolved item {id} is not in the catalog")))?;
    if opts.reject_known_items && pkg.contains(id) {
        return Ok(Category::Invalid);
    }
    Ok(match (entry.has(&pie.f_given), entry.has(&pie.f_bias)) {
        (false, _) => Category::Invalid,
        (true, true) => Category::InPie,
        (true, false) => Category::OutPie,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecommendationOutcome {
    pub category: Category,
    pub item: Option<ItemId>,
    pub raw: RawRecommendation,
    pub pie: FeaturePairBias,
    pub query: Feature,
}

/// Extracts the item from `raw` and classifies it; the query trait is the
/// PIE's given feature.
pub fn classify_outcome(
    raw: RawRecommendation,
    pie: &FeaturePairBias,
    catalog: &Catalog,
    pkg: &Pkg,
    opts: &ClassifyOptions,
) -> Result<RecommendationOutcome> {
    let item = extract_item(&raw.text, catalog);
    let category = classify(item.as_ref(), pie, catalog, pkg, opts)?;
    Ok(RecommendationOutcome {
        category,
        item,
        raw,
        pie: pie.clone(),
        query: pie.f_given.clone(),
    })
}

/// Escapes backslashes, tabs and line breaks so the text fits one TSV cell.
pub fn escape_field(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

/// One line of the outcome log:
/// `user_id  f_given  f_bias  strategy  proportion  category  item|-  raw`.
pub fn outcome_log_line(
    user: &UserId,
    strategy: Strategy,
    proportion: f64,
    outcome: &RecommendationOutcome,
) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{:.4}\t{}\t{}\t{}",
        user,
        outcome.pie.f_given,
        outcome.pie.f_bias,
        strategy,
        proportion,
        outcome.category,
        outcome.item.as_ref().map_or("-", |id| id.as_str()),
        escape_field(&outcome.raw.text)
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapt::Strategy;
    use crate::catalog::CatalogEntry;
    use crate::pie::bias_score;
    use crate::pkg::{RatedItem, RatingScale};
    use proptest::prelude::*;
    use std::time::Duration;

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

    fn catalog() -> Catalog {
        Catalog::from_entries([
            entry("1", "Cannoli", &["hasTag:italian", "hasIngredient:ricotta"]),
            entry(
                "2",
                "Margherita Pizza",
                &["hasTag:italian", "hasIngredient:tomato"],
            ),
            entry(
                "3",
                "Ratatouille",
                &["hasTag:french", "hasIngredient:tomato"],
            ),
            entry(
                "4",
                "Pesto Pasta",
                &["hasTag:italian", "hasIngredient:basil"],
            ),
            entry("5", "Pasta", &["hasTag:italian"]),
            entry("6", "Lasagna", &["hasTag:italian", "hasIngredient:tomato"]),
        ])
    }

    fn pkg() -> Pkg {
        let s = RatingScale::default();
        Pkg::from_items(
            "u",
            s,
            [
                RatedItem::new(
                    "6",
                    "Lasagna",
                    s.rating(5).unwrap(),
                    [f("hasTag:italian"), f("hasIngredient:tomato")],
                ),
                RatedItem::new(
                    "x",
                    "Tomato Pasta",
                    s.rating(5).unwrap(),
                    [f("hasTag:italian"), f("hasIngredient:tomato")],
                ),
            ],
        )
        .unwrap()
    }

    fn pie() -> FeaturePairBias {
        bias_score(&pkg(), &f("hasTag:italian"), &f("hasIngredient:tomato")).unwrap()
    }

    fn cat_of(name: &str) -> Category {
        let c = catalog();
        let item = extract_item(name, &c);
        classify(
            item.as_ref(),
            &pie(),
            &c,
            &pkg(),
            &ClassifyOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn worked_examples() {
        assert_eq!(cat_of("Cannoli"), Category::OutPie);
        assert_eq!(cat_of("Margherita pizza"), Category::InPie);
        assert_eq!(cat_of("Ratatouille"), Category::Invalid);
    }

    #[test]
    fn extraction() {
        let c = catalog();
        assert_eq!(
            extract_item("I recommend Pesto Pasta!", &c),
            Some(ItemId::from("4"))
        );
        assert_eq!(extract_item("Try a nice soup", &c), None);
        assert_eq!(
            extract_item("Margherita Pizza", &c),
            Some(ItemId::from("2"))
        );
        assert_eq!(extract_item("", &c), None);
        // word boundaries: "pastas" is not "pasta"
        assert_eq!(extract_item("pastas galore", &c), None);
        // equal length names: smallest id
        let tied = Catalog::from_entries([entry("b", "abc", &[]), entry("a", "xyz", &[])]);
        assert_eq!(extract_item("xyz then abc", &tied), Some(ItemId::from("a")));
    }

    #[test]
    fn known_items_and_unresolved() {
        let c = catalog();
        let opts = ClassifyOptions::default();
        assert_eq!(cat_of("Lasagna"), Category::Invalid);
        let lenient = ClassifyOptions {
            reject_known_items: false,
        };
        assert_eq!(
            classify(Some(&ItemId::from("6")), &pie(), &c, &pkg(), &lenient).unwrap(),
            Category::InPie
        );
        assert_eq!(
            classify(None, &pie(), &c, &pkg(), &opts).unwrap(),
            Category::Invalid
        );
        assert!(matches!(
            classify(Some(&ItemId::from("nope")), &pie(), &c, &pkg(), &opts),
            Err(Error::Inconsistent(_))
        ));
    }

    #[test]
    fn log_line_escapes_raw_text() {
        let raw = RawRecommendation {
            text: "Try\tCannoli\nnow \\o/".into(),
            backend_id: "t".into(),
            latency: Duration::ZERO,
        };
        let out =
            classify_outcome(raw, &pie(), &catalog(), &pkg(), &ClassifyOptions::default()).unwrap();
        let line = outcome_log_line(&UserId::from("u"), Strategy::Soft, 0.55, &out);
        assert_eq!(
            line,
            "u\thasTag:italian\thasIngredient:tomato\tsoft\t0.5500\tOut-PIE\t1\tTry\\tCannoli\\nnow \\\\o/"
        );
    }

    proptest! {
        #[test]
        fn categories_total_and_consistent(
            feats in prop::collection::vec(prop::collection::btree_set(0u8..4, 0..4), 1..12),
            pick in 0usize..12,
            shout in any::<bool>(),
        ) {
            let entries: Vec<_> = feats.iter().enumerate().map(|(i, fs)| CatalogEntry {
                id: ItemId::new(format!("{i:02}")),
                name: format!("dish number {i}"),
                features: fs.iter().map(|k| Feature::tag(&format!("t{k}")).unwrap()).collect(),
            }).collect();
            let c = Catalog::from_entries(entries);
            let p = FeaturePairBias {
                f_given: Feature::tag("t0").unwrap(),
                f_bias: Feature::tag("t1").unwrap(),
                q_bias: 0.6, numerator: 6, denominator: 10, support: 2, given_count: 2,
            };
            let base = Pkg::new("u", RatingScale::default());
            let i = pick % feats.len();
            let mut text = format!("how about Dish Number {i}?!");
            if shout { text = text.to_uppercase(); }
            let item = extract_item(&text, &c);
            prop_assert_eq!(item.clone(), Some(ItemId::new(format!("{i:02}"))));
            let cat = classify(item.as_ref(), &p, &c, &base, &ClassifyOptions::default()).unwrap();
            let e = c.get(item.as_ref().unwrap()).unwrap();
            let expected = match (e.has(&p.f_given), e.has(&p.f_bias)) {
                (false, _) => Category::Invalid,
                (true, true) => Category::InPie,
                (true, false) => Category::OutPie,
            };
            prop_assert_eq!(cat, expected);
            if cat != Category::Invalid {
                prop_assert!(e.has(&p.f_given));
            }
        }
    }
}
