//! Rule-based rewrites of the PIE-aligned part of a PKG.
//!
//! Only bias-side items are touched: for a positive PIE those rated above the
//! neutral midpoint, for a negative PIE those rated below it. Items that
//! already sit on the other side, or that lack either feature, stay as they are.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pie::{bias_score, BiasSign, FeaturePairBias};
use crate::pkg::{ItemId, Pkg, Rating};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Soft,
    Hard,
    Removal,
    /// Natural-language avoidance instruction only; the PKG is not changed.
    PromptOnly,
    None,
}

impl Strategy {
    pub const ADAPTIVE: [Strategy; 3] = [Strategy::Soft, Strategy::Hard, Strategy::Removal];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Soft => "soft",
            Strategy::Hard => "hard",
            Strategy::Removal => "removal",
            Strategy::PromptOnly => "prompt-only",
            Strategy::None => "none",
        }
    }

    /// Whether the strategy rewrites the PKG (and so has a proportion to tune).
    pub fn rewrites_pkg(self) -> bool {
        matches!(self, Strategy::Soft | Strategy::Hard | Strategy::Removal)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "soft" => Ok(Strategy::Soft),
            "hard" => Ok(Strategy::Hard),
            "removal" | "remove" => Ok(Strategy::Removal),
            "prompt-only" | "prompt" | "promptonly" => Ok(Strategy::PromptOnly),
            "none" => Ok(Strategy::None),
            other => Err(Error::Config(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptationPolicy {
    pub strategy: Strategy,
    pub proportion: f64,
}

impl AdaptationPolicy {
    pub fn new(strategy: Strategy, proportion: f64) -> Result<Self> {
        let policy = AdaptationPolicy {
            strategy,
            proportion,
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.proportion) {
            return Err(Error::Config(format!(
                "adaptation proportion {} outside [0, 1]",
                self.proportion
            )));
        }
        Ok(())
    }
}

fn on_bias_side(rating: Rating, sign: BiasSign) -> bool {
    match sign {
        BiasSign::Positive => rating.is_above_neutral(),
        BiasSign::Negative => rating.is_below_neutral(),
    }
}

/// Number of items to adapt out of `n` bias-side items: `ceil(proportion * n)`.
///
/// The product is nudged down by 1e-9 so accumulated float error in a tuned
/// proportion (0.5 + 0.05 + 0.05 = 0.6000000000000001) does not round up.
pub fn target_count(proportion: f64, n: usize) -> usize {
    if proportion <= 0.0 || n == 0 {
        return 0;
    }
    let raw = (proportion * n as f64 - 1e-9).ceil().max(1.0) as usize;
    raw.min(n)
}

/// Bias-side co-occurring items, most extreme first (ties by id), truncated
/// to `ceil(proportion * n)`.
pub fn select_targets(pkg: &Pkg, pie: &FeaturePairBias, proportion: f64) -> Vec<ItemId> {
    let Some(sign) = pie.sign() else {
        return Vec::new();
    };
    let mut side: Vec<(i64, &ItemId)> = pkg
        .items()
        .filter(|i| i.has(&pie.f_given) && i.has(&pie.f_bias))
        .filter(|i| on_bias_side(i.rating, sign))
        .map(|i| (i.rating.deviation_x2().abs(), &i.id))
        .collect();
    side.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    let take = target_count(proportion, side.len());
    side.into_iter()
        .take(take)
        .map(|(_, id)| id.clone())
        .collect()
}

fn require_bias_side(rating: Rating, sign: BiasSign) -> Result<()> {
    if on_bias_side(rating, sign) {
        Ok(())
    } else {
        Err(Error::ContractViolation(format!(
            "rating {} is not on the {:?} side of neutral",
            rating.stars(),
            sign
        )))
    }
}

/// Order-preserving shift across the midpoint by `ceil((max - min + 1) / 2)`.
/// On 0..=5 that is 3: 5→2, 4→1, 3→0.
pub fn soft_rating(rating: Rating, sign: BiasSign) -> Result<Rating> {
    require_bias_side(rating, sign)?;
    let scale = rating.scale();
    let shift = (scale.max() - scale.min() + 2) / 2;
    let stars = match sign {
        BiasSign::Positive => (rating.stars() - shift).max(scale.min()),
        BiasSign::Negative => (rating.stars() + shift).min(scale.max()),
    };
    scale.rating(stars)
}

/// The opposite extreme of the scale.
pub fn hard_rating(rating: Rating, sign: BiasSign) -> Result<Rating> {
    require_bias_side(rating, sign)?;
    let scale = rating.scale();
    match sign {
        BiasSign::Positive => scale.rating(scale.min()),
        BiasSign::Negative => scale.rating(scale.max()),
    }
}

/// Returns an adapted copy; the input PKG is never modified.
pub fn apply_adaptation(
    pkg: &Pkg,
    pie: &FeaturePairBias,
    policy: &AdaptationPolicy,
) -> Result<Pkg> {
    policy.validate()?;
    let mut out = pkg.clone();
    let (Some(sign), true) = (pie.sign(), policy.strategy.rewrites_pkg()) else {
        return Ok(out);
    };
    for id in select_targets(pkg, pie, policy.proportion) {
        match policy.strategy {
            Strategy::Removal => {
                out.remove(&id);
            }
            Strategy::Soft | Strategy::Hard => {
                let item = out
                    .item_mut(&id)
                    .ok_or_else(|| Error::Inconsistent(format!("target {id} vanished")))?;
                item.rating = if policy.strategy == Strategy::Soft {
                    soft_rating(item.rating, sign)?
                } else {
                    hard_rating(item.rating, sign)?
                };
            }
            Strategy::PromptOnly | Strategy::None => unreachable!(),
        }
    }
    Ok(out)
}

/// Applies several PIEs one after another, rescoring each pair against the
/// intermediate PKG. Pairs whose given feature has disappeared are skipped.
pub fn apply_sequential(
    pkg: &Pkg,
    pies: &[FeaturePairBias],
    policy: &AdaptationPolicy,
) -> Result<Pkg> {
    let mut current = pkg.clone();
    for pie in pies {
        let rescored = match bias_score(&current, &pie.f_given, &pie.f_bias) {
            Ok(p) => p,
            Err(Error::UndefinedScore(_)) => continue,
            Err(e) => return Err(e),
        };
        current = apply_adaptation(&current, &rescored, policy)?;
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapt::Strategy;
    use crate::pkg::{Feature, RatedItem, RatingScale};
    use proptest::prelude::*;
    use proptest::strategy::Strategy as _;

    fn s() -> RatingScale {
        RatingScale::default()
    }
    fn r(stars: i32) -> Rating {
        s().rating(stars).unwrap()
    }
    fn italian() -> Feature {
        Feature::tag("italian").unwrap()
    }
    fn tomato() -> Feature {
        Feature::ingredient("tomato").unwrap()
    }

    /// The motivating example: tomato-heavy Italian favourites plus items that
    /// must survive every adaptation.
    fn base_pkg() -> Pkg {
        let pasta = Feature::ingredient("pasta").unwrap();
        let basil = Feature::ingredient("basil").unwrap();
        let french = Feature::tag("french").unwrap();
        Pkg::from_items(
            "u1",
            s(),
            [
                RatedItem::new("1", "Margherita Pizza", r(5), [italian(), tomato()]),
                RatedItem::new(
                    "2",
                    "Tomato Sauce Pasta",
                    r(4),
                    [italian(), tomato(), pasta.clone()],
                ),
                RatedItem::new("3", "Lasagna", r(5), [italian(), tomato(), pasta.clone()]),
                RatedItem::new("4", "Pesto Pasta", r(4), [italian(), basil, pasta]),
                RatedItem::new("5", "Tomato Risotto", r(1), [italian(), tomato()]),
                RatedItem::new("6", "Ratatouille", r(3), [french, tomato()]),
            ],
        )
        .unwrap()
    }

    fn pie(pkg: &Pkg) -> FeaturePairBias {
        bias_score(pkg, &italian(), &tomato()).unwrap()
    }

    #[test]
    fn soft_and_hard_rating_maps() {
        assert_eq!(soft_rating(r(5), BiasSign::Positive).unwrap().stars(), 2);
        assert_eq!(soft_rating(r(4), BiasSign::Positive).unwrap().stars(), 1);
        assert_eq!(soft_rating(r(3), BiasSign::Positive).unwrap().stars(), 0);
        assert_eq!(soft_rating(r(0), BiasSign::Negative).unwrap().stars(), 3);
        assert_eq!(hard_rating(r(5), BiasSign::Positive).unwrap().stars(), 0);
        assert_eq!(hard_rating(r(4), BiasSign::Positive).unwrap().stars(), 0);
        assert_eq!(hard_rating(r(1), BiasSign::Negative).unwrap().stars(), 5);
        assert!(matches!(
            soft_rating(r(2), BiasSign::Positive),
            Err(Error::ContractViolation(_))
        ));
        assert!(hard_rating(r(4), BiasSign::Negative).is_err());
    }

    #[test]
    fn target_selection() {
        let s = s();
        let pkg = Pkg::from_items(
            "u",
            s,
            [
                RatedItem::new("A", "A", r(5), [italian(), tomato()]),
                RatedItem::new("B", "B", r(4), [italian(), tomato()]),
                RatedItem::new("E", "E", r(2), [italian(), tomato()]),
            ],
        )
        .unwrap();
        let p = pie(&pkg);
        assert_eq!(select_targets(&pkg, &p, 0.5), vec![ItemId::from("A")]);
        assert!(select_targets(&pkg, &p, 0.0).is_empty());
        assert_eq!(
            select_targets(&pkg, &p, 1.0),
            vec![ItemId::from("A"), ItemId::from("B")]
        );
        assert_eq!(select_targets(&pkg, &p, 0.01).len(), 1);
    }

    #[test]
    fn target_count_tolerates_float_drift() {
        assert_eq!(target_count(0.5 + 0.05 + 0.05, 10), 6);
        assert_eq!(target_count(0.55, 20), 11);
        assert_eq!(target_count(1.0, 3), 3);
        assert_eq!(target_count(1e-6, 3), 1);
        assert_eq!(target_count(0.0, 3), 0);
    }

    #[test]
    fn removal_on_motivating_example() {
        let base = base_pkg();
        let out = apply_adaptation(
            &base,
            &pie(&base),
            &AdaptationPolicy::new(Strategy::Removal, 1.0).unwrap(),
        )
        .unwrap();
        let names: Vec<_> = out.items().map(|i| i.name.as_str()).collect();
        assert_eq!(names, ["Pesto Pasta", "Tomato Risotto", "Ratatouille"]);
        for id in ["4", "5", "6"] {
            assert_eq!(out.get(&ItemId::from(id)), base.get(&ItemId::from(id)));
        }
    }

    #[test]
    fn soft_and_hard_on_motivating_example() {
        let base = base_pkg();
        let p = pie(&base);
        let soft = apply_adaptation(
            &base,
            &p,
            &AdaptationPolicy::new(Strategy::Soft, 1.0).unwrap(),
        )
        .unwrap();
        let stars = |pkg: &Pkg, id: &str| pkg.get(&ItemId::from(id)).unwrap().rating.stars();
        assert_eq!(
            [stars(&soft, "1"), stars(&soft, "2"), stars(&soft, "3")],
            [2, 1, 2]
        );
        let hard = apply_adaptation(
            &base,
            &p,
            &AdaptationPolicy::new(Strategy::Hard, 1.0).unwrap(),
        )
        .unwrap();
        assert_eq!(
            [stars(&hard, "1"), stars(&hard, "2"), stars(&hard, "3")],
            [0, 0, 0]
        );
        assert_eq!(stars(&hard, "5"), 1);
        assert!(bias_score(&soft, &italian(), &tomato()).unwrap().q_bias < p.q_bias);
    }

    #[test]
    fn passthrough_strategies_and_bad_proportion() {
        let base = base_pkg();
        let p = pie(&base);
        for strategy in [Strategy::None, Strategy::PromptOnly] {
            let out = apply_adaptation(
                &base,
                &p,
                &AdaptationPolicy {
                    strategy,
                    proportion: 1.0,
                },
            )
            .unwrap();
            assert_eq!(out, base);
        }
        let bad = AdaptationPolicy {
            strategy: Strategy::Soft,
            proportion: 1.5,
        };
        assert!(matches!(
            apply_adaptation(&base, &p, &bad),
            Err(Error::Config(_))
        ));
        assert!(AdaptationPolicy::new(Strategy::Hard, f64::NAN).is_err());
    }

    #[test]
    fn hard_and_removal_idempotent_at_full_proportion() {
        let base = base_pkg();
        let p = pie(&base);
        for strategy in [Strategy::Hard, Strategy::Removal] {
            let policy = AdaptationPolicy::new(strategy, 1.0).unwrap();
            let once = apply_adaptation(&base, &p, &policy).unwrap();
            let twice = apply_adaptation(&once, &p, &policy).unwrap();
            assert_eq!(once, twice);
        }
    }

    #[test]
    fn sequential_composition_rescores() {
        let base = base_pkg();
        let pasta = Feature::ingredient("pasta").unwrap();
        let p1 = pie(&base);
        let p2 = bias_score(&base, &italian(), &pasta).unwrap();
        let policy = AdaptationPolicy::new(Strategy::Removal, 1.0).unwrap();
        let out = apply_sequential(&base, &[p1, p2], &policy).unwrap();
        let names: Vec<_> = out.items().map(|i| i.name.as_str()).collect();
        assert_eq!(names, ["Tomato Risotto", "Ratatouille"]);
    }

    #[test]
    fn soft_order_preserved_exhaustively_on_default_scale() {
        for sign in [BiasSign::Positive, BiasSign::Negative] {
            for a in 0..=5 {
                for b in 0..=5 {
                    let (ra, rb) = (r(a), r(b));
                    if a > b && on_bias_side(ra, sign) && on_bias_side(rb, sign) {
                        let (sa, sb) = (
                            soft_rating(ra, sign).unwrap(),
                            soft_rating(rb, sign).unwrap(),
                        );
                        assert!(
                            sa.stars() > sb.stars(),
                            "{a}>{b} became {}<={}",
                            sa.stars(),
                            sb.stars()
                        );
                    }
                }
            }
        }
    }

    fn arb_pkg() -> impl proptest::strategy::Strategy<Value = Pkg> {
        prop::collection::vec(
            (0i32..=5, any::<bool>(), any::<bool>(), any::<bool>()),
            1..40,
        )
        .prop_map(|rows| {
            let items = rows
                .into_iter()
                .enumerate()
                .map(|(i, (stars, it, tom, extra))| {
                    let mut f = vec![];
                    if it {
                        f.push(italian());
                    }
                    if tom {
                        f.push(tomato());
                    }
                    if extra {
                        f.push(Feature::ingredient("basil").unwrap());
                    }
                    RatedItem::new(format!("{i:03}"), format!("dish {i}"), r(stars), f)
                });
            Pkg::from_items("u", s(), items).unwrap()
        })
    }

    proptest! {
        #[test]
        fn soft_order_preserved_on_random_scales(min in 0i32..10, width in 1i32..20, a in 0i32..30, b in 0i32..30) {
            let scale = RatingScale::new(min, min + width).unwrap();
            let (a, b) = (min + a % (width + 1), min + b % (width + 1));
            for sign in [BiasSign::Positive, BiasSign::Negative] {
                let (ra, rb) = (scale.rating(a).unwrap(), scale.rating(b).unwrap());
                if on_bias_side(ra, sign) {
                    let sa = soft_rating(ra, sign).unwrap();
                    // crosses the midpoint without clamping
                    prop_assert!(!on_bias_side(sa, sign) && sa.deviation_x2() != 0);
                    prop_assert!((sa.stars() - a).abs() == (width + 2) / 2);
                    if a > b && on_bias_side(rb, sign) {
                        prop_assert!(sa.stars() > soft_rating(rb, sign).unwrap().stars());
                    }
                }
            }
        }

        #[test]
        fn adaptation_invariants(pkg in arb_pkg(), p in 0.0f64..=1.0, which in 0usize..3) {
            let Ok(pie) = bias_score(&pkg, &italian(), &tomato()) else { return Ok(()); };
            let strategy = Strategy::ADAPTIVE[which];
            let out = apply_adaptation(&pkg, &pie, &AdaptationPolicy::new(strategy, p).unwrap()).unwrap();
            let targets = select_targets(&pkg, &pie, p);
            for item in pkg.items() {
                if !targets.contains(&item.id) {
                    prop_assert_eq!(out.get(&item.id), Some(item));
                }
            }
            for id in &targets {
                let before = pkg.get(id).unwrap().rating;
                match strategy {
                    Strategy::Removal => prop_assert!(!out.contains(id)),
                    Strategy::Hard => {
                        let extreme = if pie.sign() == Some(BiasSign::Positive) { 0 } else { 5 };
                        prop_assert_eq!(out.get(id).unwrap().rating.stars(), extreme);
                    }
                    Strategy::Soft => {
                        let after = out.get(id).unwrap().rating;
                        prop_assert!(!on_bias_side(after, pie.sign().unwrap()));
                        prop_assert_eq!((after.stars() - before.stars()).abs(), 3);
                    }
                    _ => unreachable!(),
                }
            }
            if strategy == Strategy::Removal && p == 1.0 {
                let sign = pie.sign();
                let left = out
                    .items()
                    .filter(|i| i.has(&italian()) && i.has(&tomato()))
                    .filter(|i| sign.is_some_and(|s| on_bias_side(i.rating, s)))
                    .count();
                prop_assert_eq!(left, 0);
            }
        }

        #[test]
        fn targets_monotone_in_proportion(pkg in arb_pkg(), p1 in 0.0f64..=1.0, p2 in 0.0f64..=1.0) {
            let Ok(pie) = bias_score(&pkg, &italian(), &tomato()) else { return Ok(()); };
            let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
            let small = select_targets(&pkg, &pie, lo);
            let large = select_targets(&pkg, &pie, hi);
            prop_assert!(small.iter().all(|id| large.contains(id)));
        }
    }
}
