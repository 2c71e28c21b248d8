//! PKG serialization and the system / user chat messages.
//!
//! A PKG is rendered as `head -> relation -> tail` lines, items in id order:
//!
//! ```text
//! u1 -> rated_5 -> Lasagna
//! Lasagna -> hasTag -> italian
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pkg::{Feature, ItemId, Pkg, RatedItem, RatingScale, Relation, UserId};

pub const SYSTEM_TEMPLATE: &str = "You perform Knowledge Graph Completion. You will recommend a new triple to add to the user's knowledge graph with a tail entity that isn't already in their knowledge graph. The user's entity is represented by {User ID}. Use this knowledge graph when responding to their queries: {Knowledge Graph}";

pub const USER_TEMPLATE: &str =
    "Recommend a recipe with trait of {Relation Type} -> {Trait Value}.";

pub const DEFAULT_AVOID_TEMPLATE: &str =
    " Avoid recipes with trait of {Relation Type} -> {Trait Value}.";

const ARROW: &str = " -> ";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptConfig {
    /// Appended to the user message for the prompt-only baseline.
    pub avoid_template: String,
    /// Keep at most this many items, most extreme ratings first.
    pub max_items: Option<usize>,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            avoid_template: DEFAULT_AVOID_TEMPLATE.to_string(),
            max_items: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptPair {
    pub system_message: String,
    pub user_message: String,
}

const DUMP_SYSTEM: &str = "--- SYSTEM ---";
const DUMP_USER: &str = "--- USER ---";

impl PromptPair {
    /// Two-section debug dump.
    pub fn to_dump(&self) -> String {
        format!(
            "{DUMP_SYSTEM}\n{}\n{DUMP_USER}\n{}\n",
            self.system_message, self.user_message
        )
    }

    pub fn from_dump(text: &str) -> Result<Self> {
        let body = text
            .strip_prefix(DUMP_SYSTEM)
            .and_then(|t| t.strip_prefix('\n'))
            .ok_or_else(|| Error::parse("<prompt dump>", 1, "missing system header"))?;
        let (system, user) = body
            .split_once(&format!("\n{DUMP_USER}\n"))
            .ok_or_else(|| Error::parse("<prompt dump>", 1, "missing user header"))?;
        Ok(PromptPair {
            system_message: system.to_string(),
            user_message: user.strip_suffix('\n').unwrap_or(user).to_string(),
        })
    }
}

fn push_item(out: &mut Vec<String>, user: &UserId, item: &RatedItem) {
    out.push(format!(
        "{user}{ARROW}rated_{}{ARROW}{}",
        item.rating.stars(),
        item.name
    ));
    let mut features: Vec<&Feature> = item.features.iter().collect();
    features.sort_by(|a, b| (a.relation(), a.value()).cmp(&(b.relation(), b.value())));
    for f in features {
        out.push(format!(
            "{}{ARROW}{}{ARROW}{}",
            item.name,
            f.relation(),
            f.value()
        ));
    }
}

/// The lines for one item, joined by `\n`.
pub fn serialize_item(user: &UserId, item: &RatedItem) -> String {
    let mut lines = Vec::new();
    push_item(&mut lines, user, item);
    lines.join("\n")
}

pub fn serialize_pkg(pkg: &Pkg) -> String {
    serialize_items(pkg, pkg.items())
}

fn serialize_items<'a>(pkg: &Pkg, items: impl Iterator<Item = &'a RatedItem>) -> String {
    let mut lines = Vec::new();
    for item in items {
        push_item(&mut lines, pkg.user_id(), item);
    }
    lines.join("\n")
}

/// Like [`serialize_pkg`] but keeps only the `max_items` items furthest from
/// neutral (ties by id), still emitted in id order.
pub fn serialize_pkg_capped(pkg: &Pkg, max_items: Option<usize>) -> String {
    let Some(cap) = max_items.filter(|&cap| cap < pkg.len()) else {
        return serialize_pkg(pkg);
    };
    let mut ranked: Vec<&RatedItem> = pkg.items().collect();
    ranked.sort_by(|a, b| {
        b.rating
            .deviation_x2()
            .abs()
            .cmp(&a.rating.deviation_x2().abs())
            .then_with(|| a.id.cmp(&b.id))
    });
    ranked.truncate(cap);
    ranked.sort_by(|a, b| a.id.cmp(&b.id));
    serialize_items(pkg, ranked.into_iter())
}

fn fill_trait(template: &str, feature: &Feature) -> String {
    template
        .replace("{Relation Type}", feature.relation().as_str())
        .replace("{Trait Value}", feature.value())
}

pub fn system_message(user_id: &UserId, knowledge_graph: &str) -> String {
    SYSTEM_TEMPLATE
        .replace("{User ID}", user_id.as_str())
        .replace("{Knowledge Graph}", knowledge_graph)
}

pub fn user_message(query: &Feature, avoid: Option<&Feature>, cfg: &PromptConfig) -> String {
    let mut msg = fill_trait(USER_TEMPLATE, query);
    if let Some(bias) = avoid {
        msg.push_str(&fill_trait(&cfg.avoid_template, bias));
    }
    msg
}

pub fn build_prompt(
    pkg: &Pkg,
    query: &Feature,
    baseline_bias: Option<&Feature>,
    cfg: &PromptConfig,
) -> PromptPair {
    let kg = serialize_pkg_capped(pkg, cfg.max_items);
    PromptPair {
        system_message: system_message(pkg.user_id(), &kg),
        user_message: user_message(query, baseline_bias, cfg),
    }
}

/// Reads the triple serialization back into a PKG.
///
/// Lines starting with `#` are comments, except `#item <id>` which binds the
/// id of the next rated item. Items without such a line are resolved by name
/// through `resolve`.
pub fn parse_serialized(
    text: &str,
    user_id: &UserId,
    scale: RatingScale,
    resolve: impl Fn(&str) -> Option<ItemId>,
) -> Result<Pkg> {
    const SRC: &str = "<pkg serialization>";
    let rating_prefix = format!("{user_id}{ARROW}rated_");
    let mut pkg = Pkg::new(user_id.clone(), scale);
    let mut current: Option<RatedItem> = None;
    let mut pending_id: Option<ItemId> = None;

    for (n, line) in text.lines().enumerate() {
        let lineno = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(id) = comment.strip_prefix("item") {
                let id = id.trim();
                if id.is_empty() {
                    return Err(Error::parse(SRC, lineno, "empty #item id"));
                }
                pending_id = Some(ItemId::new(id));
            }
            continue;
        }
        if let Some(rest) = line.strip_prefix(&rating_prefix) {
            let (stars, name) = rest
                .split_once(ARROW)
                .ok_or_else(|| Error::parse(SRC, lineno, "rating line without item name"))?;
            let stars: i32 = stars
                .parse()
                .map_err(|_| Error::parse(SRC, lineno, format!("bad rating `{stars}`")))?;
            let rating = scale
                .rating(stars)
                .map_err(|e| Error::parse(SRC, lineno, e.to_string()))?;
            let id = match pending_id.take() {
                Some(id) => id,
                None => resolve(name).ok_or_else(|| {
                    Error::parse(SRC, lineno, format!("cannot resolve item `{name}`"))
                })?,
            };
            if let Some(done) = current.replace(RatedItem::new(id, name, rating, [])) {
                pkg.insert(done)?;
            }
            continue;
        }
        let (head, value) = line
            .rsplit_once(ARROW)
            .ok_or_else(|| Error::parse(SRC, lineno, "expected `head -> relation -> tail`"))?;
        let (name, relation) = head
            .rsplit_once(ARROW)
            .ok_or_else(|| Error::parse(SRC, lineno, "expected `head -> relation -> tail`"))?;
        let relation: Relation = relation
            .parse()
            .map_err(|e: Error| Error::parse(SRC, lineno, e.to_string()))?;
        let item = current
            .as_mut()
            .filter(|item| item.name == name)
            .ok_or_else(|| {
                Error::parse(
                    SRC,
                    lineno,
                    format!("feature line for `{name}` outside its item"),
                )
            })?;
        let feature =
            Feature::new(relation, value).map_err(|e| Error::parse(SRC, lineno, e.to_string()))?;
        item.features.insert(feature);
    }
    if let Some(done) = current {
        pkg.insert(done)?;
    }
    Ok(pkg)
}
