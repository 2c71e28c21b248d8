//! Loading a recipes + interactions corpus (Food.com column layout).
//!
//! recipes file: CSV with at least `id`, `name`, `tags`, `ingredients`; the
//! last two hold quoted list literals. interactions file: CSV with at least
//! `user_id`, `recipe_id`, `rating`. Other columns are ignored.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::{Path, PathBuf};

use log::{info, warn};

use super::listlit::parse_list_literal;
use crate::catalog::{Catalog, CatalogEntry};
use crate::error::{Error, Result};
use crate::pkg::{Feature, ItemId, Pkg, RatedItem, RatingScale, Relation, UserId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusPaths {
    pub recipes_file: PathBuf,
    pub interactions_file: PathBuf,
}

impl CorpusPaths {
    pub fn new(recipes: impl Into<PathBuf>, interactions: impl Into<PathBuf>) -> Self {
        CorpusPaths {
            recipes_file: recipes.into(),
            interactions_file: interactions.into(),
        }
    }
}

/// A row that was skipped, with its 1-based file line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowIssue {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Loaded<T> {
    pub value: T,
    pub skipped: Vec<RowIssue>,
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file))
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case(name))
        .ok_or_else(|| {
            Error::parse(
                path.display().to_string(),
                1,
                format!("missing column `{name}`"),
            )
        })
}

/// Walks records, turning per-record CSV failures into skipped rows and
/// anything else into a load error.
fn for_each_record(
    path: &Path,
    mut visit: impl FnMut(&csv::StringRecord) -> std::result::Result<(), String>,
) -> Result<Vec<RowIssue>> {
    let mut reader = open_csv(path)?;
    let mut skipped = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let line = record.position().map_or(0, |p| p.line());
                if let Err(message) = visit(&record) {
                    skipped.push(RowIssue { line, message });
                }
            }
            Err(e) => match e.kind() {
                csv::ErrorKind::Io(_) => return Err(e.into()),
                _ => {
                    let line = e.position().map_or(0, |p| p.line());
                    skipped.push(RowIssue {
                        line,
                        message: e.to_string(),
                    });
                }
            },
        }
    }
    Ok(skipped)
}

/// Resolves named columns from the header row (case-insensitive).
fn header_columns<const N: usize>(path: &Path, names: [&str; N]) -> Result<[usize; N]> {
    let mut reader = open_csv(path)?;
    let headers = reader.headers()?.clone();
    let mut out = [0; N];
    for (slot, name) in out.iter_mut().zip(names) {
        *slot = column(&headers, name, path)?;
    }
    Ok(out)
}

fn features_from(
    field: &str,
    relation: Relation,
) -> std::result::Result<BTreeSet<Feature>, String> {
    let raw = parse_list_literal(field)?;
    // empty values carry no feature; they are dropped rather than failing the row
    Ok(raw
        .iter()
        .filter_map(|v| Feature::new(relation, v).ok())
        .collect())
}

pub fn load_catalog(paths: &CorpusPaths) -> Result<Loaded<Catalog>> {
    let path = &paths.recipes_file;
    let [id_col, name_col, tags_col, ingr_col] =
        header_columns(path, ["id", "name", "tags", "ingredients"])?;

    let mut catalog = Catalog::new();
    let skipped = for_each_record(path, |rec| {
        let get = |i: usize| rec.get(i).ok_or_else(|| format!("missing field {i}"));
        let id = get(id_col)?.trim();
        if id.is_empty() {
            return Err("empty recipe id".into());
        }
        let mut features =
            features_from(get(tags_col)?, Relation::HasTag).map_err(|e| format!("tags: {e}"))?;
        features.extend(
            features_from(get(ingr_col)?, Relation::HasIngredient)
                .map_err(|e| format!("ingredients: {e}"))?,
        );
        catalog.insert(CatalogEntry {
            id: ItemId::new(id),
            name: get(name_col)?.trim().to_string(),
            features,
        });
        Ok(())
    })?;
    for issue in &skipped {
        warn!(
            "{}:{}: skipped recipe row: {}",
            path.display(),
            issue.line,
            issue.message
        );
    }
    info!(
        "loaded {} recipes ({} rows skipped)",
        catalog.len(),
        skipped.len()
    );
    Ok(Loaded {
        value: catalog,
        skipped,
    })
}

/// Builds PKGs for every user (or only `users`) in one pass over the
/// interactions file. Duplicate (user, recipe) rows: the last one wins.
pub fn load_pkgs(
    paths: &CorpusPaths,
    catalog: &Catalog,
    users: Option<&BTreeSet<UserId>>,
    scale: RatingScale,
) -> Result<Loaded<BTreeMap<UserId, Pkg>>> {
    let path = &paths.interactions_file;
    let [user_col, recipe_col, rating_col] =
        header_columns(path, ["user_id", "recipe_id", "rating"])?;

    let mut pkgs: BTreeMap<UserId, Pkg> = BTreeMap::new();
    let skipped = for_each_record(path, |rec| {
        let get = |i: usize| {
            rec.get(i)
                .map(str::trim)
                .ok_or_else(|| format!("missing field {i}"))
        };
        let user = UserId::new(get(user_col)?);
        if user.as_str().is_empty() {
            return Err("empty user id".into());
        }
        if users.is_some_and(|u| !u.contains(&user)) {
            return Ok(());
        }
        let recipe = ItemId::new(get(recipe_col)?);
        let stars: i32 = get(rating_col)?.parse().map_err(|_| {
            format!(
                "rating `{}` is not an integer",
                rec.get(rating_col).unwrap_or("")
            )
        })?;
        let rating = scale.rating(stars).map_err(|e| e.to_string())?;
        let entry = catalog
            .get(&recipe)
            .ok_or_else(|| format!("recipe {recipe} not in catalog"))?;
        pkgs.entry(user.clone())
            .or_insert_with(|| Pkg::new(user, scale))
            .upsert(RatedItem {
                id: recipe,
                name: entry.name.clone(),
                rating,
                features: entry.features.clone(),
            });
        Ok(())
    })?;
    for issue in &skipped {
        warn!(
            "{}:{}: skipped interaction row: {}",
            path.display(),
            issue.line,
            issue.message
        );
    }
    Ok(Loaded {
        value: pkgs,
        skipped,
    })
}

pub fn load_pkg(
    paths: &CorpusPaths,
    catalog: &Catalog,
    user: &UserId,
    scale: RatingScale,
) -> Result<Loaded<Pkg>> {
    let only: BTreeSet<UserId> = [user.clone()].into();
    let mut loaded = load_pkgs(paths, catalog, Some(&only), scale)?;
    let pkg = loaded
        .value
        .remove(user)
        .ok_or_else(|| Error::NotFound(format!("user {user} has no usable interactions")))?;
    Ok(Loaded {
        value: pkg,
        skipped: loaded.skipped,
    })
}
