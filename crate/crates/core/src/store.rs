//! On-disk formats.
//!
//! PKG file (`<user>.pkg`): a header line, then per item a `#item <id>` line
//! followed by the item's prompt serialization:
//!
//! ```text
//! #pkg<TAB>u1<TAB>0<TAB>5
//! #item 101
//! u1 -> rated_5 -> Margherita Pizza
//! Margherita Pizza -> hasIngredient -> tomato
//! Margherita Pizza -> hasTag -> italian
//! ```
//!
//! The header fields are tab-separated: `#pkg`, user id, scale min, scale max.
//! Catalogs are JSON lines (one [`CatalogEntry`] per line), splits are a JSON
//! array, and proportion files hold `user_id<TAB>p` lines plus an optional
//! `__global__<TAB>p` line.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::catalog::{Catalog, CatalogEntry};
use crate::error::{Error, Result};
use crate::eval::StrategyProportions;
use crate::ingest::ExperimentSplit;
use crate::pkg::{Pkg, RatingScale, UserId};
use crate::prompt::{parse_serialized, serialize_item};

pub const PKG_EXTENSION: &str = "pkg";
pub const GLOBAL_KEY: &str = "__global__";

pub fn pkg_to_string(pkg: &Pkg) -> String {
    let scale = pkg.scale();
    let mut out = format!(
        "#pkg\t{}\t{}\t{}\n",
        pkg.user_id(),
        scale.min(),
        scale.max()
    );
    for item in pkg.items() {
        out.push_str(&format!("#item {}\n", item.id));
        out.push_str(&serialize_item(pkg.user_id(), item));
        out.push('\n');
    }
    out
}

pub fn pkg_from_str(text: &str, source: &str) -> Result<Pkg> {
    let header = text.lines().next().unwrap_or("");
    let fields: Vec<&str> = header.split('\t').collect();
    if fields.len() != 4 || fields[0] != "#pkg" {
        return Err(Error::parse(
            source,
            1,
            "expected header `#pkg<TAB>user<TAB>min<TAB>max`",
        ));
    }
    let bound = |s: &str| {
        s.parse::<i32>()
            .map_err(|_| Error::parse(source, 1, format!("bad scale bound `{s}`")))
    };
    let scale = RatingScale::new(bound(fields[2])?, bound(fields[3])?)?;
    let user = UserId::new(fields[1]);
    // every item carries an explicit id, so names never need resolving
    parse_serialized(text, &user, scale, |_| None).map_err(|e| match e {
        Error::Parse { line, message, .. } => Error::parse(source, line, message),
        other => other,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_pkg(path: &Path, pkg: &Pkg) -> Result<()> {
    write_file(path, &pkg_to_string(pkg))
}

pub fn read_pkg(path: &Path) -> Result<Pkg> {
    pkg_from_str(&read_file(path)?, &path.display().to_string())
}

pub fn pkg_path(dir: &Path, user: &UserId) -> Result<PathBuf> {
    let name = user.as_str();
    if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
        return Err(Error::Config(format!(
            "user id `{name}` cannot be used as a file name"
        )));
    }
    Ok(dir.join(format!("{name}.{PKG_EXTENSION}")))
}

/// Writes one file per user into `dir`.
pub fn write_pkg_dir<'a>(dir: &Path, pkgs: impl IntoIterator<Item = &'a Pkg>) -> Result<usize> {
    let mut n = 0;
    for pkg in pkgs {
        write_pkg(&pkg_path(dir, pkg.user_id())?, pkg)?;
        n += 1;
    }
    Ok(n)
}

/// Reads every `*.pkg` file in `dir`.
pub fn read_pkg_dir(dir: &Path) -> Result<BTreeMap<UserId, Pkg>> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == PKG_EXTENSION) {
            paths.push(path);
        }
    }
    paths.sort();
    let mut pkgs = BTreeMap::new();
    for path in paths {
        let pkg = read_pkg(&path)?;
        if let Some(prev) = pkgs.insert(pkg.user_id().clone(), pkg) {
            return Err(Error::DuplicateItem(format!(
                "user {} stored twice in {}",
                prev.user_id(),
                dir.display()
            )));
        }
    }
    Ok(pkgs)
}

pub fn write_catalog(path: &Path, catalog: &Catalog) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for entry in catalog.entries() {
        serde_json::to_writer(&mut out, entry)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_catalog(path: &Path) -> Result<Catalog> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut catalog = Catalog::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: CatalogEntry = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path.display().to_string(), n + 1, e.to_string()))?;
        catalog.insert(entry);
    }
    Ok(catalog)
}

pub fn write_splits(path: &Path, splits: &[ExperimentSplit]) -> Result<()> {
    let mut text = serde_json::to_string_pretty(splits)?;
    text.push('\n');
    write_file(path, &text)
}

pub fn read_splits(path: &Path) -> Result<Vec<ExperimentSplit>> {
    Ok(serde_json::from_str(&read_file(path)?)?)
}

/// Proportions print with Rust's shortest round-trip float formatting, so a
/// file read back yields the same bits.
pub fn proportions_to_string(p: &StrategyProportions) -> String {
    let mut out = String::new();
    for (user, v) in &p.per_user {
        out.push_str(&format!("{user}\t{v}\n"));
    }
    if let Some(g) = p.global {
        out.push_str(&format!("{GLOBAL_KEY}\t{g}\n"));
    }
    out
}

pub fn proportions_from_str(text: &str, source: &str) -> Result<StrategyProportions> {
    let mut out = StrategyProportions::default();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(source, n + 1, "expected `user_id<TAB>proportion`"))?;
        let p: f64 = value
            .trim()
            .parse()
            .ok()
            .filter(|p| (0.0..=1.0).contains(p))
            .ok_or_else(|| {
                Error::parse(
                    source,
                    n + 1,
                    format!("`{value}` is not a proportion in [0, 1]"),
                )
            })?;
        if key == GLOBAL_KEY {
            out.global = Some(p);
        } else {
            out.per_user.insert(UserId::new(key), p);
        }
    }
    Ok(out)
}

pub fn write_proportions(path: &Path, p: &StrategyProportions) -> Result<()> {
    write_file(path, &proportions_to_string(p))
}

pub fn read_proportions(path: &Path) -> Result<StrategyProportions> {
    proportions_from_str(&read_file(path)?, &path.display().to_string())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_file(path, text)
}

pub fn read_text(path: &Path) -> Result<String> {
    read_file(path)
}
