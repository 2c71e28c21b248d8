//! Global item universe: item id → (name, features), plus a normalized-name index.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::pkg::{Feature, ItemId};

/// Case-fold, turn punctuation into spaces, collapse whitespace.
///
/// Used for both catalog names and free-text backend output so the two meet
/// on the same token stream.
pub fn normalize_name(raw: &str) -> String {
    let mapped: String = raw
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    mapped
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub id: ItemId,
    pub name: String,
    pub features: BTreeSet<Feature>,
}

impl CatalogEntry {
    pub fn has(&self, feature: &Feature) -> bool {
        self.features.contains(feature)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Catalog {
    entries: BTreeMap<ItemId, CatalogEntry>,
    name_index: BTreeMap<String, ItemId>,
    max_name_words: usize,
}

impl Catalog {
    pub fn new() -> Self {
        Catalog::default()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = CatalogEntry>) -> Self {
        let mut catalog = Catalog::new();
        for entry in entries {
            catalog.insert(entry);
        }
        catalog
    }

    /// Inserts or replaces an entry. On a normalized-name collision the
    /// lexicographically smallest item id keeps the name.
    pub fn insert(&mut self, entry: CatalogEntry) {
        if let Some(previous) = self.entries.remove(&entry.id) {
            let key = normalize_name(&previous.name);
            if self.name_index.get(&key) == Some(&previous.id) {
                self.name_index.remove(&key);
                // another entry may now own the name
                if let Some(other) = self
                    .entries
                    .values()
                    .filter(|e| normalize_name(&e.name) == key)
                    .map(|e| e.id.clone())
                    .min()
                {
                    self.name_index.insert(key, other);
                }
            }
        }
        let key = normalize_name(&entry.name);
        self.max_name_words = self.max_name_words.max(key.split(' ').count());
        if !key.is_empty() {
            match self.name_index.get(&key) {
                Some(existing) if *existing != entry.id => {
                    warn!(
                        "catalog name collision on `{key}`: items {existing} and {}",
                        entry.id
                    );
                    if entry.id < *existing {
                        self.name_index.insert(key, entry.id.clone());
                    }
                }
                _ => {
                    self.name_index.insert(key, entry.id.clone());
                }
            }
        }
        self.entries.insert(entry.id.clone(), entry);
    }

    pub fn get(&self, id: &ItemId) -> Option<&CatalogEntry> {
        self.entries.get(id)
    }

    pub fn contains(&self, id: &ItemId) -> bool {
        self.entries.contains_key(id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &CatalogEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Looks up an already-normalized name.
    pub fn lookup_normalized(&self, normalized: &str) -> Option<&ItemId> {
        self.name_index.get(normalized)
    }

    pub fn lookup_name(&self, name: &str) -> Option<&ItemId> {
        self.name_index.get(&normalize_name(name))
    }

    /// Upper bound on the word count of any normalized name.
    pub fn max_name_words(&self) -> usize {
        self.max_name_words
    }

    pub fn name_index(&self) -> &BTreeMap<String, ItemId> {
        &self.name_index
    }

    /// Recomputes the name index from scratch.
    pub fn derive_name_index(&self) -> BTreeMap<String, ItemId> {
        let mut index: BTreeMap<String, ItemId> = BTreeMap::new();
        for entry in self.entries.values() {
            let key = normalize_name(&entry.name);
            if key.is_empty() {
                continue;
            }
            index
                .entry(key)
                .and_modify(|id| {
                    if entry.id < *id {
                        *id = entry.id.clone();
                    }
                })
                .or_insert_with(|| entry.id.clone());
        }
        index
    }
}
