//! Annotatable terms and the sets they live in.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Stable identifier of an item. Items read from a term file get their
/// 0-based line number.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ItemId(pub u32);

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for ItemId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim().parse().map(ItemId)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub id: ItemId,
    pub surface: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ItemError {
    #[error("duplicate item id {0}")]
    DuplicateId(ItemId),
    #[error("item {0} has an empty surface string")]
    EmptySurface(ItemId),
    #[error("item {0} contains a tab or newline")]
    InvalidSurface(ItemId),
}

/// An ordered collection of items with unique ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ItemSet {
    items: Vec<Item>,
    index: BTreeMap<ItemId, usize>,
}

impl ItemSet {
    pub fn new(items: Vec<Item>) -> Result<Self, ItemError> {
        let mut index = BTreeMap::new();
        for (pos, item) in items.iter().enumerate() {
            if item.surface.is_empty() {
                return Err(ItemError::EmptySurface(item.id));
            }
            if item.surface.contains(['\t', '\n', '\r']) {
                return Err(ItemError::InvalidSurface(item.id));
            }
            if index.insert(item.id, pos).is_some() {
                return Err(ItemError::DuplicateId(item.id));
            }
        }
        Ok(Self { items, index })
    }

    /// Builds a set from surface strings, numbering them from zero.
    pub fn from_terms<I, S>(terms: I) -> Result<Self, ItemError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let items = terms
            .into_iter()
            .enumerate()
            .map(|(i, s)| Item {
                id: ItemId(i as u32),
                surface: s.into(),
            })
            .collect();
        Self::new(items)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Item> {
        self.items.iter()
    }

    pub fn ids(&self) -> Vec<ItemId> {
        self.items.iter().map(|i| i.id).collect()
    }

    pub fn get(&self, id: ItemId) -> Option<&Item> {
        self.index.get(&id).map(|&pos| &self.items[pos])
    }

    pub fn surface(&self, id: ItemId) -> Option<&str> {
        self.get(id).map(|i| i.surface.as_str())
    }

    pub fn contains(&self, id: ItemId) -> bool {
        self.index.contains_key(&id)
    }
}
