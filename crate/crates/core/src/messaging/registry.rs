//! Yellow pages: components register a name and some roles, and others
//! discover them by role.

use std::collections::BTreeSet;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub name: String,
    pub roles: BTreeSet<String>,
    /// Transport locator; empty for in-process components.
    #[serde(default)]
    pub address: String,
}

impl RegistryEntry {
    pub fn new<I, S>(name: impl Into<String>, roles: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        RegistryEntry {
            name: name.into(),
            roles: roles.into_iter().map(Into::into).collect(),
            address: String::new(),
        }
    }

    pub fn at(mut self, address: impl Into<String>) -> Self {
        self.address = address.into();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("`{0}` is already registered")]
    Duplicate(String),
}

/// Thread-safe registry; entries keep their registration order.
#[derive(Debug, Default)]
pub struct Registry {
    entries: RwLock<Vec<RegistryEntry>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&self, entry: RegistryEntry) -> Result<(), RegistryError> {
        let mut entries = self.entries.write().unwrap();
        if entries.iter().any(|e| e.name == entry.name) {
            return Err(RegistryError::Duplicate(entry.name));
        }
        entries.push(entry);
        Ok(())
    }

    pub fn lookup(&self, role: &str) -> Vec<String> {
        self.entries
            .read()
            .unwrap()
            .iter()
            .filter(|e| e.roles.contains(role))
            .map(|e| e.name.clone())
            .collect()
    }

    pub fn get(&self, name: &str) -> Option<RegistryEntry> {
        self.entries.read().unwrap().iter().find(|e| e.name == name).cloned()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    pub fn entries(&self) -> Vec<RegistryEntry> {
        self.entries.read().unwrap().clone()
    }
}
