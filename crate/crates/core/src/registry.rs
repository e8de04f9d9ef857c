//! Name-keyed factories for pluggable strategies.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

type Factory<C, T> = Box<dyn Fn(&C) -> Result<Box<T>> + Send + Sync>;

/// Maps strategy names to constructors taking a config of type `C`.
pub struct Registry<C, T: ?Sized> {
    kind: &'static str,
    factories: BTreeMap<String, Factory<C, T>>,
}

impl<C, T: ?Sized> Registry<C, T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            factories: BTreeMap::new(),
        }
    }

    /// Registers `factory` under `name`, replacing any previous entry.
    pub fn register<F>(&mut self, name: impl Into<String>, factory: F) -> &mut Self
    where
        F: Fn(&C) -> Result<Box<T>> + Send + Sync + 'static,
    {
        self.factories.insert(name.into(), Box::new(factory));
        self
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(&self, name: &str, config: &C) -> Result<Box<T>> {
        match self.factories.get(name) {
            Some(factory) => factory(config),
            None => Err(Error::Config(format!(
                "unknown {} '{}'; expected one of: {}",
                self.kind,
                name,
                self.names().collect::<Vec<_>>().join(", ")
            ))),
        }
    }
}

impl<C, T: ?Sized> fmt::Debug for Registry<C, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("kind", &self.kind)
            .field("names", &self.factories.keys().collect::<Vec<_>>())
            .finish()
    }
}
