use std::collections::{BTreeMap, BTreeSet};

use sha2::{Digest, Sha256};

use super::Tensor;
use crate::error::{Error, Result};

/// Named parameters plus the set currently receiving updates.
///
/// Iteration is lexicographic by name, which keeps checkpoints, digests and
/// optimizer updates deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterStore {
    entries: BTreeMap<String, Tensor>,
    trainable: BTreeSet<String>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a new parameter. Names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::InvalidArgument(format!(
                "duplicate parameter name `{name}`"
            )));
        }
        self.entries.insert(name, tensor);
        Ok(())
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor> {
        self.trainable.remove(name);
        self.entries.remove(name)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(Tensor::numel).sum()
    }

    pub fn trainable(&self) -> &BTreeSet<String> {
        &self.trainable
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.trainable.contains(name)
    }

    /// Replaces the trainable set. Every name must exist.
    pub fn set_trainable<I, S>(&mut self, names: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: BTreeSet<String> = names.into_iter().map(Into::into).collect();
        if let Some(missing) = names.iter().find(|n| !self.entries.contains_key(*n)) {
            return Err(Error::UnknownParameter(missing.clone()));
        }
        for (name, t) in &mut self.entries {
            t.requires_grad = names.contains(name);
        }
        self.trainable = names;
        Ok(())
    }

    pub fn freeze_all(&mut self) {
        for t in self.entries.values_mut() {
            t.requires_grad = false;
        }
        self.trainable.clear();
    }

    /// Allocates (or clears) gradient buffers for every trainable parameter.
    pub fn zero_grad(&mut self) {
        for name in &self.trainable {
            if let Some(t) = self.entries.get_mut(name) {
                t.zero_grad();
            }
        }
    }

    pub fn clear_frozen_grads(&mut self) {
        for (name, t) in &mut self.entries {
            if !self.trainable.contains(name) {
                t.grad = None;
            }
        }
    }

    pub fn clear_grads(&mut self) {
        for t in self.entries.values_mut() {
            t.grad = None;
        }
    }

    /// SHA-256 over names, shapes and raw little-endian values of every
    /// parameter whose name starts with `prefix`.
    pub fn digest(&self, prefix: &str) -> String {
        let mut hasher = Sha256::new();
        for (name, t) in self.entries.range(prefix.to_string()..) {
            if !name.starts_with(prefix) {
                break;
            }
            hasher.update((name.len() as u64).to_le_bytes());
            hasher.update(name.as_bytes());
            for d in t.shape() {
                hasher.update((*d as u64).to_le_bytes());
            }
            for v in t.data() {
                hasher.update(v.to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}
