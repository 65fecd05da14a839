//! Named parameter storage shared by networks, optimizers and checkpoints.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

static NEXT_STORE_ID: AtomicU64 = AtomicU64::new(1);

fn next_store_id() -> u64 {
    NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed)
}

/// Handle to one tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Flat list of named parameter tensors.
///
/// Every mutation bumps `version`; tapes remember the version they were
/// recorded at so that a backward pass over outdated values is refused.
#[derive(Debug)]
pub struct ParamStore {
    id: u64,
    version: u64,
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl Clone for ParamStore {
    fn clone(&self) -> Self {
        Self {
            id: next_store_id(),
            version: 0,
            names: self.names.clone(),
            tensors: self.tensors.clone(),
        }
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl PartialEq for ParamStore {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names && self.tensors == other.tensors
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self {
            id: next_store_id(),
            version: 0,
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(value);
        self.version += 1;
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Replaces a tensor; the shape must not change.
    pub fn set(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        value.ensure_shape("ParamStore::set", self.tensors[id.0].shape())?;
        self.tensors[id.0] = value;
        self.version += 1;
        Ok(())
    }

    /// Mutable access to every tensor at once; counts as one mutation.
    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        self.version += 1;
        &mut self.tensors
    }

    /// Overwrites all values from another store with identical layout.
    pub fn copy_from(&mut self, other: &ParamStore) -> Result<()> {
        if self.names != other.names {
            return Err(Error::InvalidArgument(
                "copy_from between stores with different layouts".into(),
            ));
        }
        for (dst, src) in self.tensors.iter_mut().zip(&other.tensors) {
            dst.data_mut().copy_from_slice(src.data());
        }
        self.version += 1;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn store_id(&self) -> u64 {
        self.id
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Order-sensitive checksum over names and exact bit patterns.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |x: u64| {
            h ^= x;
            h = h.wrapping_mul(0x0100_0000_01b3);
        };
        for (name, t) in self.names.iter().zip(&self.tensors) {
            for b in name.bytes() {
                mix(b as u64);
            }
            for v in t.data() {
                mix(v.to_bits());
            }
        }
        h
    }
}

/// Gradients keyed by parameter; only parameters reached by the backward
/// pass appear.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    grads: BTreeMap<ParamId, Tensor>,
}

impl Gradients {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(&id)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.grads.iter().map(|(k, v)| (*k, v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Tensor)> {
        self.grads.iter_mut().map(|(k, v)| (*k, v))
    }

    /// Adds `scale * g` into the entry for `id`.
    pub fn accumulate(&mut self, id: ParamId, g: &Tensor, scale: f64) -> Result<()> {
        match self.grads.get_mut(&id) {
            Some(acc) => acc.axpy(scale, g),
            None => {
                self.grads.insert(id, g.map(|v| v * scale));
                Ok(())
            }
        }
    }

    pub fn merge(&mut self, other: &Gradients, scale: f64) -> Result<()> {
        for (id, g) in other.iter() {
            self.accumulate(id, g, scale)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.grads.values_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grads.values().all(Tensor::is_finite)
    }

    /// Concatenation of all entries in parameter order.
    pub fn flatten(&self) -> Vec<f64> {
        self.grads.values().flat_map(|t| t.data().iter().copied()).collect()
    }
}
