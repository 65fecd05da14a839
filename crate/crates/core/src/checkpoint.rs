//! Versioned JSON container of named tensors.
//!
//! ```json
//! {
//!   "format": "bdqn-checkpoint",
//!   "version": 1,
//!   "kind": "dqn",
//!   "metadata": { ... },
//!   "tensors": [ { "name": "hidden0.weight", "shape": [44, 130], "values": [ ... ] } ]
//! }
//! ```
//!
//! Values are written with shortest round-trip formatting, so a save/load
//! cycle is bit exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const FORMAT: &str = "bdqn-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, t: &Tensor) -> Self {
        Self {
            name: name.into(),
            shape: t.shape().to_vec(),
            values: t.data().to_vec(),
        }
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        Tensor::new(self.shape.clone(), self.values.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: String,
    #[serde(default)]
    pub metadata: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>, metadata: serde_json::Value) -> Self {
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            kind: kind.into(),
            metadata,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, t: &Tensor) {
        self.tensors.push(NamedTensor::new(name, t));
    }

    /// Appends every tensor of `store`, names prefixed with `prefix`.
    pub fn push_store(&mut self, prefix: &str, store: &ParamStore) {
        for (_, name, t) in store.iter() {
            self.push(format!("{prefix}{name}"), t);
        }
    }

    pub fn get(&self, name: &str) -> Result<Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?
            .to_tensor()
    }

    /// Overwrites every tensor of `store` from entries named `prefix + name`.
    pub fn load_store(&self, prefix: &str, store: &mut ParamStore) -> Result<()> {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let name = format!("{prefix}{}", store.name(id));
            let t = self.get(&name)?;
            store
                .set(id, t)
                .map_err(|e| Error::Checkpoint(format!("tensor `{name}`: {e}")))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(s)?;
        if ck.format != FORMAT {
            return Err(Error::Checkpoint(format!("unknown format `{}`", ck.format)));
        }
        if ck.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", ck.version)));
        }
        for t in &ck.tensors {
            let n: usize = t.shape.iter().product();
            if n != t.values.len() {
                return Err(Error::Checkpoint(format!("tensor `{}` has {} values for shape {:?}", t.name, t.values.len(), t.shape)));
            }
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn json_round_trip_is_bit_exact(values in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..40)) {
            let mut store = ParamStore::new();
            store.add("a", Tensor::vector(values.clone()));
            let mut ck = Checkpoint::new("test", serde_json::json!({"seed": 3}));
            ck.push_store("net.", &store);
            let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
            let mut restored = store.clone();
            restored.set(restored.find("a").unwrap(), Tensor::zeros(&[values.len()])).unwrap();
            back.load_store("net.", &mut restored).unwrap();
            prop_assert_eq!(restored.checksum(), store.checksum());
        }
    }

    #[test]
    fn rejects_unknown_version_and_missing_tensors() {
        let mut ck = Checkpoint::new("dqn", serde_json::Value::Null);
        ck.version = 99;
        assert!(Checkpoint::from_json(&serde_json::to_string(&ck).unwrap()).is_err());

        let ck = Checkpoint::new("dqn", serde_json::Value::Null);
        let mut store = ParamStore::new();
        store.add("w", Tensor::scalar(1.0));
        assert!(matches!(ck.load_store("", &mut store), Err(Error::Checkpoint(_))));
    }
}
