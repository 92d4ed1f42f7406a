//! Trainable parameter registry.
//!
//! Parameters are registered once with a unique name and initialized from a
//! name-keyed random stream, so adding or removing one parameter (an
//! ablation toggling a block on or off) never changes the init of any
//! other.

use crate::error::{CoreError, Result};
use crate::rng::stream;
use crate::tensor::Tensor2;
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Debug, Clone)]
struct Param {
    name: String,
    value: Tensor2,
}

#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    entries: Vec<Param>,
    by_name: HashMap<String, ParamId>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, value: Tensor2) -> ParamId {
        assert!(
            !self.by_name.contains_key(name),
            "duplicate parameter name {name}"
        );
        let id = ParamId(self.entries.len());
        self.entries.push(Param {
            name: name.to_string(),
            value,
        });
        self.by_name.insert(name.to_string(), id);
        id
    }

    /// Register with uniform init in (-scale, scale) drawn from the stream
    /// keyed by `(seed, "init", name)`.
    pub fn register_uniform(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        scale: f64,
        seed: u64,
    ) -> ParamId {
        let mut rng = stream(seed, &["init", name]);
        let value = Tensor2::random_uniform(rows, cols, -scale, scale, &mut rng);
        self.register(name, value)
    }

    /// Dense-layer weight init: uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    pub fn register_dense(&mut self, name: &str, fan_in: usize, fan_out: usize, seed: u64) -> ParamId {
        let scale = 1.0 / (fan_in as f64).sqrt();
        self.register_uniform(name, fan_in, fan_out, scale, seed)
    }

    pub fn register_zeros(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        self.register(name, Tensor2::zeros(rows, cols))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor2 {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor2 {
        &mut self.entries[id.0].value
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor2)> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, p)| (ParamId(i), p.name.as_str(), &p.value))
    }

    /// Overwrite values from `(name, tensor)` pairs; every name must exist
    /// with a matching shape.
    pub fn load_values(&mut self, values: &[(String, Tensor2)]) -> Result<()> {
        for (name, tensor) in values {
            let id = self.by_name.get(name).copied().ok_or_else(|| {
                CoreError::BadCheckpoint(format!("unknown parameter {name}"))
            })?;
            let slot = &mut self.entries[id.0].value;
            if slot.shape() != tensor.shape() {
                return Err(CoreError::BadCheckpoint(format!(
                    "parameter {name}: shape {:?} in file, {:?} expected",
                    tensor.shape(),
                    slot.shape()
                )));
            }
            *slot = tensor.clone();
        }
        Ok(())
    }
}
