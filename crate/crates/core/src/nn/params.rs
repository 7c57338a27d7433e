//! Named parameter storage with group tags.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Owner of a parameter: basic reasoner (Φ), numerical transformer (Θ),
/// comprehensive reasoner (Ψ) or the question-type classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ParamGroup {
    Basic,
    Numerical,
    Comprehensive,
    Classifier,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 4] = [
        ParamGroup::Basic,
        ParamGroup::Numerical,
        ParamGroup::Comprehensive,
        ParamGroup::Classifier,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            ParamGroup::Basic => "phi",
            ParamGroup::Numerical => "theta",
            ParamGroup::Comprehensive => "psi",
            ParamGroup::Classifier => "classifier",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.tag() == tag)
    }
}

impl fmt::Display for ParamGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Parameter {
    pub path: String,
    pub group: ParamGroup,
    pub value: Tensor,
}

#[derive(Clone, Debug, Default)]
pub struct ParameterSet {
    params: Vec<Parameter>,
    by_path: BTreeMap<String, ParamId>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, path: impl Into<String>, group: ParamGroup, value: Tensor) -> Result<ParamId> {
        let path = path.into();
        if self.by_path.contains_key(&path) {
            return Err(Error::config(format!("duplicate parameter path `{path}`")));
        }
        let id = ParamId(self.params.len());
        self.by_path.insert(path.clone(), id);
        self.params.push(Parameter { path, group, value });
        Ok(id)
    }

    /// Inserts a `rows x cols` parameter with Xavier-normal initialization.
    pub fn insert_xavier(
        &mut self,
        path: impl Into<String>,
        group: ParamGroup,
        rows: usize,
        cols: usize,
        rng: &mut impl Rng,
    ) -> Result<ParamId> {
        let std = (2.0 / (rows + cols) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("valid std");
        let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
        self.insert(path, group, Tensor::from_vec(rows, cols, data)?)
    }

    pub fn insert_zeros(
        &mut self,
        path: impl Into<String>,
        group: ParamGroup,
        rows: usize,
        cols: usize,
    ) -> Result<ParamId> {
        self.insert(path, group, Tensor::zeros(rows, cols))
    }

    pub fn insert_filled(
        &mut self,
        path: impl Into<String>,
        group: ParamGroup,
        rows: usize,
        cols: usize,
        value: f64,
    ) -> Result<ParamId> {
        self.insert(path, group, Tensor::filled(rows, cols, value))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn id(&self, path: &str) -> Option<ParamId> {
        self.by_path.get(path).copied()
    }

    pub fn require(&self, path: &str) -> Result<ParamId> {
        self.id(path)
            .ok_or_else(|| Error::config(format!("missing parameter `{path}`")))
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids_in(&self, group: ParamGroup) -> Vec<ParamId> {
        self.iter()
            .filter(|(_, p)| p.group == group)
            .map(|(id, _)| id)
            .collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Copies every parameter of `group` from `other` (matched by path).
    pub fn copy_group_from(&mut self, other: &ParameterSet, group: ParamGroup) -> Result<()> {
        for p in other.params.iter().filter(|p| p.group == group) {
            let id = self.require(&p.path)?;
            let dst = &mut self.params[id.0];
            if dst.value.shape() != p.value.shape() {
                return Err(Error::shape(format!(
                    "parameter `{}` is {:?} here but {:?} in source",
                    p.path,
                    dst.value.shape(),
                    p.value.shape()
                )));
            }
            dst.value = p.value.clone();
        }
        Ok(())
    }

    /// SHA-256 over paths and little-endian values of one group.
    pub fn group_hash(&self, group: ParamGroup) -> String {
        let mut h = Sha256::new();
        for p in self.params.iter().filter(|p| p.group == group) {
            h.update(p.path.as_bytes());
            for v in p.value.data() {
                h.update(v.to_le_bytes());
            }
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Gradients aligned with a [`ParameterSet`] by [`ParamId`].
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn accumulate(&mut self, id: ParamId, g: &Tensor) {
        if self.grads.len() <= id.0 {
            self.grads.resize(id.0 + 1, None);
        }
        match &mut self.grads[id.0] {
            Some(acc) => acc.add_assign(g),
            slot @ None => *slot = Some(g.clone()),
        }
    }

    pub fn merge(&mut self, other: &Gradients) {
        for (i, g) in other.grads.iter().enumerate() {
            if let Some(g) = g {
                self.accumulate(ParamId(i), g);
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.grads.iter_mut().flatten() {
            g.scale_assign(s);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.grads
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }

    pub fn is_empty(&self) -> bool {
        self.grads.iter().all(Option::is_none)
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flatten()
            .map(|g| g.data().iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}
