use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Named parameter tensors in a fixed order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<(String, Tensor<f64>)>,
}

#[derive(Serialize, Deserialize)]
struct Stored {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Serialize for ParamStore {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v: Vec<Stored> = self
            .entries
            .iter()
            .map(|(n, t)| Stored { name: n.clone(), shape: t.shape().to_vec(), data: t.data().to_vec() })
            .collect();
        v.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ParamStore {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<Stored>::deserialize(d)?;
        let mut out = ParamStore::default();
        for s in v {
            let t = Tensor::from_vec(&s.shape, s.data).map_err(serde::de::Error::custom)?;
            out.insert(&s.name, t);
        }
        Ok(out)
    }
}

impl ParamStore {
    pub fn insert(&mut self, name: &str, value: Tensor<f64>) {
        match self.entries.iter_mut().find(|(n, _)| n == name) {
            Some((_, t)) => *t = value,
            None => self.entries.push((name.to_string(), value)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f64>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<f64>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<f64>> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Euclidean norm over every entry.
    pub fn norm(&self) -> f64 {
        self.entries.iter().flat_map(|(_, t)| t.data()).map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Check names and shapes against a model's expectations.
    pub fn check_shapes(&self, expected: &[(String, Vec<usize>)]) -> Result<()> {
        if self.len() != expected.len() {
            return Err(Error::Checkpoint(format!("expected {} parameters, found {}", expected.len(), self.len())));
        }
        for (name, shape) in expected {
            let t = self.get(name).ok_or_else(|| Error::Checkpoint(format!("parameter `{name}` missing")))?;
            if t.shape() != shape.as_slice() {
                return Err(Error::Checkpoint(format!("parameter `{name}` has shape {:?}, expected {shape:?}", t.shape())));
            }
        }
        Ok(())
    }

    /// Register every entry as a named parameter on `tape`.
    pub fn on_tape<'t>(&self, tape: &'t Tape<f64>) -> ParamVars<'t> {
        ParamVars { vars: self.entries.iter().map(|(n, t)| (n.clone(), tape.param(n, t.clone()))).collect() }
    }
}

/// Tape handles for a [`ParamStore`], same order.
#[derive(Clone, Debug)]
pub struct ParamVars<'t> {
    vars: Vec<(String, Var<'t, f64>)>,
}

impl<'t> ParamVars<'t> {
    pub fn get(&self, name: &str) -> Option<Var<'t, f64>> {
        self.vars.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn req(&self, name: &str) -> Result<Var<'t, f64>> {
        self.get(name).ok_or_else(|| Error::Invalid(format!("missing parameter `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var<'t, f64>)> {
        self.vars.iter().map(|(n, v)| (n.as_str(), *v))
    }
}
