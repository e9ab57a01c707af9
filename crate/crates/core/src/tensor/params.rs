use std::collections::BTreeMap;

use super::{Gradients, Real, Tape, Tensor, Var};
use crate::error::{ensure, Error, Result};

/// Named learnable tensors, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    map: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { map: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<()> {
        let name = name.into();
        ensure!(!self.map.contains_key(&name), "duplicate parameter name `{}`", name);
        self.map.insert(name, value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.map.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.map.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<T>)> {
        self.map.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.map.values().map(Tensor::len).sum()
    }

    /// Registers every tensor as a gradient-receiving leaf of `tape`.
    pub fn bind(&self, tape: &mut Tape<T>) -> BoundParams {
        let vars = self
            .map
            .iter()
            .map(|(k, v)| (k.clone(), tape.param(v.clone())))
            .collect();
        BoundParams { vars }
    }

    /// L2 norm per parameter, used in numeric-failure diagnostics.
    pub fn norms(&self) -> Vec<(String, f64)> {
        self.map
            .iter()
            .map(|(k, v)| (k.clone(), v.sum_sq().sqrt()))
            .collect()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            map: self.map.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }
}

/// Parameter name to tape leaf mapping for one forward pass.
#[derive(Clone, Debug, Default)]
pub struct BoundParams {
    vars: BTreeMap<String, Var>,
}

impl BoundParams {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Contract(format!("missing parameter `{}`", name)))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }

    /// Collects the gradient of every bound parameter by name.
    pub fn gradients<T: Real>(&self, grads: &Gradients<T>) -> BTreeMap<String, Tensor<T>> {
        self.vars
            .iter()
            .map(|(k, &v)| (k.clone(), grads.wrt(v)))
            .collect()
    }
}

impl FromIterator<(String, Var)> for BoundParams {
    fn from_iter<I: IntoIterator<Item = (String, Var)>>(iter: I) -> Self {
        BoundParams {
            vars: iter.into_iter().collect(),
        }
    }
}

/// Glorot/Xavier uniform initialization: `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<T: Real, R: rand::Rng + ?Sized>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor<T> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| T::lit(rng.gen_range(-a..a)))
}
