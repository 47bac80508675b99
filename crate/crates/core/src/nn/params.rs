use std::collections::BTreeMap;

use crate::error::{contract_err, Result};
use crate::numerics::{Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub trainable: bool,
}

/// Named model parameters, ordered by name so that iteration, optimizer
/// updates, and serialization are deterministic.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) {
        self.params.insert(name.into(), Param { value, trainable });
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.get_mut(name)
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| contract_err!("missing parameter `{name}`"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Param> {
        self.params.remove(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Param)> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn trainable_names(&self) -> impl Iterator<Item = &str> {
        self.params
            .iter()
            .filter(|(_, p)| p.trainable)
            .map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    /// Sets `trainable` on every parameter according to `pred(name)`.
    pub fn set_trainable(&mut self, pred: impl Fn(&str) -> bool) {
        for (name, p) in self.params.iter_mut() {
            p.trainable = pred(name);
        }
    }

    /// Copies every parameter under `from` to the same suffix under `to`.
    pub fn copy_prefix(&mut self, from: &str, to: &str, trainable: bool) -> usize {
        let copies: Vec<(String, Tensor)> = self
            .params
            .iter()
            .filter_map(|(n, p)| {
                n.strip_prefix(from)
                    .map(|rest| (format!("{to}{rest}"), p.value.clone()))
            })
            .collect();
        let count = copies.len();
        for (n, v) in copies {
            self.insert(n, v, trainable);
        }
        count
    }

    pub fn into_map(self) -> BTreeMap<String, Param> {
        self.params
    }

    pub fn from_tensors(tensors: BTreeMap<String, Tensor>, trainable: bool) -> Self {
        Self {
            params: tensors
                .into_iter()
                .map(|(n, value)| (n, Param { value, trainable }))
                .collect(),
        }
    }
}

/// One forward/backward pass: a fresh tape plus lazily bound parameters.
///
/// Parameters become tape leaves the first time a layer asks for them. Only
/// trainable parameters request gradients, so frozen weights never receive
/// any.
pub struct Graph<'s> {
    pub tape: Tape,
    store: &'s ParamStore,
    bound: BTreeMap<String, Var>,
    grad_enabled: bool,
}

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Self {
            tape: Tape::new(),
            store,
            bound: BTreeMap::new(),
            grad_enabled: true,
        }
    }

    /// Forward-only graph: no parameter requests a gradient.
    pub fn inference(store: &'s ParamStore) -> Self {
        Self {
            grad_enabled: false,
            ..Self::new(store)
        }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn has(&self, name: &str) -> bool {
        self.store.contains(name)
    }

    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.bound.get(name) {
            return Ok(v);
        }
        let p = self
            .store
            .get(name)
            .ok_or_else(|| contract_err!("missing parameter `{name}`"))?;
        let v = self
            .tape
            .leaf(p.value.clone(), p.trainable && self.grad_enabled);
        self.bound.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.tape.constant(t)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.tape.value(v)
    }

    pub fn backward(&mut self, loss: Var) -> Result<()> {
        self.tape.backward(loss)
    }

    /// Gradients of every bound trainable parameter after [`Graph::backward`].
    /// Parameters that did not influence the loss get a zero gradient.
    pub fn grads(&self) -> BTreeMap<String, Tensor> {
        self.bound
            .iter()
            .filter(|(_, &v)| self.tape.requires_grad(v))
            .map(|(n, &v)| {
                let g = self
                    .tape
                    .grad(v)
                    .unwrap_or_else(|| Tensor::zeros(self.tape.shape(v)));
                (n.clone(), g)
            })
            .collect()
    }
}

/// Adds `src` into `dst`, inserting names that are missing.
pub fn accumulate_grads(dst: &mut BTreeMap<String, Tensor>, src: BTreeMap<String, Tensor>) {
    for (n, g) in src {
        match dst.get_mut(&n) {
            Some(acc) => acc
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .for_each(|(a, b)| *a += b),
            None => {
                dst.insert(n, g);
            }
        }
    }
}
