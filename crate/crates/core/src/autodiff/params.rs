use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use super::tape::{Gradients, Tape};
use crate::error::{Error, Result};

static NEXT_STORE: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Identifies a parameter across tapes: which store, which slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamKey {
    pub(crate) store: u64,
    pub(crate) index: usize,
}

#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    /// Allocated on first accumulation.
    pub grad: Option<Vec<f64>>,
    pub trainable: bool,
}

impl Parameter {
    pub fn numel(&self) -> usize {
        self.value.len()
    }
}

/// Named parameters of one network.
#[derive(Debug)]
pub struct ParamStore {
    id: u64,
    params: Vec<Parameter>,
    by_name: HashMap<String, usize>,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl Clone for ParamStore {
    /// The clone gets a fresh identity so tapes never confuse the two.
    fn clone(&self) -> Self {
        Self {
            id: NEXT_STORE.fetch_add(1, Ordering::Relaxed),
            params: self.params.clone(),
            by_name: self.by_name.clone(),
        }
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self {
            id: NEXT_STORE.fetch_add(1, Ordering::Relaxed),
            params: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, shape: Vec<usize>, value: Vec<f64>, trainable: bool) -> Result<ParamId> {
        let name = name.into();
        let numel: usize = shape.iter().product();
        if numel != value.len() {
            return Err(Error::shape("ParamStore::add", format!("{numel} values for {shape:?}"), value.len()));
        }
        if self.by_name.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        let idx = self.params.len();
        self.by_name.insert(name.clone(), idx);
        self.params.push(Parameter {
            name,
            shape,
            value,
            grad: None,
            trainable,
        });
        Ok(ParamId(idx))
    }

    pub(crate) fn key(&self, id: ParamId) -> ParamKey {
        ParamKey {
            store: self.id,
            index: id.0,
        }
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter> {
        self.id_of(name).map(|id| self.get(id))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar values in trainable parameters.
    pub fn trainable_count(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.numel()).sum()
    }

    pub fn reset_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    /// Adds the tape gradients of this store's trainable parameters into their
    /// `grad` slots. Calling it twice accumulates.
    pub fn accumulate(&mut self, tape: &Tape, grads: &Gradients) {
        for (key, node) in tape.param_nodes() {
            if key.store != self.id {
                continue;
            }
            let p = &mut self.params[key.index];
            if !p.trainable {
                continue;
            }
            if let Some(g) = grads.of_node(node) {
                match &mut p.grad {
                    Some(acc) => acc.iter_mut().zip(g).for_each(|(a, v)| *a += v),
                    None => p.grad = Some(g.to_vec()),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let mut s = ParamStore::new();
        s.add("w", vec![2], vec![0.0, 1.0], true).unwrap();
        assert!(s.add("w", vec![1], vec![0.0], true).is_err());
        assert!(s.add("v", vec![3], vec![0.0], true).is_err());
        assert_eq!(s.by_name("w").unwrap().numel(), 2);
    }

    #[test]
    fn accumulation_and_reset() {
        let mut s = ParamStore::new();
        let id = s.add("x", vec![3], vec![1.0, 2.0, 3.0], true).unwrap();
        for expected in [1.0, 2.0] {
            let mut tape = Tape::new();
            let x = tape.param(&s, id);
            let loss = tape.sum(x).unwrap();
            let g = tape.backward(loss).unwrap();
            s.accumulate(&tape, &g);
            assert_eq!(s.get(id).grad.as_deref(), Some(&[expected; 3][..]));
        }
        s.reset_grads();
        assert!(s.get(id).grad.is_none());
    }

    #[test]
    fn frozen_parameters_receive_no_gradient() {
        let mut s = ParamStore::new();
        let id = s.add("x", vec![2], vec![1.0, 2.0], false).unwrap();
        let mut tape = Tape::new();
        let x = tape.param(&s, id);
        let loss = tape.sum(x).unwrap();
        let g = tape.backward(loss).unwrap();
        s.accumulate(&tape, &g);
        assert!(s.get(id).grad.is_none());
    }

    #[test]
    fn other_store_is_ignored() {
        let mut a = ParamStore::new();
        let mut b = a.clone();
        let ida = a.add("x", vec![1], vec![1.0], true).unwrap();
        b.add("x", vec![1], vec![1.0], true).unwrap();
        let mut tape = Tape::new();
        let x = tape.param(&a, ida);
        let loss = tape.sum(x).unwrap();
        let g = tape.backward(loss).unwrap();
        b.accumulate(&tape, &g);
        assert!(b.iter().all(|p| p.grad.is_none()));
        a.accumulate(&tape, &g);
        assert!(a.get(ida).grad.is_some());
    }
}
