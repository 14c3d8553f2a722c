use indexmap::IndexMap;

use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tape::{Gradients, Tape, Var};
use crate::tensor::Tensor;

/// Named, ordered collection of trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet<T> {
    tensors: IndexMap<String, Tensor<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet { tensors: IndexMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.tensors.insert(name.into(), t.with_grad());
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn zero_grad(&mut self) {
        self.tensors.values_mut().for_each(Tensor::zero_grad);
    }

    /// Records every parameter as a trainable leaf on `tape`.
    pub fn bind<'t>(&self, tape: &'t Tape<T>) -> BoundParams<'t, T> {
        BoundParams { vars: self.tensors.iter().map(|(k, t)| (k.clone(), tape.param(t))).collect() }
    }

    /// Records every parameter as a constant (inference, reference passes).
    pub fn bind_constant<'t>(&self, tape: &'t Tape<T>) -> BoundParams<'t, T> {
        BoundParams { vars: self.tensors.iter().map(|(k, t)| (k.clone(), tape.constant(t))).collect() }
    }

    /// Slices consecutive parameters out of one flat variable, in set order.
    pub fn bind_flat<'t>(&self, flat: Var<'t, T>) -> Result<BoundParams<'t, T>> {
        let mut offset = 0;
        let mut vars = IndexMap::new();
        for (k, t) in &self.tensors {
            vars.insert(k.clone(), flat.narrow_flat(offset, t.shape())?);
            offset += t.len();
        }
        if offset != flat.numel() {
            return shape_err(format!("flat vector of {} for {offset} parameters", flat.numel()));
        }
        Ok(BoundParams { vars })
    }

    pub fn flatten(&self) -> Vec<T> {
        self.tensors.values().flat_map(|t| t.data().iter().copied()).collect()
    }

    /// Adds the gradients of the bound leaves into each tensor's `grad`.
    pub fn absorb(&mut self, bound: &BoundParams<'_, T>, grads: &Gradients<T>) -> Result<()> {
        for (k, t) in self.tensors.iter_mut() {
            let Some(v) = bound.vars.get(k) else {
                return shape_err(format!("parameter {k} was not bound"));
            };
            grads.accumulate_into(*v, t)?;
        }
        Ok(())
    }
}

/// Parameters of a [`ParamSet`] recorded on one tape.
pub struct BoundParams<'t, T> {
    vars: IndexMap<String, Var<'t, T>>,
}

impl<'t, T: Scalar> BoundParams<'t, T> {
    /// The bound variable for `name`.
    ///
    /// # Panics
    /// If `name` is not part of the set; networks only ask for names they
    /// registered themselves.
    pub fn get(&self, name: &str) -> Var<'t, T> {
        match self.vars.get(name) {
            Some(v) => *v,
            None => panic!("unknown parameter {name}"),
        }
    }
}
