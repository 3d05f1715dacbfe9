use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::graph::{Graph, Var};
use super::tensor::Tensor;

/// Identifier of a tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Ordered collection of named trainable tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { names: Vec::new(), tensors: Vec::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore { names: self.names.clone(), tensors: self.tensors.iter().map(Tensor::cast).collect() }
    }

    /// Places every tensor on the graph, as trainable leaves or as constants.
    pub fn bind(&self, graph: &mut Graph<T>, trainable: bool) -> BoundParams {
        let vars = self
            .tensors
            .iter()
            .map(|t| if trainable { graph.param(t.clone()) } else { graph.constant(t.clone()) })
            .collect();
        BoundParams { vars }
    }

    /// Copies out the gradients of a bound store, zero where none arrived.
    pub fn gradients(&self, graph: &Graph<T>, bound: &BoundParams) -> Vec<Vec<T>> {
        self.tensors
            .iter()
            .zip(&bound.vars)
            .map(|(t, &v)| graph.grad(v).map(<[T]>::to_vec).unwrap_or_else(|| vec![T::zero(); t.len()]))
            .collect()
    }

    /// Replaces the values of the tensor named `name`, keeping its shape.
    pub fn set_values(&mut self, name: &str, shape: &[usize], values: Vec<T>) -> Result<()> {
        let idx = self
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Format { what: "checkpoint", message: format!("unexpected parameter `{name}`") })?;
        if self.tensors[idx].shape() != shape {
            return Err(Error::Format {
                what: "checkpoint",
                message: format!("parameter `{name}` has shape {shape:?}, expected {:?}", self.tensors[idx].shape()),
            });
        }
        self.tensors[idx] = Tensor::new(shape, values)?;
        Ok(())
    }
}

/// Graph handles for a [`ParamStore`] placed on a particular graph.
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}
