//! Named learnable tensors and their binding into a differentiation graph.

use indexmap::IndexMap;

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Ordered collection of named parameters. Insertion order is the
/// serialization order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: IndexMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::Invalid(format!("duplicate parameter `{name}`")));
        }
        self.params.insert(name, value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    /// Replace an existing parameter, keeping its position. Dims must match.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self
            .params
            .get_mut(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))?;
        if slot.dims() != value.dims() {
            return Err(Error::shape(
                "param_set",
                format!("{name}: {:?} vs {:?}", slot.dims(), value.dims()),
            ));
        }
        *slot = value;
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    /// Total learnable element count.
    pub fn num_elements(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// Apply `f` to every parameter whose name starts with `prefix`.
    pub fn map_prefix(&mut self, prefix: &str, f: impl Fn(&Tensor) -> Tensor) {
        for (k, v) in self.params.iter_mut() {
            if k.starts_with(prefix) {
                *v = f(v);
            }
        }
    }
}

/// Parameters lifted into graph variables of element type `T`.
pub struct Bound<T: Scalar = f32> {
    vars: IndexMap<String, Var<T>>,
}

impl<T: Scalar> Bound<T> {
    /// Bind every parameter as a leaf that collects gradients.
    pub fn trainable(store: &ParamStore) -> Self {
        Self::bind(store, true)
    }

    /// Bind as constants; forward passes record no graph.
    pub fn frozen(store: &ParamStore) -> Self {
        Self::bind(store, false)
    }

    fn bind(store: &ParamStore, grad: bool) -> Self {
        let vars = store
            .iter()
            .map(|(k, t)| {
                let t = t.cast::<T>();
                let v = if grad { Var::leaf(t) } else { Var::constant(t) };
                (k.to_string(), v)
            })
            .collect();
        Self { vars }
    }

    pub fn from_tensors(tensors: IndexMap<String, Tensor<T>>, grad: bool) -> Self {
        let vars = tensors
            .into_iter()
            .map(|(k, t)| (k, if grad { Var::leaf(t) } else { Var::constant(t) }))
            .collect();
        Self { vars }
    }

    pub fn get(&self, name: &str) -> Result<&Var<T>> {
        self.vars
            .get(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Var<T>)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Accumulated gradients; parameters the loss never touched get zeros.
    pub fn grads(&self) -> IndexMap<String, Tensor<T>> {
        self.vars
            .iter()
            .map(|(k, v)| {
                let g = v.grad().unwrap_or_else(|| Tensor::zeros(v.dims()));
                (k.clone(), g)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_insertion_order() {
        let mut s = ParamStore::new();
        s.insert("z", Tensor::zeros([1, 1, 1, 1])).unwrap();
        s.insert("a", Tensor::zeros([1, 2, 1, 1])).unwrap();
        assert_eq!(s.names().collect::<Vec<_>>(), ["z", "a"]);
        assert_eq!(s.num_elements(), 3);
        assert!(s.insert("a", Tensor::zeros([1, 1, 1, 1])).is_err());
    }

    #[test]
    fn set_checks_dims() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::zeros([1, 2, 1, 1])).unwrap();
        assert!(s.set("w", Tensor::zeros([1, 3, 1, 1])).is_err());
        assert!(matches!(
            s.set("q", Tensor::zeros([1, 1, 1, 1])),
            Err(Error::MissingParam(_))
        ));
    }
}
