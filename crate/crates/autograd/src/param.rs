//! Named trainable parameters.

use std::sync::{Arc, RwLock};

use crate::{Array, AutogradError, Result, Scalar};

struct Inner<T> {
    name: String,
    value: Array<T>,
    grad: Array<T>,
}

/// A named tensor with an attached gradient accumulator.
///
/// Cloning is shallow: all clones share the same storage, so a parameter
/// bound into several graphs accumulates gradients from each backward pass.
pub struct Parameter<T> {
    inner: Arc<RwLock<Inner<T>>>,
}

impl<T> Clone for Parameter<T> {
    fn clone(&self) -> Self {
        Self {
            inner: Arc::clone(&self.inner),
        }
    }
}

impl<T: Scalar> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Array<T>) -> Self {
        let grad = Array::zeros(value.shape());
        Self {
            inner: Arc::new(RwLock::new(Inner {
                name: name.into(),
                value,
                grad,
            })),
        }
    }

    pub fn name(&self) -> String {
        self.inner.read().unwrap().name.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.read().unwrap().value.shape().to_vec()
    }

    pub fn numel(&self) -> usize {
        self.inner.read().unwrap().value.numel()
    }

    /// Snapshot of the current value.
    pub fn value(&self) -> Array<T> {
        self.inner.read().unwrap().value.clone()
    }

    /// Snapshot of the accumulated gradient.
    pub fn grad(&self) -> Array<T> {
        self.inner.read().unwrap().grad.clone()
    }

    pub fn set_value(&self, value: Array<T>) -> Result<()> {
        let mut inner = self.inner.write().unwrap();
        if value.shape() != inner.value.shape() {
            return Err(AutogradError::Shape(format!(
                "parameter {}: cannot assign shape {:?} over {:?}",
                inner.name,
                value.shape(),
                inner.value.shape()
            )));
        }
        inner.value = value;
        Ok(())
    }

    pub fn zero_grad(&self) {
        self.inner.write().unwrap().grad.fill(T::zero());
    }

    pub(crate) fn accumulate_grad(&self, g: &Array<T>) {
        self.inner.write().unwrap().grad.add_assign(g);
    }

    /// Mutate value and gradient together (optimizer steps).
    pub fn update(&self, f: impl FnOnce(&mut Array<T>, &mut Array<T>)) {
        let inner = &mut *self.inner.write().unwrap();
        f(&mut inner.value, &mut inner.grad);
    }

    /// Perturb one coordinate in place; used by the finite-difference harness.
    pub fn nudge(&self, index: usize, delta: T) {
        let inner = &mut *self.inner.write().unwrap();
        inner.value.data_mut()[index] += delta;
    }

    pub fn grad_at(&self, index: usize) -> T {
        self.inner.read().unwrap().grad.data()[index]
    }
}

impl<T: Scalar> std::fmt::Debug for Parameter<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let inner = self.inner.read().unwrap();
        write!(f, "Parameter({:?}, shape {:?})", inner.name, inner.value.shape())
    }
}

/// Checks that parameter names are unique, returning the offender if not.
pub fn check_unique_names<T: Scalar>(params: &[Parameter<T>]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for p in params {
        let name = p.name();
        if !seen.insert(name.clone()) {
            return Err(AutogradError::Contract(format!(
                "duplicate parameter name {name:?}"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clones_share_storage() {
        let p = Parameter::new("w", Array::<f64>::zeros(&[2]));
        let q = p.clone();
        q.accumulate_grad(&Array::from_vec(vec![2], vec![1.0, 2.0]).unwrap());
        assert_eq!(p.grad().data(), &[1.0, 2.0]);
        p.zero_grad();
        assert_eq!(q.grad().data(), &[0.0, 0.0]);
    }

    #[test]
    fn duplicate_names_rejected() {
        let a = Parameter::new("w", Array::<f32>::zeros(&[1]));
        let b = Parameter::new("w", Array::<f32>::zeros(&[1]));
        assert!(check_unique_names(&[a, b]).is_err());
    }
}
