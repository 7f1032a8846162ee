//! The recording tape and reverse pass.

use std::rc::Rc;

use crate::{Array, AutogradError, Parameter, Result, Scalar};

/// Handle to a value on a [`Graph`]'s tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// Per-node gradients produced by the reverse pass.
pub struct GradStore<T> {
    slots: Vec<Option<Array<T>>>,
}

impl<T: Scalar> GradStore<T> {
    fn new(len: usize) -> Self {
        Self {
            slots: (0..len).map(|_| None).collect(),
        }
    }

    pub fn get(&self, v: Var) -> Option<&Array<T>> {
        self.slots[v.0].as_ref()
    }

    /// Accumulate a gradient contribution for node `id`.
    pub(crate) fn add(&mut self, id: usize, g: Array<T>) {
        match &mut self.slots[id] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    /// Accumulate into node `id` through a writer over a zero-initialized
    /// buffer of `shape`, avoiding a temporary when the slot already exists.
    pub(crate) fn add_with(&mut self, id: usize, shape: &[usize], write: impl FnOnce(&mut [T])) {
        let slot = &mut self.slots[id];
        if slot.is_none() {
            *slot = Some(Array::zeros(shape));
        }
        write(slot.as_mut().unwrap().data_mut());
    }
}

type BackwardFn<T> = Box<dyn FnOnce(&Array<T>, &mut GradStore<T>)>;

pub(crate) struct Node<T> {
    pub(crate) value: Rc<Array<T>>,
    backward: Option<BackwardFn<T>>,
    param: Option<Parameter<T>>,
    pub(crate) needs_grad: bool,
}

/// Topologically ordered record of applied operations.
///
/// Operations are methods on the graph (see the `ops` module); each pushes
/// the forward value plus a closure that propagates gradients to its
/// inputs. A graph built with [`Graph::inference`] records no closures.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    recording: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            recording: true,
        }
    }

    /// A graph that skips gradient bookkeeping entirely.
    pub fn inference() -> Self {
        Self {
            nodes: Vec::new(),
            recording: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A constant input; no gradient flows into it.
    pub fn input(&mut self, value: Array<T>) -> Var {
        self.push(value, None, None, false)
    }

    pub fn scalar(&mut self, value: T) -> Var {
        self.input(Array::scalar(value))
    }

    /// Bind a parameter as a leaf. Its gradient accumulates into the
    /// parameter itself during [`Graph::backward`].
    pub fn param(&mut self, p: &Parameter<T>) -> Var {
        let value = p.value();
        if self.recording {
            self.push(value, None, Some(p.clone()), true)
        } else {
            self.push(value, None, None, false)
        }
    }

    pub fn value(&self, v: Var) -> &Array<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub(crate) fn rc_value(&self, v: Var) -> Rc<Array<T>> {
        Rc::clone(&self.nodes[v.0].value)
    }

    pub(crate) fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(
        &mut self,
        value: Array<T>,
        backward: Option<BackwardFn<T>>,
        param: Option<Parameter<T>>,
        needs_grad: bool,
    ) -> Var {
        self.nodes.push(Node {
            value: Rc::new(value),
            backward,
            param,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Record an op node. `backward` receives the node's output gradient and
    /// the store; it must accumulate gradients for every differentiable
    /// input. The closure is dropped (and gradients skipped) when no input
    /// requires gradients or the graph is in inference mode.
    pub(crate) fn push_op(
        &mut self,
        value: Array<T>,
        inputs: &[Var],
        backward: impl FnOnce(&Array<T>, &mut GradStore<T>) + 'static,
    ) -> Var {
        self.push_op_rc(Rc::new(value), inputs, backward)
    }

    /// Like [`Graph::push_op`], for ops whose backward closure captures a
    /// clone of the output value.
    pub(crate) fn push_op_rc(
        &mut self,
        value: Rc<Array<T>>,
        inputs: &[Var],
        backward: impl FnOnce(&Array<T>, &mut GradStore<T>) + 'static,
    ) -> Var {
        let needs_grad = self.recording && inputs.iter().any(|&v| self.needs_grad(v));
        let bw: Option<BackwardFn<T>> = if needs_grad {
            Some(Box::new(backward))
        } else {
            None
        };
        self.nodes.push(Node {
            value,
            backward: bw,
            param: None,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Reverse pass from a scalar loss. Returns per-node gradients; bound
    /// parameters have additionally accumulated their gradients in place.
    pub fn backward(&mut self, loss: Var) -> Result<GradStore<T>> {
        let loss_val = &self.nodes[loss.0].value;
        if loss_val.numel() != 1 {
            return Err(AutogradError::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                loss_val.shape()
            )));
        }
        let mut store = GradStore::new(self.nodes.len());
        store.add(loss.0, Array::filled(loss_val.shape(), T::one()));

        for id in (0..=loss.0).rev() {
            if store.slots[id].is_none() {
                continue;
            }
            let g = store.slots[id].take().unwrap();
            if let Some(bw) = self.nodes[id].backward.take() {
                bw(&g, &mut store);
            }
            if let Some(p) = &self.nodes[id].param {
                p.accumulate_grad(&g);
            }
            store.slots[id] = Some(g);
        }
        Ok(store)
    }
}
