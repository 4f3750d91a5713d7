//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Var`] is a reference-counted graph node. The graph is only recorded
//! when at least one input requires a gradient, so inference with frozen
//! parameters keeps no intermediate buffers alive.

pub mod check;
pub mod ops;

use std::cell::RefCell;
use std::collections::HashSet;
use std::rc::Rc;

use crate::tensor::{Dims, Scalar, Tensor};

type BackwardFn<T> = Box<dyn Fn(&Tensor<T>) -> Vec<Option<Tensor<T>>>>;

struct Node<T: Scalar> {
    value: Tensor<T>,
    grad: RefCell<Option<Tensor<T>>>,
    parents: Vec<Var<T>>,
    backward: Option<BackwardFn<T>>,
    requires_grad: bool,
}

#[derive(Clone)]
pub struct Var<T: Scalar = f32>(Rc<Node<T>>);

impl<T: Scalar> std::fmt::Debug for Var<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({:?}, grad={})", self.0.value, self.0.requires_grad)
    }
}

impl<T: Scalar> Var<T> {
    /// A value that never receives a gradient.
    pub fn constant(value: Tensor<T>) -> Self {
        Self::make(value, Vec::new(), None, false)
    }

    /// A leaf that accumulates a gradient during [`Var::backward`].
    pub fn leaf(value: Tensor<T>) -> Self {
        Self::make(value, Vec::new(), None, true)
    }

    fn make(
        value: Tensor<T>,
        parents: Vec<Var<T>>,
        backward: Option<BackwardFn<T>>,
        requires_grad: bool,
    ) -> Self {
        Var(Rc::new(Node {
            value,
            grad: RefCell::new(None),
            parents,
            backward,
            requires_grad,
        }))
    }

    /// Record an operation. `backward` maps the output gradient to one
    /// optional gradient per parent, in order.
    pub(crate) fn record(
        value: Tensor<T>,
        parents: Vec<Var<T>>,
        backward: impl Fn(&Tensor<T>) -> Vec<Option<Tensor<T>>> + 'static,
    ) -> Self {
        if parents.iter().any(Var::requires_grad) {
            Self::make(value, parents, Some(Box::new(backward)), true)
        } else {
            Self::constant(value)
        }
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.0.value
    }

    pub fn dims(&self) -> Dims {
        self.0.value.dims()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn grad(&self) -> Option<Tensor<T>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    fn key(&self) -> *const Node<T> {
        Rc::as_ptr(&self.0)
    }

    /// Nodes reachable from `self` that take part in differentiation, with
    /// every node placed after all of its consumers.
    fn reverse_topo(&self) -> Vec<Var<T>> {
        let mut order = Vec::new();
        let mut seen = HashSet::new();
        let mut stack: Vec<(Var<T>, bool)> = vec![(self.clone(), false)];
        while let Some((v, expanded)) = stack.pop() {
            if expanded {
                order.push(v);
                continue;
            }
            if !v.requires_grad() || !seen.insert(v.key()) {
                continue;
            }
            stack.push((v.clone(), true));
            for p in &v.0.parents {
                if p.requires_grad() && !seen.contains(&p.key()) {
                    stack.push((p.clone(), false));
                }
            }
        }
        order.reverse();
        order
    }

    /// Back-propagate from this node, seeding its gradient with ones.
    /// Gradients accumulate into leaves; intermediate gradients are released
    /// once consumed.
    pub fn backward(&self) {
        if !self.requires_grad() {
            return;
        }
        let order = self.reverse_topo();
        *self.0.grad.borrow_mut() = Some(Tensor::ones(self.dims()));
        for v in &order {
            let Some(bw) = &v.0.backward else { continue };
            let Some(g) = v.0.grad.borrow_mut().take() else {
                continue;
            };
            for (p, pg) in v.0.parents.iter().zip(bw(&g)) {
                if let Some(pg) = pg.filter(|_| p.requires_grad()) {
                    debug_assert_eq!(pg.dims(), p.dims());
                    accumulate(&p.0.grad, pg);
                }
            }
        }
    }
}

// Long chains would otherwise be torn down recursively, one stack frame per
// node.
impl<T: Scalar> Drop for Node<T> {
    fn drop(&mut self) {
        let mut pending = std::mem::take(&mut self.parents);
        while let Some(v) = pending.pop() {
            if let Ok(mut node) = Rc::try_unwrap(v.0) {
                pending.append(&mut node.parents);
            }
        }
    }
}

fn accumulate<T: Scalar>(slot: &RefCell<Option<Tensor<T>>>, g: Tensor<T>) {
    let mut slot = slot.borrow_mut();
    *slot = Some(match slot.take() {
        None => g,
        Some(prev) => prev
            .zip_map(&g, |a, b| a + b)
            .expect("gradient dims match node dims"),
    });
}
