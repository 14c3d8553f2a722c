use std::cell::{Ref, RefCell};
use std::fmt;

use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Computes parent gradients from `(ctx, output value, output gradient)`.
///
/// Returns one entry per parent, in the order the parents were recorded;
/// `None` for parents that do not need a gradient.
pub(crate) type BackwardFn<T> = Box<dyn Fn(&BackwardCtx<'_, T>, &[T], &[T]) -> Vec<Option<Vec<T>>>>;

struct Node<T> {
    shape: Vec<usize>,
    value: Vec<T>,
    parents: Vec<usize>,
    backward: Option<BackwardFn<T>>,
    requires_grad: bool,
}

/// Read access to recorded values during the backward sweep.
pub struct BackwardCtx<'a, T> {
    nodes: &'a [Node<T>],
}

impl<T> BackwardCtx<'_, T> {
    pub(crate) fn value(&self, id: usize) -> &[T] {
        &self.nodes[id].value
    }

    pub(crate) fn needs_grad(&self, id: usize) -> bool {
        self.nodes[id].requires_grad
    }
}

/// Records operations into a DAG for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so the node index is already a
/// topological order and backward simply walks it in reverse.
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T> fmt::Debug for Tape<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("nodes", &self.nodes.borrow().len()).finish()
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T> {
    pub(crate) tape: &'t Tape<T>,
    pub(crate) id: usize,
}

impl<T> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}", self.id)
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: RefCell::new(Vec::new()) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records a tensor as a leaf, honouring its `requires_grad` flag.
    pub fn leaf(&self, t: &Tensor<T>) -> Var<'_, T> {
        self.push_leaf(t.shape().to_vec(), t.data().to_vec(), t.requires_grad)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&self, t: &Tensor<T>) -> Var<'_, T> {
        self.push_leaf(t.shape().to_vec(), t.data().to_vec(), false)
    }

    /// Records a trainable leaf regardless of the tensor's flag.
    pub fn param(&self, t: &Tensor<T>) -> Var<'_, T> {
        self.push_leaf(t.shape().to_vec(), t.data().to_vec(), true)
    }

    pub fn constant_from(&self, shape: &[usize], data: Vec<T>) -> Result<Var<'_, T>> {
        let t = Tensor::new(shape, data)?;
        Ok(self.constant(&t))
    }

    fn push_leaf(&self, shape: Vec<usize>, value: Vec<T>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { shape, value, parents: Vec::new(), backward: None, requires_grad });
        Var { tape: self, id: nodes.len() - 1 }
    }

    pub(crate) fn push(
        &self,
        shape: Vec<usize>,
        value: Vec<T>,
        parents: &[usize],
        backward: BackwardFn<T>,
    ) -> Var<'_, T> {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = parents.iter().any(|&p| nodes[p].requires_grad);
        nodes.push(Node {
            shape,
            value,
            parents: parents.to_vec(),
            backward: requires_grad.then_some(backward),
            requires_grad,
        });
        Var { tape: self, id: nodes.len() - 1 }
    }

    pub(crate) fn nodes_value(&self, id: usize) -> Ref<'_, [T]> {
        Ref::map(self.nodes.borrow(), |n| n[id].value.as_slice())
    }

    pub(crate) fn node_shape(&self, id: usize) -> Vec<usize> {
        self.nodes.borrow()[id].shape.clone()
    }

    pub(crate) fn node_requires_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Reverse sweep from a scalar loss.
    ///
    /// Returns the gradients of every leaf that requires one. Each node is
    /// visited at most once; contributions from several consumers are summed
    /// before the node propagates.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>> {
        assert!(std::ptr::eq(loss.tape, self), "loss recorded on a different tape");
        let nodes = self.nodes.borrow();
        if nodes[loss.id].value.len() != 1 {
            return shape_err(format!(
                "backward needs a scalar loss, got shape {:?}",
                nodes[loss.id].shape
            ));
        }
        let mut grads: Vec<Option<Vec<T>>> = Vec::new();
        grads.resize_with(loss.id + 1, || None);
        if nodes[loss.id].requires_grad {
            grads[loss.id] = Some(vec![T::one()]);
        }
        let ctx = BackwardCtx { nodes: &nodes };
        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            let Some(f) = &node.backward else {
                grads[id] = Some(g);
                continue;
            };
            let parent_grads = f(&ctx, &node.value, &g);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (&p, pg) in node.parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !nodes[p].requires_grad {
                    continue;
                }
                debug_assert_eq!(pg.len(), nodes[p].value.len(), "gradient shape for node {p}");
                match &mut grads[p] {
                    Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, &b)| *a = *a + b),
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// Leaf gradients produced by one backward sweep.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var<'_, T>) -> Option<&[T]> {
        self.grads.get(v.id).and_then(|g| g.as_deref())
    }

    /// Gradient of `v`, or zeros when no path reached it.
    pub fn get_or_zeros(&self, v: Var<'_, T>) -> Vec<T> {
        match self.get(v) {
            Some(g) => g.to_vec(),
            None => vec![T::zero(); v.tape.nodes_value(v.id).len()],
        }
    }

    /// Adds the gradient of `v` into `t.grad`.
    pub fn accumulate_into(&self, v: Var<'_, T>, t: &mut Tensor<T>) -> Result<()> {
        match self.get(v) {
            Some(g) => t.accumulate_grad(g),
            None => t.accumulate_grad(&vec![T::zero(); t.len()]),
        }
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.node_shape(self.id)
    }

    pub fn numel(&self) -> usize {
        self.tape.nodes_value(self.id).len()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.node_requires_grad(self.id)
    }

    pub fn value(&self) -> Vec<T> {
        self.tape.nodes_value(self.id).to_vec()
    }

    pub fn with_value<R>(&self, f: impl FnOnce(&[T]) -> R) -> R {
        f(&self.tape.nodes_value(self.id))
    }

    pub fn to_tensor(&self) -> Tensor<T> {
        Tensor::new(&self.shape(), self.value()).expect("recorded shapes are consistent")
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> T {
        let v = self.tape.nodes_value(self.id);
        assert_eq!(v.len(), 1, "item() on a tensor with {} values", v.len());
        v[0]
    }

    /// Same value, cut from the graph.
    pub fn detach(&self) -> Var<'t, T> {
        let shape = self.shape();
        let value = self.value();
        self.tape.push_leaf(shape, value, false)
    }

    pub(crate) fn same_tape(&self, other: &Var<'_, T>) {
        assert!(std::ptr::eq(self.tape, other.tape), "vars recorded on different tapes");
    }
}
