//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records one forward computation as a flat tape of nodes; each
//! differentiable node carries a closure that maps the incoming gradient to
//! gradients for its parents. [`Graph::backward`] replays the tape in reverse
//! and returns gradients keyed by parameter identity, so one tape can be
//! differentiated from several scalar roots (the per-network update phases
//! rely on this).

use std::cell::{Ref, RefCell};
use std::collections::HashMap;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::tensor::{Element, Tensor};

/// Process-unique identity of a parameter (stable across clones).
#[derive(Copy, Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct ParamId(u64);

static NEXT_PARAM_ID: AtomicU64 = AtomicU64::new(0);

struct ParamInner<T> {
    id: ParamId,
    name: String,
    value: Tensor<T>,
    trainable: bool,
}

/// A named, shareable network parameter or persistent buffer.
///
/// Clones alias the same storage, which is how weight sharing between
/// networks (the common first convolution block) is expressed. Buffers
/// (`trainable = false`, e.g. batch-norm running statistics) are checkpointed
/// but never receive gradients.
#[derive(Clone)]
pub struct Param<T> {
    inner: Rc<RefCell<ParamInner<T>>>,
}

impl<T: Element> Param<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        Self::with_trainable(name, value, true)
    }

    /// A persistent but non-trainable array (running statistics and the like).
    pub fn buffer(name: impl Into<String>, value: Tensor<T>) -> Self {
        Self::with_trainable(name, value, false)
    }

    fn with_trainable(name: impl Into<String>, value: Tensor<T>, trainable: bool) -> Self {
        let id = ParamId(NEXT_PARAM_ID.fetch_add(1, Ordering::Relaxed));
        Self {
            inner: Rc::new(RefCell::new(ParamInner {
                id,
                name: name.into(),
                value,
                trainable,
            })),
        }
    }

    pub fn id(&self) -> ParamId {
        self.inner.borrow().id
    }

    pub fn name(&self) -> String {
        self.inner.borrow().name.clone()
    }

    pub fn trainable(&self) -> bool {
        self.inner.borrow().trainable
    }

    /// Cheap snapshot of the current value (shared storage).
    pub fn value(&self) -> Tensor<T> {
        self.inner.borrow().value.clone()
    }

    pub fn borrow_value(&self) -> Ref<'_, Tensor<T>> {
        Ref::map(self.inner.borrow(), |p| &p.value)
    }

    pub fn set_value(&self, value: Tensor<T>) {
        let mut inner = self.inner.borrow_mut();
        assert_eq!(
            inner.value.shape(),
            value.shape(),
            "set_value changes shape of {}",
            inner.name
        );
        inner.value = value;
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().value.shape().to_vec()
    }
}

impl<T: Element> std::fmt::Debug for Param<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let inner = self.inner.borrow();
        write!(
            f,
            "Param({:?}, {:?}, {}trainable)",
            inner.name,
            inner.value.shape(),
            if inner.trainable { "" } else { "non-" }
        )
    }
}

/// Handle to a node on the tape.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub struct Var(pub(crate) usize);

type GradFn<T> = Box<dyn Fn(&Tensor<T>) -> Vec<(usize, Tensor<T>)>>;

struct Node<T> {
    value: Tensor<T>,
    needs_grad: bool,
    /// Present on parameter leaves so backward can report by identity.
    param: Option<(ParamId, bool)>,
    grad_fn: Option<GradFn<T>>,
}

/// Gradients of one scalar root with respect to every trainable parameter
/// that influenced it.
pub struct Gradients<T> {
    map: HashMap<ParamId, Tensor<T>>,
}

impl<T> Default for Gradients<T> {
    fn default() -> Self {
        Self { map: HashMap::new() }
    }
}

impl<T: Element> Gradients<T> {
    pub fn get(&self, param: &Param<T>) -> Option<&Tensor<T>> {
        self.map.get(&param.id())
    }

    /// Sets the gradient for one parameter (mostly for tests and tooling).
    pub fn insert(&mut self, param: &Param<T>, grad: Tensor<T>) {
        assert_eq!(param.shape(), grad.shape(), "gradient shape mismatch");
        self.map.insert(param.id(), grad);
    }

    pub fn contains(&self, param: &Param<T>) -> bool {
        self.map.contains_key(&param.id())
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Merges another gradient set into this one, summing overlaps.
    pub fn merge(&mut self, other: Gradients<T>) {
        for (id, g) in other.map {
            match self.map.entry(id) {
                std::collections::hash_map::Entry::Occupied(mut e) => e.get_mut().add_assign(&g),
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(g);
                }
            }
        }
    }
}

/// One recorded forward computation.
pub struct Graph<T: Element> {
    nodes: Vec<Node<T>>,
    param_nodes: HashMap<ParamId, Var>,
    train: bool,
}

impl<T: Element> Graph<T> {
    /// A fresh tape. `train` selects training-mode semantics for dropout and
    /// batch statistics; evaluation graphs pass `false`.
    pub fn new(train: bool) -> Self {
        Self { nodes: Vec::new(), param_nodes: HashMap::new(), train }
    }

    pub fn is_train(&self) -> bool {
        self.train
    }

    /// A constant leaf: no gradient ever flows into it.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, false, None, None)
    }

    /// A gradient barrier: the same value as `v`, but nothing upstream of `v`
    /// receives gradients through it (discriminators train on detached fakes).
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.push(value, false, None, None)
    }

    /// A parameter leaf. Repeated binds of the same parameter return the same
    /// node, so gradients from all of its uses accumulate in one place.
    pub fn param(&mut self, p: &Param<T>) -> Var {
        if let Some(&v) = self.param_nodes.get(&p.id()) {
            return v;
        }
        let trainable = p.trainable();
        let v = self.push(p.value(), trainable, Some((p.id(), trainable)), None);
        self.param_nodes.insert(p.id(), v);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Core tape append used by the op builders.
    pub(crate) fn push(
        &mut self,
        value: Tensor<T>,
        needs_grad: bool,
        param: Option<(ParamId, bool)>,
        grad_fn: Option<GradFn<T>>,
    ) -> Var {
        debug_assert!(grad_fn.is_none() || needs_grad, "grad_fn on a node that needs no grad");
        self.nodes.push(Node { value, needs_grad, param, grad_fn });
        Var(self.nodes.len() - 1)
    }

    /// Appends an interior node whose gradient closure is only kept when some
    /// parent actually needs a gradient.
    pub(crate) fn push_op(
        &mut self,
        parents: &[Var],
        value: Tensor<T>,
        grad_fn: impl Fn(&Tensor<T>) -> Vec<(usize, Tensor<T>)> + 'static,
    ) -> Var {
        let needs = parents.iter().any(|&p| self.nodes[p.0].needs_grad);
        let f: Option<GradFn<T>> = if needs { Some(Box::new(grad_fn)) } else { None };
        self.push(value, needs, None, f)
    }

    /// Reverse-mode differentiation from a scalar root. The tape is left
    /// intact, so several roots can be differentiated independently.
    pub fn backward(&self, root: Var) -> Gradients<T> {
        assert_eq!(
            self.nodes[root.0].value.len(),
            1,
            "backward root must be scalar, got shape {:?}",
            self.nodes[root.0].value.shape()
        );
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Tensor::scalar_tensor(T::ONE));
        let mut out = Gradients::default();

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            if let Some((id, trainable)) = node.param {
                if trainable {
                    out.map.insert(id, g.clone());
                }
            }
            if let Some(f) = &node.grad_fn {
                for (p, gp) in f(&g) {
                    debug_assert!(p < i, "gradient flows forward on the tape");
                    debug_assert_eq!(
                        gp.shape(),
                        self.nodes[p].value.shape(),
                        "gradient shape mismatch into node {p}"
                    );
                    if !self.nodes[p].needs_grad {
                        continue;
                    }
                    match &mut grads[p] {
                        Some(acc) => acc.add_assign(&gp),
                        slot @ None => *slot = Some(gp),
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_graph() -> (Graph<f64>, Param<f64>, Param<f64>) {
        let g = Graph::new(true);
        let a = Param::new("a", Tensor::scalar_tensor(3.0));
        let b = Param::new("b", Tensor::scalar_tensor(4.0));
        (g, a, b)
    }

    #[test]
    fn param_binding_is_cached_and_grads_accumulate_across_uses() {
        let (mut g, a, _) = scalar_graph();
        let va = g.param(&a);
        let va2 = g.param(&a);
        assert_eq!(va, va2);
        // y = a * a  =>  dy/da = 2a = 6
        let y = g.mul(va, va2);
        let grads = g.backward(y);
        assert_eq!(grads.get(&a).unwrap().scalar(), 6.0);
    }

    #[test]
    fn two_roots_on_one_tape_differentiate_independently() {
        let (mut g, a, b) = scalar_graph();
        let va = g.param(&a);
        let vb = g.param(&b);
        let r1 = g.mul(va, vb); // d/da = b = 4
        let r2 = g.add(va, vb); // d/da = 1
        let g1 = g.backward(r1);
        let g2 = g.backward(r2);
        assert_eq!(g1.get(&a).unwrap().scalar(), 4.0);
        assert_eq!(g2.get(&a).unwrap().scalar(), 1.0);
        assert_eq!(g2.get(&b).unwrap().scalar(), 1.0);
    }

    #[test]
    fn constants_and_non_trainable_buffers_receive_no_gradient() {
        let mut g: Graph<f64> = Graph::new(true);
        let c = g.constant(Tensor::scalar_tensor(5.0));
        let buf = Param::buffer("running", Tensor::scalar_tensor(2.0));
        let vb = g.param(&buf);
        let y = g.mul(c, vb);
        let grads = g.backward(y);
        assert!(grads.is_empty());
        assert!(!g.needs_grad(y));
    }
}
