use std::cell::Cell;
use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{shape_err, Result};
use crate::scalar::Scalar;

/// Process-unique identity of a tensor; gradients are keyed by it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TensorId(u64);

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

impl TensorId {
    fn fresh() -> Self {
        TensorId(NEXT_ID.fetch_add(1, Ordering::Relaxed))
    }
}

/// Vector-Jacobian product of one recorded op: maps the output gradient to
/// one optional gradient per parent (`None` where the parent needs none).
pub(crate) type BackwardFn<S> =
    Box<dyn Fn(&[S], &[Tensor<S>]) -> Vec<Option<Vec<S>>> + Send + Sync>;

pub(crate) struct Node<S: Scalar> {
    pub(crate) op: &'static str,
    pub(crate) parents: Vec<Tensor<S>>,
    pub(crate) backward: BackwardFn<S>,
}

pub(crate) struct Inner<S: Scalar> {
    pub(crate) id: TensorId,
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Arc<Vec<S>>,
    pub(crate) requires_grad: bool,
    pub(crate) recorded: bool,
    pub(crate) node: Mutex<Option<Node<S>>>,
}

/// Immutable dense row-major tensor handle. Cloning is cheap.
pub struct Tensor<S: Scalar> {
    pub(crate) inner: Arc<Inner<S>>,
}

impl<S: Scalar> Clone for Tensor<S> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Arc::clone(&self.inner),
        }
    }
}

impl<S: Scalar> fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<S> = self.data().iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .field("requires_grad", &self.requires_grad())
            .field("data", &preview)
            .finish()
    }
}

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

static FINITE_CHECK: AtomicBool = AtomicBool::new(cfg!(debug_assertions));

/// Runs `f` without recording any operations on the current thread.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let prev = GRAD_ENABLED.with(|g| g.replace(false));
    let _restore = Restore(prev);
    f()
}

pub fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// Toggles the per-op NaN/Inf scan. On by default in debug builds.
pub fn set_finite_check(enabled: bool) {
    FINITE_CHECK.store(enabled, Ordering::Relaxed);
}

pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<S: Scalar> Tensor<S> {
    fn build(
        shape: Vec<usize>,
        data: Arc<Vec<S>>,
        requires_grad: bool,
        node: Option<Node<S>>,
    ) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor {
            inner: Arc::new(Inner {
                id: TensorId::fresh(),
                shape,
                data,
                requires_grad,
                recorded: node.is_some(),
                node: Mutex::new(node),
            }),
        }
    }

    pub fn from_vec(data: Vec<S>, shape: &[usize]) -> Result<Self> {
        if numel(shape) != data.len() {
            return shape_err("from_vec", shape, &[data.len()]);
        }
        Ok(Self::build(shape.to_vec(), Arc::new(data), false, None))
    }

    pub fn from_f64(data: &[f64], shape: &[usize]) -> Result<Self> {
        Self::from_vec(data.iter().map(|&v| S::of(v)).collect(), shape)
    }

    pub fn scalar(v: S) -> Self {
        Self::build(Vec::new(), Arc::new(vec![v]), false, None)
    }

    pub fn full(shape: &[usize], v: S) -> Self {
        Self::build(shape.to_vec(), Arc::new(vec![v; numel(shape)]), false, None)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, S::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, S::one())
    }

    /// A leaf that gradients are accumulated for.
    pub fn leaf(data: Vec<S>, shape: &[usize]) -> Result<Self> {
        if numel(shape) != data.len() {
            return shape_err("leaf", shape, &[data.len()]);
        }
        Ok(Self::build(shape.to_vec(), Arc::new(data), true, None))
    }

    /// Same values, same shape, no history, gradient tracking as requested.
    pub fn detach_with_grad(&self, requires_grad: bool) -> Self {
        Self::build(
            self.inner.shape.clone(),
            Arc::clone(&self.inner.data),
            requires_grad,
            None,
        )
    }

    pub fn detach(&self) -> Self {
        self.detach_with_grad(false)
    }

    pub fn id(&self) -> TensorId {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.inner.data.len()
    }

    pub fn data(&self) -> &[S] {
        &self.inner.data
    }

    pub fn to_vec(&self) -> Vec<S> {
        self.inner.data.as_ref().clone()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.inner.data.iter().map(|v| v.as_f64()).collect()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> S {
        self.inner.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.inner.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn shared_data(&self) -> Arc<Vec<S>> {
        Arc::clone(&self.inner.data)
    }

    pub(crate) fn has_node(&self) -> bool {
        self.inner.node.lock().expect("node lock").is_some()
    }

    /// Converts element type; the result has no history.
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        let data: Vec<T> = self.inner.data.iter().map(|v| T::of(v.as_f64())).collect();
        Tensor::<T>::build(self.inner.shape.clone(), Arc::new(data), false, None)
    }

    /// Output of a differentiable op. History is recorded only when grad mode
    /// is on and some parent requires a gradient.
    pub(crate) fn from_op(
        op: &'static str,
        shape: Vec<usize>,
        data: Arc<Vec<S>>,
        parents: Vec<Tensor<S>>,
        backward: BackwardFn<S>,
    ) -> Self {
        if FINITE_CHECK.load(Ordering::Relaxed) && data.iter().any(|v| !v.is_finite()) {
            panic!("non-finite value produced by {op}");
        }
        let track = grad_enabled() && parents.iter().any(|p| p.requires_grad());
        if track {
            Self::build(
                shape,
                data,
                true,
                Some(Node {
                    op,
                    parents,
                    backward,
                }),
            )
        } else {
            Self::build(shape, data, false, None)
        }
    }
}

/// Whether two tensors hold exactly the same bits and shape.
pub fn bit_identical<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> bool {
    a.shape() == b.shape()
        && a.data()
            .iter()
            .zip(b.data())
            .all(|(x, y)| x.to_f64().map(f64::to_bits) == y.to_f64().map(f64::to_bits))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_checks_element_count() {
        assert!(Tensor::<f32>::from_vec(vec![1.0, 2.0], &[3]).is_err());
        let t = Tensor::<f32>::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        assert_eq!(t.shape(), &[2, 2]);
        assert_eq!(t.numel(), 4);
    }

    #[test]
    fn no_grad_restores_flag() {
        assert!(grad_enabled());
        no_grad(|| assert!(!grad_enabled()));
        assert!(grad_enabled());
    }
}
