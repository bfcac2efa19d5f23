//! Dense f32 tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is a cheap handle onto a shared node. Forward ops build a
//! graph when gradient tracking is enabled and any input requires a
//! gradient; [`backward`] walks that graph once and accumulates gradients
//! into every tensor that requires them. The graph is consumed by the walk,
//! so a second `backward` on the same loss is an error.
//!
//! Every op validates its output: a NaN or infinity is reported as
//! [`TensorError::NonFinite`] instead of propagating silently.

mod gemm;
mod ops;
mod sgd;

pub use ops::{add, backward, concat, conv2d, flatten, fully_connected, l1_loss, maxpool2d, relu, scale, sum};
pub use sgd::{sgd_step, Parameter, SgdConfig};

use std::cell::{Cell, Ref, RefCell};
use std::rc::Rc;

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("{op}: dimension mismatch on axis {axis}: {detail}")]
    DimMismatch {
        op: &'static str,
        axis: usize,
        detail: String,
    },
    #[error("{op}: {detail}")]
    Invalid { op: &'static str, detail: String },
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("backward called on an already-consumed graph")]
    GraphConsumed,
    #[error("parameter `{name}` has no gradient buffer")]
    MissingGrad { name: String },
}

pub type Result<T> = std::result::Result<T, TensorError>;

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
}

pub(crate) fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// Disables graph recording for the guard's lifetime (inference mode).
pub struct NoGradGuard {
    prev: bool,
}

pub fn no_grad() -> NoGradGuard {
    let prev = GRAD_ENABLED.with(|g| g.replace(false));
    NoGradGuard { prev }
}

impl Drop for NoGradGuard {
    fn drop(&mut self) {
        let prev = self.prev;
        GRAD_ENABLED.with(|g| g.set(prev));
    }
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

pub(crate) struct TensorInner {
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Vec<f32>,
    pub(crate) grad: Option<Vec<f32>>,
    pub(crate) requires_grad: bool,
    pub(crate) op: Option<ops::Op>,
    pub(crate) consumed: bool,
    pub(crate) id: u64,
}

/// Shared handle to a dense row-major f32 array, optionally tracked by the
/// autodiff graph. Cloning is cheap and aliases the same storage.
#[derive(Clone)]
pub struct Tensor {
    pub(crate) inner: Rc<RefCell<TensorInner>>,
}

impl Tensor {
    pub fn from_vec(shape: &[usize], data: Vec<f32>) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) {
            return Err(TensorError::Invalid {
                op: "from_vec",
                detail: format!("zero-sized dimension in shape {shape:?}"),
            });
        }
        if numel != data.len() {
            return Err(TensorError::Invalid {
                op: "from_vec",
                detail: format!("shape {shape:?} implies {numel} values, got {}", data.len()),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(TensorError::NonFinite { op: "from_vec" });
        }
        Ok(Self::new_unchecked(shape.to_vec(), data))
    }

    pub(crate) fn new_unchecked(shape: Vec<usize>, data: Vec<f32>) -> Tensor {
        Tensor {
            inner: Rc::new(RefCell::new(TensorInner {
                shape,
                data,
                grad: None,
                requires_grad: false,
                op: None,
                consumed: false,
                id: next_id(),
            })),
        }
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        let numel = shape.iter().product();
        Self::new_unchecked(shape.to_vec(), vec![0.0; numel])
    }

    pub fn full(shape: &[usize], value: f32) -> Result<Tensor> {
        let numel = shape.iter().product();
        Self::from_vec(shape, vec![value; numel])
    }

    pub fn scalar(value: f32) -> Result<Tensor> {
        Self::from_vec(&[1], vec![value])
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape.clone()
    }

    pub fn rank(&self) -> usize {
        self.inner.borrow().shape.len()
    }

    pub fn numel(&self) -> usize {
        self.inner.borrow().data.len()
    }

    /// Borrows the underlying values. The borrow must be released before
    /// any mutating call on the same tensor.
    pub fn data(&self) -> Ref<'_, [f32]> {
        Ref::map(self.inner.borrow(), |i| i.data.as_slice())
    }

    pub fn to_vec(&self) -> Vec<f32> {
        self.inner.borrow().data.clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<f32> {
        let inner = self.inner.borrow();
        if inner.data.len() != 1 {
            return Err(TensorError::NotScalar {
                shape: inner.shape.clone(),
            });
        }
        Ok(inner.data[0])
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.borrow().requires_grad
    }

    /// Marks the tensor as a gradient sink and allocates its gradient buffer.
    pub fn set_requires_grad(&self, requires: bool) {
        let mut inner = self.inner.borrow_mut();
        inner.requires_grad = requires;
        if requires {
            let n = inner.data.len();
            inner.grad.get_or_insert_with(|| vec![0.0; n]);
        } else {
            inner.grad = None;
        }
    }

    pub fn grad(&self) -> Option<Vec<f32>> {
        self.inner.borrow().grad.clone()
    }

    pub fn zero_grad(&self) {
        let mut inner = self.inner.borrow_mut();
        if inner.requires_grad {
            let n = inner.data.len();
            match &mut inner.grad {
                Some(g) => g.iter_mut().for_each(|v| *v = 0.0),
                none => *none = Some(vec![0.0; n]),
            }
        }
    }

    /// Replaces the stored values, keeping shape and identity.
    pub fn set_data(&self, data: &[f32]) -> Result<()> {
        let mut inner = self.inner.borrow_mut();
        if data.len() != inner.data.len() {
            return Err(TensorError::Invalid {
                op: "set_data",
                detail: format!("expected {} values, got {}", inner.data.len(), data.len()),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(TensorError::NonFinite { op: "set_data" });
        }
        inner.data.copy_from_slice(data);
        Ok(())
    }

    pub(crate) fn id(&self) -> u64 {
        self.inner.borrow().id
    }

    /// True when this tensor participates in the current graph, either as a
    /// gradient sink or as an intermediate.
    pub(crate) fn tracks(&self) -> bool {
        let inner = self.inner.borrow();
        inner.requires_grad || inner.op.is_some()
    }

    pub(crate) fn accumulate_grad(&self, contrib: &[f32]) {
        let mut inner = self.inner.borrow_mut();
        debug_assert_eq!(contrib.len(), inner.data.len());
        let n = inner.data.len();
        let grad = inner.grad.get_or_insert_with(|| vec![0.0; n]);
        for (g, c) in grad.iter_mut().zip(contrib) {
            *g += c;
        }
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let inner = self.inner.borrow();
        f.debug_struct("Tensor")
            .field("shape", &inner.shape)
            .field("requires_grad", &inner.requires_grad)
            .finish()
    }
}

pub(crate) fn ensure_finite(op: &'static str, data: &[f32]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(TensorError::NonFinite { op })
    }
}
