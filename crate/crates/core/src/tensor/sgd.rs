//! Stochastic gradient descent with classic momentum and weight decay.

use super::{Result, Tensor, TensorError};

/// Optimizer hyperparameters. The defaults are the training settings used
/// throughout this project: lr 1e-3, momentum 0.9, weight decay 1e-4,
/// mini-batch 128.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f32,
    pub momentum: f32,
    pub weight_decay: f32,
    pub batch_size: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 1e-3,
            momentum: 0.9,
            weight_decay: 1e-4,
            batch_size: 128,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TensorError::Invalid {
                op: "sgd_config",
                detail: format!("learning_rate must be positive, got {}", self.learning_rate),
            });
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(TensorError::Invalid {
                op: "sgd_config",
                detail: format!("momentum must be in [0,1), got {}", self.momentum),
            });
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(TensorError::Invalid {
                op: "sgd_config",
                detail: format!("weight_decay must be non-negative, got {}", self.weight_decay),
            });
        }
        if self.batch_size == 0 {
            return Err(TensorError::Invalid {
                op: "sgd_config",
                detail: "batch_size must be positive".into(),
            });
        }
        Ok(())
    }
}

/// A named trainable tensor with its momentum buffer.
pub struct Parameter {
    name: String,
    pub tensor: Tensor,
    velocity: Vec<f32>,
}

impl Parameter {
    pub fn new(name: impl Into<String>, tensor: Tensor) -> Result<Parameter> {
        let name = name.into();
        if name.is_empty() {
            return Err(TensorError::Invalid {
                op: "parameter",
                detail: "parameter name must be non-empty".into(),
            });
        }
        tensor.set_requires_grad(true);
        let velocity = vec![0.0; tensor.numel()];
        Ok(Parameter {
            name,
            tensor,
            velocity,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn velocity(&self) -> &[f32] {
        &self.velocity
    }

    pub fn reset_velocity(&mut self) {
        self.velocity.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// One optimizer step over the given parameters:
///
/// ```text
/// v <- momentum*v + grad + weight_decay*w
/// w <- w - lr*v
/// ```
///
/// Gradients are zeroed afterwards. A parameter without a gradient buffer
/// is a state error.
pub fn sgd_step(params: &mut [&mut Parameter], config: &SgdConfig) -> Result<()> {
    config.validate()?;
    for param in params.iter_mut() {
        let mut inner = param.tensor.inner.borrow_mut();
        let inner = &mut *inner;
        let grad = inner.grad.as_mut().ok_or_else(|| TensorError::MissingGrad {
            name: param.name.clone(),
        })?;
        let weights = &mut inner.data;
        let mut finite = true;
        for ((w, g), v) in weights.iter_mut().zip(grad.iter_mut()).zip(param.velocity.iter_mut()) {
            *v = config.momentum * *v + *g + config.weight_decay * *w;
            *w -= config.learning_rate * *v;
            finite &= w.is_finite();
            *g = 0.0;
        }
        if !finite {
            return Err(TensorError::NonFinite { op: "sgd_step" });
        }
    }
    Ok(())
}
