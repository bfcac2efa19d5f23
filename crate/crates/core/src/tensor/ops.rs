//! Forward operations and their reverse-mode adjoints.
//!
//! Each op validates shapes, computes its value, checks the result for
//! non-finite entries, and (when tracking is on and an input participates
//! in the graph) records an [`Op`] node holding handles to its parents.

use std::collections::HashSet;

use super::gemm::{col2im, im2col, sgemm, ConvGeom};
use super::{ensure_finite, grad_enabled, Result, Tensor, TensorError};

pub(crate) enum Op {
    Conv2d {
        input: Tensor,
        weights: Tensor,
        bias: Tensor,
        geom: ConvGeom,
    },
    MaxPool2d {
        input: Tensor,
        argmax: Vec<usize>,
    },
    FullyConnected {
        input: Tensor,
        weights: Tensor,
        bias: Tensor,
    },
    Relu {
        input: Tensor,
    },
    Concat {
        inputs: Vec<Tensor>,
        axis: usize,
    },
    Flatten {
        input: Tensor,
    },
    L1Loss {
        pred: Tensor,
        target: Tensor,
    },
    Add {
        lhs: Tensor,
        rhs: Tensor,
    },
    Scale {
        input: Tensor,
        factor: f32,
    },
    Sum {
        input: Tensor,
    },
}

impl Op {
    fn parents(&self) -> Vec<Tensor> {
        match self {
            Op::Conv2d {
                input,
                weights,
                bias,
                ..
            }
            | Op::FullyConnected {
                input,
                weights,
                bias,
            } => vec![input.clone(), weights.clone(), bias.clone()],
            Op::MaxPool2d { input, .. }
            | Op::Relu { input }
            | Op::Flatten { input }
            | Op::Scale { input, .. }
            | Op::Sum { input } => vec![input.clone()],
            Op::Concat { inputs, .. } => inputs.to_vec(),
            Op::L1Loss { pred, target } => vec![pred.clone(), target.clone()],
            Op::Add { lhs, rhs } => vec![lhs.clone(), rhs.clone()],
        }
    }
}

fn finish(
    op_name: &'static str,
    shape: Vec<usize>,
    data: Vec<f32>,
    inputs: &[&Tensor],
    make_op: impl FnOnce() -> Op,
) -> Result<Tensor> {
    ensure_finite(op_name, &data)?;
    let out = Tensor::new_unchecked(shape, data);
    if grad_enabled() && inputs.iter().any(|t| t.tracks()) {
        let mut inner = out.inner.borrow_mut();
        inner.requires_grad = true;
        inner.op = Some(make_op());
    }
    Ok(out)
}

fn dim_err(op: &'static str, axis: usize, detail: String) -> TensorError {
    TensorError::DimMismatch { op, axis, detail }
}

fn require_rank(op: &'static str, t: &Tensor, rank: usize, what: &str) -> Result<Vec<usize>> {
    let shape = t.shape();
    if shape.len() != rank {
        return Err(TensorError::Invalid {
            op,
            detail: format!("{what} must have rank {rank}, got shape {shape:?}"),
        });
    }
    Ok(shape)
}

/// 2-d convolution over NCHW input with a square OIHW kernel.
pub fn conv2d(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    const OP: &str = "conv2d";
    let in_shape = require_rank(OP, input, 4, "input")?;
    let w_shape = require_rank(OP, weights, 4, "weights")?;
    let b_shape = require_rank(OP, bias, 1, "bias")?;
    if stride == 0 {
        return Err(TensorError::Invalid {
            op: OP,
            detail: "stride must be positive".into(),
        });
    }
    let (batch, in_c, in_h, in_w) = (in_shape[0], in_shape[1], in_shape[2], in_shape[3]);
    let (out_c, w_in_c, kh, kw) = (w_shape[0], w_shape[1], w_shape[2], w_shape[3]);
    if kh != kw {
        return Err(dim_err(OP, 3, format!("kernel must be square, got {kh}x{kw}")));
    }
    if w_in_c != in_c {
        return Err(dim_err(
            OP,
            1,
            format!("input has {in_c} channels but weights expect {w_in_c}"),
        ));
    }
    if b_shape[0] != out_c {
        return Err(dim_err(
            OP,
            0,
            format!("bias has {} entries but weights produce {out_c} channels", b_shape[0]),
        ));
    }
    if in_h + 2 * padding < kh {
        return Err(dim_err(
            OP,
            2,
            format!("padded height {} is smaller than kernel {kh}", in_h + 2 * padding),
        ));
    }
    if in_w + 2 * padding < kw {
        return Err(dim_err(
            OP,
            3,
            format!("padded width {} is smaller than kernel {kw}", in_w + 2 * padding),
        ));
    }
    let out_h = (in_h + 2 * padding - kh) / stride + 1;
    let out_w = (in_w + 2 * padding - kw) / stride + 1;
    let geom = ConvGeom {
        batch,
        in_channels: in_c,
        in_h,
        in_w,
        out_channels: out_c,
        kernel: kh,
        stride,
        padding,
        out_h,
        out_w,
    };

    let spatial = out_h * out_w;
    let positions = geom.out_positions();
    let patch_len = geom.patch_len();
    let mut out = vec![0.0f32; batch * out_c * spatial];
    {
        let x = input.data();
        let w = weights.data();
        let b = bias.data();
        let mut cols = vec![0.0f32; patch_len * positions];
        im2col(&x, &geom, &mut cols);
        let mut prod = vec![0.0f32; out_c * positions];
        sgemm(out_c, patch_len, positions, 1.0, &w, false, &cols, false, 0.0, &mut prod);
        for n in 0..batch {
            for co in 0..out_c {
                let src = &prod[co * positions + n * spatial..][..spatial];
                let dst = &mut out[(n * out_c + co) * spatial..][..spatial];
                let bv = b[co];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = s + bv;
                }
            }
        }
    }
    finish(
        OP,
        vec![batch, out_c, out_h, out_w],
        out,
        &[input, weights, bias],
        || Op::Conv2d {
            input: input.clone(),
            weights: weights.clone(),
            bias: bias.clone(),
            geom,
        },
    )
}

/// 2x2 max pooling with stride 2. Ties resolve to the first element in
/// scan order so gradients are deterministic.
pub fn maxpool2d(input: &Tensor) -> Result<Tensor> {
    const OP: &str = "maxpool2d";
    let shape = require_rank(OP, input, 4, "input")?;
    let (batch, channels, in_h, in_w) = (shape[0], shape[1], shape[2], shape[3]);
    if in_h % 2 != 0 {
        return Err(dim_err(OP, 2, format!("height {in_h} is not divisible by 2")));
    }
    if in_w % 2 != 0 {
        return Err(dim_err(OP, 3, format!("width {in_w} is not divisible by 2")));
    }
    let out_h = in_h / 2;
    let out_w = in_w / 2;
    let mut out = vec![0.0f32; batch * channels * out_h * out_w];
    let mut argmax = vec![0usize; out.len()];
    {
        let x = input.data();
        let mut oi = 0;
        for nc in 0..batch * channels {
            let plane = nc * in_h * in_w;
            for oh in 0..out_h {
                for ow in 0..out_w {
                    let base = plane + (oh * 2) * in_w + ow * 2;
                    let mut best_idx = base;
                    let mut best = x[base];
                    for (dh, dw) in [(0usize, 1usize), (1, 0), (1, 1)] {
                        let idx = base + dh * in_w + dw;
                        if x[idx] > best {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                    out[oi] = best;
                    argmax[oi] = best_idx;
                    oi += 1;
                }
            }
        }
    }
    finish(
        OP,
        vec![batch, channels, out_h, out_w],
        out,
        &[input],
        || Op::MaxPool2d {
            input: input.clone(),
            argmax,
        },
    )
}

/// Affine map: `input [N,D_in] @ weights [D_out,D_in]^T + bias [D_out]`.
pub fn fully_connected(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    const OP: &str = "fully_connected";
    let in_shape = require_rank(OP, input, 2, "input")?;
    let w_shape = require_rank(OP, weights, 2, "weights")?;
    let b_shape = require_rank(OP, bias, 1, "bias")?;
    let (batch, d_in) = (in_shape[0], in_shape[1]);
    let (d_out, w_in) = (w_shape[0], w_shape[1]);
    if w_in != d_in {
        return Err(dim_err(
            OP,
            1,
            format!("input features {d_in} do not match weight features {w_in}"),
        ));
    }
    if b_shape[0] != d_out {
        return Err(dim_err(
            OP,
            0,
            format!("bias has {} entries but weights produce {d_out}", b_shape[0]),
        ));
    }
    let mut out = vec![0.0f32; batch * d_out];
    {
        let x = input.data();
        let w = weights.data();
        let b = bias.data();
        sgemm(batch, d_in, d_out, 1.0, &x, false, &w, true, 0.0, &mut out);
        for row in out.chunks_exact_mut(d_out) {
            for (v, bv) in row.iter_mut().zip(b.iter()) {
                *v += bv;
            }
        }
    }
    finish(OP, vec![batch, d_out], out, &[input, weights, bias], || {
        Op::FullyConnected {
            input: input.clone(),
            weights: weights.clone(),
            bias: bias.clone(),
        }
    })
}

/// Elementwise max(0, x). The subgradient at 0 is 0.
pub fn relu(input: &Tensor) -> Result<Tensor> {
    let out: Vec<f32> = input.data().iter().map(|&v| v.max(0.0)).collect();
    finish("relu", input.shape(), out, &[input], || Op::Relu {
        input: input.clone(),
    })
}

/// Concatenates tensors along `axis`; all other dimensions must agree.
pub fn concat(inputs: &[Tensor], axis: usize) -> Result<Tensor> {
    const OP: &str = "concat";
    let first = inputs.first().ok_or_else(|| TensorError::Invalid {
        op: OP,
        detail: "empty input list".into(),
    })?;
    let base_shape = first.shape();
    if axis >= base_shape.len() {
        return Err(TensorError::Invalid {
            op: OP,
            detail: format!("axis {axis} out of range for rank {}", base_shape.len()),
        });
    }
    let mut axis_total = 0usize;
    for t in inputs {
        let shape = t.shape();
        if shape.len() != base_shape.len() {
            return Err(TensorError::Invalid {
                op: OP,
                detail: format!("rank mismatch: {:?} vs {:?}", base_shape, shape),
            });
        }
        for (d, (&a, &b)) in base_shape.iter().zip(shape.iter()).enumerate() {
            if d != axis && a != b {
                return Err(dim_err(OP, d, format!("sizes {a} and {b} disagree off the concat axis")));
            }
        }
        axis_total += shape[axis];
    }
    let mut out_shape = base_shape.clone();
    out_shape[axis] = axis_total;
    let outer: usize = base_shape[..axis].iter().product();
    let inner: usize = base_shape[axis + 1..].iter().product();
    let mut out = vec![0.0f32; outer * axis_total * inner];
    let mut offset = 0usize;
    for t in inputs {
        let a_len = t.shape()[axis];
        let data = t.data();
        let block = a_len * inner;
        for o in 0..outer {
            let dst = &mut out[(o * axis_total + offset) * inner..][..block];
            dst.copy_from_slice(&data[o * block..][..block]);
        }
        offset += a_len;
    }
    let inputs_owned = inputs.to_vec();
    let input_refs: Vec<&Tensor> = inputs.iter().collect();
    finish(OP, out_shape, out, &input_refs, || Op::Concat {
        inputs: inputs_owned,
        axis,
    })
}

/// Row-major reshape of [N,C,H,W] to [N, C*H*W].
pub fn flatten(input: &Tensor) -> Result<Tensor> {
    let shape = require_rank("flatten", input, 4, "input")?;
    let out_shape = vec![shape[0], shape[1] * shape[2] * shape[3]];
    let data = input.to_vec();
    finish("flatten", out_shape, data, &[input], || Op::Flatten {
        input: input.clone(),
    })
}

/// Mean absolute error over all elements. Gradient is sign(pred-target)/n,
/// zero at exact equality.
pub fn l1_loss(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    const OP: &str = "l1_loss";
    let p_shape = pred.shape();
    let t_shape = target.shape();
    if p_shape != t_shape {
        let axis = p_shape
            .iter()
            .zip(t_shape.iter())
            .position(|(a, b)| a != b)
            .unwrap_or(0);
        return Err(dim_err(
            OP,
            axis,
            format!("prediction shape {p_shape:?} does not match target shape {t_shape:?}"),
        ));
    }
    let total: f64 = {
        let p = pred.data();
        let t = target.data();
        p.iter()
            .zip(t.iter())
            .map(|(a, b)| (a - b).abs() as f64)
            .sum()
    };
    let mean = (total / pred.numel() as f64) as f32;
    finish(OP, vec![1], vec![mean], &[pred, target], || Op::L1Loss {
        pred: pred.clone(),
        target: target.clone(),
    })
}

/// Elementwise sum of two same-shape tensors.
pub fn add(lhs: &Tensor, rhs: &Tensor) -> Result<Tensor> {
    const OP: &str = "add";
    let l_shape = lhs.shape();
    let r_shape = rhs.shape();
    if l_shape != r_shape {
        let axis = l_shape
            .iter()
            .zip(r_shape.iter())
            .position(|(a, b)| a != b)
            .unwrap_or(0);
        return Err(dim_err(OP, axis, format!("shapes {l_shape:?} and {r_shape:?} differ")));
    }
    let out: Vec<f32> = {
        let a = lhs.data();
        let b = rhs.data();
        a.iter().zip(b.iter()).map(|(x, y)| x + y).collect()
    };
    finish(OP, l_shape, out, &[lhs, rhs], || Op::Add {
        lhs: lhs.clone(),
        rhs: rhs.clone(),
    })
}

/// Multiplies every element by a constant.
pub fn scale(input: &Tensor, factor: f32) -> Result<Tensor> {
    let out: Vec<f32> = input.data().iter().map(|v| v * factor).collect();
    finish("scale", input.shape(), out, &[input], || Op::Scale {
        input: input.clone(),
        factor,
    })
}

/// Sum of all elements, as a one-element tensor.
pub fn sum(input: &Tensor) -> Result<Tensor> {
    let total: f64 = input.data().iter().map(|&v| v as f64).sum();
    finish("sum", vec![1], vec![total as f32], &[input], || Op::Sum {
        input: input.clone(),
    })
}

/// Runs reverse-mode differentiation from a scalar loss, accumulating
/// gradients into every reachable tensor that requires them. Consumes the
/// graph: a second call on the same loss reports [`TensorError::GraphConsumed`].
pub fn backward(loss: &Tensor) -> Result<()> {
    {
        let inner = loss.inner.borrow();
        if inner.data.len() != 1 {
            return Err(TensorError::NotScalar {
                shape: inner.shape.clone(),
            });
        }
        if inner.consumed {
            return Err(TensorError::GraphConsumed);
        }
    }
    let order = topo_order(loss);
    loss.accumulate_grad(&[1.0]);
    loss.inner.borrow_mut().consumed = true;
    for node in order.iter().rev() {
        let op = node.inner.borrow_mut().op.take();
        let Some(op) = op else { continue };
        node.inner.borrow_mut().consumed = true;
        let grad_present = node.inner.borrow().grad.is_some();
        if grad_present {
            let inner = node.inner.borrow();
            let grad = inner.grad.as_deref().expect("grad checked above");
            apply_backward(&op, grad);
        }
    }
    Ok(())
}

/// Post-order over the op DAG: every node appears after its parents.
fn topo_order(root: &Tensor) -> Vec<Tensor> {
    let mut order = Vec::new();
    let mut visited = HashSet::new();
    let mut stack: Vec<(Tensor, bool)> = vec![(root.clone(), false)];
    while let Some((node, expanded)) = stack.pop() {
        if expanded {
            order.push(node);
            continue;
        }
        if !visited.insert(node.id()) {
            continue;
        }
        stack.push((node.clone(), true));
        if let Some(op) = &node.inner.borrow().op {
            for parent in op.parents() {
                stack.push((parent, false));
            }
        }
    }
    order
}

fn apply_backward(op: &Op, grad: &[f32]) {
    match op {
        Op::Conv2d {
            input,
            weights,
            bias,
            geom,
        } => {
            let positions = geom.out_positions();
            let spatial = geom.out_h * geom.out_w;
            let patch_len = geom.patch_len();
            let out_c = geom.out_channels;
            // Regroup the output gradient as [out_c x positions].
            let mut gy = vec![0.0f32; out_c * positions];
            for n in 0..geom.batch {
                for co in 0..out_c {
                    let src = &grad[(n * out_c + co) * spatial..][..spatial];
                    gy[co * positions + n * spatial..][..spatial].copy_from_slice(src);
                }
            }
            if bias.requires_grad() {
                let mut db = vec![0.0f32; out_c];
                for (co, dbv) in db.iter_mut().enumerate() {
                    *dbv = gy[co * positions..][..positions].iter().sum();
                }
                bias.accumulate_grad(&db);
            }
            if weights.requires_grad() {
                let mut cols = vec![0.0f32; patch_len * positions];
                {
                    let x = input.data();
                    im2col(&x, geom, &mut cols);
                }
                let mut dw = vec![0.0f32; out_c * patch_len];
                sgemm(out_c, positions, patch_len, 1.0, &gy, false, &cols, true, 0.0, &mut dw);
                weights.accumulate_grad(&dw);
            }
            if input.requires_grad() {
                let mut dcols = vec![0.0f32; patch_len * positions];
                {
                    let w = weights.data();
                    sgemm(patch_len, out_c, positions, 1.0, &w, true, &gy, false, 0.0, &mut dcols);
                }
                let mut dx = vec![0.0f32; input.numel()];
                col2im(&dcols, geom, &mut dx);
                input.accumulate_grad(&dx);
            }
        }
        Op::MaxPool2d { input, argmax } => {
            if input.requires_grad() {
                let mut dx = vec![0.0f32; input.numel()];
                for (g, &idx) in grad.iter().zip(argmax.iter()) {
                    dx[idx] += g;
                }
                input.accumulate_grad(&dx);
            }
        }
        Op::FullyConnected {
            input,
            weights,
            bias,
        } => {
            let batch = input.shape()[0];
            let d_in = input.shape()[1];
            let d_out = weights.shape()[0];
            if bias.requires_grad() {
                let mut db = vec![0.0f32; d_out];
                for row in grad.chunks_exact(d_out) {
                    for (dbv, g) in db.iter_mut().zip(row) {
                        *dbv += g;
                    }
                }
                bias.accumulate_grad(&db);
            }
            if weights.requires_grad() {
                let mut dw = vec![0.0f32; d_out * d_in];
                {
                    let x = input.data();
                    sgemm(d_out, batch, d_in, 1.0, grad, true, &x, false, 0.0, &mut dw);
                }
                weights.accumulate_grad(&dw);
            }
            if input.requires_grad() {
                let mut dx = vec![0.0f32; batch * d_in];
                {
                    let w = weights.data();
                    sgemm(batch, d_out, d_in, 1.0, grad, false, &w, false, 0.0, &mut dx);
                }
                input.accumulate_grad(&dx);
            }
        }
        Op::Relu { input } => {
            if input.requires_grad() {
                let dx: Vec<f32> = {
                    let x = input.data();
                    x.iter()
                        .zip(grad.iter())
                        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
                        .collect()
                };
                input.accumulate_grad(&dx);
            }
        }
        Op::Concat { inputs, axis } => {
            let out_shape = {
                let mut s = inputs[0].shape();
                s[*axis] = inputs.iter().map(|t| t.shape()[*axis]).sum();
                s
            };
            let outer: usize = out_shape[..*axis].iter().product();
            let inner: usize = out_shape[*axis + 1..].iter().product();
            let axis_total = out_shape[*axis];
            let mut offset = 0usize;
            for t in inputs {
                let a_len = t.shape()[*axis];
                let block = a_len * inner;
                if t.requires_grad() {
                    let mut dt = vec![0.0f32; t.numel()];
                    for o in 0..outer {
                        let src = &grad[(o * axis_total + offset) * inner..][..block];
                        dt[o * block..][..block].copy_from_slice(src);
                    }
                    t.accumulate_grad(&dt);
                }
                offset += a_len;
            }
        }
        Op::Flatten { input } => {
            if input.requires_grad() {
                input.accumulate_grad(grad);
            }
        }
        Op::L1Loss { pred, target } => {
            let g = grad[0];
            let n = pred.numel() as f32;
            let signs: Vec<f32> = {
                let p = pred.data();
                let t = target.data();
                p.iter()
                    .zip(t.iter())
                    .map(|(&a, &b)| {
                        let d = a - b;
                        if d > 0.0 {
                            g / n
                        } else if d < 0.0 {
                            -g / n
                        } else {
                            0.0
                        }
                    })
                    .collect()
            };
            if pred.requires_grad() {
                pred.accumulate_grad(&signs);
            }
            if target.requires_grad() {
                let neg: Vec<f32> = signs.iter().map(|v| -v).collect();
                target.accumulate_grad(&neg);
            }
        }
        Op::Add { lhs, rhs } => {
            if lhs.requires_grad() {
                lhs.accumulate_grad(grad);
            }
            if rhs.requires_grad() {
                rhs.accumulate_grad(grad);
            }
        }
        Op::Scale { input, factor } => {
            if input.requires_grad() {
                let dx: Vec<f32> = grad.iter().map(|g| g * factor).collect();
                input.accumulate_grad(&dx);
            }
        }
        Op::Sum { input } => {
            if input.requires_grad() {
                let dx = vec![grad[0]; input.numel()];
                input.accumulate_grad(&dx);
            }
        }
    }
}
