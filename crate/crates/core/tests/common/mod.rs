//! Independent f64 reference implementations used as test oracles.
//!
//! Everything here is deliberately naive (nested loops, compensated sums)
//! and shares no code with the library's compute paths.

#![allow(dead_code)]

pub mod gradcheck;

/// Plain row-major f64 array.
#[derive(Clone, Debug)]
pub struct Arr {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Arr {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Arr {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        Arr {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn from_f32(shape: &[usize], data: &[f32]) -> Arr {
        Arr::new(shape, data.iter().map(|&v| v as f64).collect())
    }

    fn at4(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        let (_, cc, hh, ww) = (self.shape[0], self.shape[1], self.shape[2], self.shape[3]);
        self.data[((n * cc + c) * hh + h) * ww + w]
    }
}

/// Six-nested-loop convolution, NCHW input, OIHW square kernel.
pub fn conv2d_ref(x: &Arr, w: &Arr, b: &Arr, stride: usize, pad: usize) -> Arr {
    let (batch, in_c, in_h, in_w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let (out_c, _, k, _) = (w.shape[0], w.shape[1], w.shape[2], w.shape[3]);
    let out_h = (in_h + 2 * pad - k) / stride + 1;
    let out_w = (in_w + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; batch * out_c * out_h * out_w];
    let mut idx = 0;
    for n in 0..batch {
        for co in 0..out_c {
            for oh in 0..out_h {
                for ow in 0..out_w {
                    let mut acc = b.data[co];
                    for ci in 0..in_c {
                        for kh in 0..k {
                            for kw in 0..k {
                                let ih = (oh * stride + kh) as isize - pad as isize;
                                let iw = (ow * stride + kw) as isize - pad as isize;
                                if ih < 0 || iw < 0 || ih >= in_h as isize || iw >= in_w as isize {
                                    continue;
                                }
                                acc += x.at4(n, ci, ih as usize, iw as usize)
                                    * w.at4(co, ci, kh, kw);
                            }
                        }
                    }
                    out[idx] = acc;
                    idx += 1;
                }
            }
        }
    }
    Arr::new(&[batch, out_c, out_h, out_w], out)
}

pub fn maxpool2d_ref(x: &Arr) -> Arr {
    let (batch, c, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(batch * c * oh * ow);
    for n in 0..batch {
        for ci in 0..c {
            for i in 0..oh {
                for j in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    for dh in 0..2 {
                        for dw in 0..2 {
                            best = best.max(x.at4(n, ci, 2 * i + dh, 2 * j + dw));
                        }
                    }
                    out.push(best);
                }
            }
        }
    }
    Arr::new(&[batch, c, oh, ow], out)
}

pub fn fully_connected_ref(x: &Arr, w: &Arr, b: &Arr) -> Arr {
    let (batch, d_in) = (x.shape[0], x.shape[1]);
    let d_out = w.shape[0];
    let mut out = Vec::with_capacity(batch * d_out);
    for n in 0..batch {
        for o in 0..d_out {
            let mut acc = b.data[o];
            for i in 0..d_in {
                acc += x.data[n * d_in + i] * w.data[o * d_in + i];
            }
            out.push(acc);
        }
    }
    Arr::new(&[batch, d_out], out)
}

pub fn relu_ref(x: &Arr) -> Arr {
    Arr::new(&x.shape, x.data.iter().map(|&v| v.max(0.0)).collect())
}

pub fn concat_ref(parts: &[&Arr], axis: usize) -> Arr {
    let base = &parts[0].shape;
    let outer: usize = base[..axis].iter().product();
    let inner: usize = base[axis + 1..].iter().product();
    let axis_total: usize = parts.iter().map(|p| p.shape[axis]).sum();
    let mut shape = base.clone();
    shape[axis] = axis_total;
    let mut out = vec![0.0; outer * axis_total * inner];
    let mut offset = 0;
    for p in parts {
        let a_len = p.shape[axis];
        for o in 0..outer {
            for a in 0..a_len {
                for i in 0..inner {
                    out[(o * axis_total + offset + a) * inner + i] =
                        p.data[(o * a_len + a) * inner + i];
                }
            }
        }
        offset += a_len;
    }
    Arr::new(&shape, out)
}

pub fn flatten_ref(x: &Arr) -> Arr {
    Arr::new(&[x.shape[0], x.data.len() / x.shape[0]], x.data.clone())
}

pub fn l1_ref(pred: &Arr, target: &Arr) -> f64 {
    let total: f64 = pred
        .data
        .iter()
        .zip(target.data.iter())
        .map(|(a, b)| (a - b).abs())
        .sum();
    total / pred.data.len() as f64
}

/// Central finite differences of a scalar-valued function.
pub fn fd_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut grad = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        grad.push((up - down) / (2.0 * h));
    }
    grad
}

/// Largest relative disagreement, with an absolute floor so that values
/// that are both essentially zero do not blow up the ratio.
pub fn max_rel_err(analytic: &[f32], reference: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(reference.iter())
        .map(|(&a, &r)| {
            let a = a as f64;
            let denom = a.abs().max(r.abs()).max(floor);
            (a - r).abs() / denom
        })
        .fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &[f32], b: &[f64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x as f64 - y).abs())
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Metric oracles: compensated summation and brute-force ranks.
// ---------------------------------------------------------------------------

pub fn kahan_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

pub fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = kahan_sum(x.iter().copied()) / n;
    let my = kahan_sum(y.iter().copied()) / n;
    let cov = kahan_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let vx = kahan_sum(x.iter().map(|a| (a - mx) * (a - mx)));
    let vy = kahan_sum(y.iter().map(|b| (b - my) * (b - my)));
    cov / (vx.sqrt() * vy.sqrt())
}

/// Fractional ranks by brute-force counting: 1 + #smaller + (#equal - 1)/2.
pub fn ranks_oracle(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|&v| {
            let smaller = values.iter().filter(|&&o| o < v).count();
            let equal = values.iter().filter(|&&o| o == v).count();
            1.0 + smaller as f64 + (equal as f64 - 1.0) / 2.0
        })
        .collect()
}

pub fn spearman_oracle(x: &[f64], y: &[f64]) -> f64 {
    pearson_oracle(&ranks_oracle(x), &ranks_oracle(y))
}

pub fn rmse_oracle(x: &[f64], y: &[f64]) -> f64 {
    let sq = kahan_sum(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)));
    (sq / x.len() as f64).sqrt()
}

/// Classical tie-free Spearman closed form: 1 - 6*sum(d^2)/(n(n^2-1)).
pub fn spearman_closed_form(x: &[f64], y: &[f64]) -> f64 {
    let rx = ranks_oracle(x);
    let ry = ranks_oracle(y);
    let n = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

// ---------------------------------------------------------------------------
// f64 reference of the full multi-score network, reconstructed from
// exported parameters. Used to finite-difference the composite loss.
// ---------------------------------------------------------------------------

pub struct RefNet {
    params: std::collections::HashMap<String, Arr>,
}

impl RefNet {
    pub fn from_entries(entries: &[(String, Vec<usize>, Vec<f32>)]) -> RefNet {
        let params = entries
            .iter()
            .map(|(name, shape, data)| (name.clone(), Arr::from_f32(shape, data)))
            .collect();
        RefNet { params }
    }

    fn p(&self, name: &str) -> &Arr {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("missing reference parameter {name}"))
    }

    pub fn set_param_value(&mut self, name: &str, index: usize, value: f64) -> f64 {
        let arr = self.params.get_mut(name).expect("parameter exists");
        std::mem::replace(&mut arr.data[index], value)
    }

    pub fn param_value(&self, name: &str, index: usize) -> f64 {
        self.p(name).data[index]
    }

    fn conv_block(&self, prefix: &str, x: &Arr, pool: bool) -> Arr {
        let y = conv2d_ref(
            x,
            self.p(&format!("{prefix}/weight")),
            self.p(&format!("{prefix}/bias")),
            1,
            1,
        );
        let y = relu_ref(&y);
        if pool {
            maxpool2d_ref(&y)
        } else {
            y
        }
    }

    fn fc_block(&self, prefix: &str, x: &Arr, relu: bool) -> Arr {
        let y = fully_connected_ref(
            x,
            self.p(&format!("{prefix}/weight")),
            self.p(&format!("{prefix}/bias")),
        );
        if relu {
            relu_ref(&y)
        } else {
            y
        }
    }

    /// Branch forward, returning (512-wide feature, score).
    pub fn branch_forward(&self, name: &str, x: &Arr) -> (Arr, Arr) {
        let t = self.conv_block(&format!("{name}/LBconv1/conv"), x, true);
        let t = self.conv_block(&format!("{name}/LBconv2/conv"), &t, true);
        let t = self.conv_block(&format!("{name}/conv3"), &t, false);
        let t = self.conv_block(&format!("{name}/conv4"), &t, false);
        let t = self.conv_block(&format!("{name}/LBconv3/conv"), &t, true);
        let flat = flatten_ref(&t);
        let hidden = self.fc_block(&format!("{name}/LBflat/fc"), &flat, true);
        let feature = self.fc_block(&format!("{name}/LBFcr/fc"), &hidden, true);
        let score = self.fc_block(&format!("{name}/score"), &feature, false);
        (feature, score)
    }

    /// Full forward: [q_left, q_right, q_stereo, q_global] as [N,1] arrays.
    pub fn forward(&self, left: &Arr, right: &Arr) -> [Arr; 4] {
        let stereo_in = {
            // Channel-wise concat of [N,3,H,W] pairs.
            let (n, c, h, w) = (left.shape[0], left.shape[1], left.shape[2], left.shape[3]);
            let plane = c * h * w;
            let mut data = Vec::with_capacity(2 * n * plane);
            for i in 0..n {
                data.extend_from_slice(&left.data[i * plane..][..plane]);
                data.extend_from_slice(&right.data[i * plane..][..plane]);
            }
            Arr::new(&[n, 2 * c, h, w], data)
        };
        let (fl, ql) = self.branch_forward("left", left);
        let (fr, qr) = self.branch_forward("right", right);
        let (fs, qs) = self.branch_forward("stereo", &stereo_in);
        let fused = concat_ref(&[&fl, &fr, &fs], 1);
        let hidden = self.fc_block("global/LBconct/fc1", &fused, true);
        let qg = self.fc_block("global/LBconct/fc2", &hidden, false);
        [ql, qr, qs, qg]
    }

    /// The four-term training loss: 2*L1(qg,ms) + L1(qs,ms) + L1(ql,ml) + L1(qr,mr).
    pub fn composite_loss(&self, left: &Arr, right: &Arr, ml: &Arr, mr: &Arr, ms: &Arr) -> f64 {
        let [ql, qr, qs, qg] = self.forward(left, right);
        2.0 * l1_ref(&qg, ms) + l1_ref(&qs, ms) + l1_ref(&ql, ml) + l1_ref(&qr, mr)
    }
}
