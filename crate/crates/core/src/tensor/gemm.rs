//! Thin wrappers around the matrixmultiply GEMM kernel plus the
//! im2col/col2im buffers used by the convolution op.

/// C (m x n, row-major) = alpha * A @ B + beta * C.
///
/// `a_trans` / `b_trans` reinterpret the row-major inputs as transposed
/// without copying.
#[allow(clippy::too_many_arguments)]
pub(crate) fn sgemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f32,
    a: &[f32],
    a_trans: bool,
    b: &[f32],
    b_trans: bool,
    beta: f32,
    c: &mut [f32],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of one convolution: shapes, stride, padding.
#[derive(Clone, Copy)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub in_channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn out_positions(&self) -> usize {
        self.batch * self.out_h * self.out_w
    }
}

/// For one kernel column offset, the inclusive range of output columns
/// whose input column `ow*stride + kw - padding` is in bounds.
fn valid_ow_range(g: &ConvGeom, kw: usize) -> Option<(usize, usize)> {
    // iw >= 0  <=>  ow*stride >= padding - kw
    let ow_start = if g.padding > kw {
        (g.padding - kw).div_ceil(g.stride)
    } else {
        0
    };
    // iw <= in_w-1  <=>  ow*stride <= in_w-1 + padding - kw
    if kw > g.in_w - 1 + g.padding {
        return None;
    }
    let ow_last = ((g.in_w - 1 + g.padding - kw) / g.stride).min(g.out_w - 1);
    if ow_start > ow_last {
        return None;
    }
    Some((ow_start, ow_last))
}

/// Unrolls input patches into a `[patch_len x (batch*out_h*out_w)]`
/// row-major matrix. Out-of-bounds (padding) positions contribute zeros.
pub(crate) fn im2col(input: &[f32], g: &ConvGeom, cols: &mut [f32]) {
    let cols_w = g.out_positions();
    debug_assert_eq!(cols.len(), g.patch_len() * cols_w);
    cols.iter_mut().for_each(|v| *v = 0.0);
    let spatial = g.out_h * g.out_w;
    for ci in 0..g.in_channels {
        for kh in 0..g.kernel {
            for kw in 0..g.kernel {
                let row = (ci * g.kernel + kh) * g.kernel + kw;
                let dst_row = &mut cols[row * cols_w..(row + 1) * cols_w];
                let Some((ow_start, ow_last)) = valid_ow_range(g, kw) else {
                    continue;
                };
                let count = ow_last - ow_start + 1;
                for n in 0..g.batch {
                    let src_plane = &input[(n * g.in_channels + ci) * g.in_h * g.in_w..];
                    for oh in 0..g.out_h {
                        let ih = (oh * g.stride + kh) as isize - g.padding as isize;
                        if ih < 0 || ih >= g.in_h as isize {
                            continue;
                        }
                        let src_base = ih as usize * g.in_w + ow_start * g.stride + kw - g.padding;
                        let dst_base = n * spatial + oh * g.out_w + ow_start;
                        if g.stride == 1 {
                            dst_row[dst_base..dst_base + count]
                                .copy_from_slice(&src_plane[src_base..src_base + count]);
                        } else {
                            for i in 0..count {
                                dst_row[dst_base + i] = src_plane[src_base + i * g.stride];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-adds a column matrix (same layout as [`im2col`]) back onto the
/// input gradient. Exact adjoint of `im2col`.
pub(crate) fn col2im(cols: &[f32], g: &ConvGeom, input_grad: &mut [f32]) {
    let cols_w = g.out_positions();
    debug_assert_eq!(cols.len(), g.patch_len() * cols_w);
    let spatial = g.out_h * g.out_w;
    for ci in 0..g.in_channels {
        for kh in 0..g.kernel {
            for kw in 0..g.kernel {
                let row = (ci * g.kernel + kh) * g.kernel + kw;
                let src_row = &cols[row * cols_w..(row + 1) * cols_w];
                let Some((ow_start, ow_last)) = valid_ow_range(g, kw) else {
                    continue;
                };
                let count = ow_last - ow_start + 1;
                for n in 0..g.batch {
                    let dst_plane = &mut input_grad[(n * g.in_channels + ci) * g.in_h * g.in_w..]
                        [..g.in_h * g.in_w];
                    for oh in 0..g.out_h {
                        let ih = (oh * g.stride + kh) as isize - g.padding as isize;
                        if ih < 0 || ih >= g.in_h as isize {
                            continue;
                        }
                        let dst_base = ih as usize * g.in_w + ow_start * g.stride + kw - g.padding;
                        let src_base = n * spatial + oh * g.out_w + ow_start;
                        if g.stride == 1 {
                            let dst = &mut dst_plane[dst_base..dst_base + count];
                            let src = &src_row[src_base..src_base + count];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += s;
                            }
                        } else {
                            for i in 0..count {
                                dst_plane[dst_base + i * g.stride] += src_row[src_base + i];
                            }
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgemm_matches_hand_product() {
        // [1 2; 3 4] @ [5 6; 7 8] = [19 22; 43 50]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut c = [0.0; 4];
        sgemm(2, 2, 2, 1.0, &a, false, &b, false, 0.0, &mut c);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn sgemm_transpose_flags() {
        let a = [1.0, 3.0, 2.0, 4.0]; // column-major [1 2; 3 4]
        let b = [5.0, 7.0, 6.0, 8.0];
        let mut c = [0.0; 4];
        sgemm(2, 2, 2, 1.0, &a, true, &b, true, 0.0, &mut c);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn im2col_col2im_are_adjoint() {
        // <im2col(x), y> == <x, col2im(y)> for random x, y.
        let g = ConvGeom {
            batch: 2,
            in_channels: 3,
            in_h: 5,
            in_w: 4,
            out_channels: 1,
            kernel: 3,
            stride: 2,
            padding: 1,
            out_h: (5 + 2 - 3) / 2 + 1,
            out_w: (4 + 2 - 3) / 2 + 1,
        };
        let n_in = g.batch * g.in_channels * g.in_h * g.in_w;
        let n_cols = g.patch_len() * g.out_positions();
        let x: Vec<f32> = (0..n_in).map(|i| ((i * 37 + 11) % 101) as f32 / 17.0).collect();
        let y: Vec<f32> = (0..n_cols).map(|i| ((i * 53 + 7) % 97) as f32 / 13.0).collect();
        let mut cols = vec![0.0; n_cols];
        im2col(&x, &g, &mut cols);
        let mut back = vec![0.0; n_in];
        col2im(&y, &g, &mut back);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| (*a as f64) * (*b as f64)).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| (*a as f64) * (*b as f64)).sum();
        assert!((lhs - rhs).abs() < 1e-6 * lhs.abs().max(1.0));
    }
}
