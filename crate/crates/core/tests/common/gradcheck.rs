//! Finite-difference gradient checks shared by the op-level tests and the
//! acceptance suite. Each check asserts internally and panics on failure.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stereoscore::model::MultiScoreNet;
use stereoscore::tensor::{self, Tensor};

use super::*;

pub const FD_H: f64 = 1e-3;
pub const REL_TOL: f64 = 1e-2;
pub const REL_FLOOR: f64 = 1e-3;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, lo: f32, hi: f32) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

fn tracked(shape: &[usize], data: &[f32]) -> Tensor {
    let t = Tensor::from_vec(shape, data.to_vec()).unwrap();
    t.set_requires_grad(true);
    t
}

/// Random-sign targets a fixed distance from the reference output turn the
/// L1 loss into a random projection of the op's output, so the finite
/// difference probes every gradient path and never sits near a kink.
fn projection_target(rng: &mut ChaCha8Rng, out_ref: &Arr) -> Arr {
    let data = out_ref
        .data
        .iter()
        .map(|&v| v + if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    Arr::new(&out_ref.shape, data)
}

fn as_f32(a: &Arr) -> Vec<f32> {
    a.data.iter().map(|&v| v as f32).collect()
}

fn assert_grad_close(what: &str, analytic: &[f32], fd: &[f64]) {
    let err = max_rel_err(analytic, fd, REL_FLOOR);
    assert!(
        err < REL_TOL,
        "{what}: max relative gradient error {err:.3e} exceeds {REL_TOL:.0e}"
    );
}

pub fn check_conv2d_values_against_naive() {
    let mut r = rng(11);
    for (shape, w_shape, stride, pad) in [
        (vec![2, 4, 16, 16], vec![3, 4, 3, 3], 1usize, 1usize),
        (vec![1, 2, 9, 7], vec![4, 2, 3, 3], 2, 0),
        (vec![2, 3, 8, 8], vec![2, 3, 5, 5], 1, 2),
        (vec![1, 1, 4, 4], vec![1, 1, 1, 1], 1, 0),
    ] {
        let x = random_vec(&mut r, shape.iter().product(), -1.0, 1.0);
        let w = random_vec(&mut r, w_shape.iter().product(), -1.0, 1.0);
        let b = random_vec(&mut r, w_shape[0], -1.0, 1.0);
        let out = tensor::conv2d(
            &Tensor::from_vec(&shape, x.clone()).unwrap(),
            &Tensor::from_vec(&w_shape, w.clone()).unwrap(),
            &Tensor::from_vec(&[w_shape[0]], b.clone()).unwrap(),
            stride,
            pad,
        )
        .unwrap();
        let out_ref = conv2d_ref(
            &Arr::from_f32(&shape, &x),
            &Arr::from_f32(&w_shape, &w),
            &Arr::from_f32(&[w_shape[0]], &b),
            stride,
            pad,
        );
        assert_eq!(out.shape(), out_ref.shape);
        let diff = max_abs_diff(&out.to_vec(), &out_ref.data);
        assert!(diff < 1e-4, "conv value mismatch {diff:.3e} at {shape:?}");
    }
}

pub fn check_conv2d_gradients() {
    let mut r = rng(21);
    let (x_shape, w_shape) = (vec![2usize, 3, 8, 8], vec![4usize, 3, 3, 3]);
    let x = random_vec(&mut r, x_shape.iter().product(), -1.0, 1.0);
    let w = random_vec(&mut r, w_shape.iter().product(), -1.0, 1.0);
    let b = random_vec(&mut r, 4, -1.0, 1.0);

    let xa = Arr::from_f32(&x_shape, &x);
    let wa = Arr::from_f32(&w_shape, &w);
    let ba = Arr::from_f32(&[4], &b);
    let out_ref = conv2d_ref(&xa, &wa, &ba, 1, 1);
    let target = projection_target(&mut r, &out_ref);

    let xt = tracked(&x_shape, &x);
    let wt = tracked(&w_shape, &w);
    let bt = tracked(&[4], &b);
    let tt = Tensor::from_vec(&target.shape, as_f32(&target)).unwrap();
    let out = tensor::conv2d(&xt, &wt, &bt, 1, 1).unwrap();
    let loss = tensor::l1_loss(&out, &tt).unwrap();
    tensor::backward(&loss).unwrap();

    let fd_x = fd_grad(
        |v| l1_ref(&conv2d_ref(&Arr::new(&x_shape, v.to_vec()), &wa, &ba, 1, 1), &target),
        &xa.data,
        FD_H,
    );
    assert_grad_close("conv2d d/dinput", &xt.grad().unwrap(), &fd_x);

    let fd_w = fd_grad(
        |v| l1_ref(&conv2d_ref(&xa, &Arr::new(&w_shape, v.to_vec()), &ba, 1, 1), &target),
        &wa.data,
        FD_H,
    );
    assert_grad_close("conv2d d/dweights", &wt.grad().unwrap(), &fd_w);

    let fd_b = fd_grad(
        |v| l1_ref(&conv2d_ref(&xa, &wa, &Arr::new(&[4], v.to_vec()), 1, 1), &target),
        &ba.data,
        FD_H,
    );
    assert_grad_close("conv2d d/dbias", &bt.grad().unwrap(), &fd_b);
}

pub fn check_strided_conv2d_gradients() {
    let mut r = rng(22);
    let (x_shape, w_shape) = (vec![1usize, 2, 8, 8], vec![3usize, 2, 3, 3]);
    let x = random_vec(&mut r, x_shape.iter().product(), -1.0, 1.0);
    let w = random_vec(&mut r, w_shape.iter().product(), -1.0, 1.0);
    let b = random_vec(&mut r, 3, -1.0, 1.0);

    let xa = Arr::from_f32(&x_shape, &x);
    let wa = Arr::from_f32(&w_shape, &w);
    let ba = Arr::from_f32(&[3], &b);
    let out_ref = conv2d_ref(&xa, &wa, &ba, 2, 1);
    let target = projection_target(&mut r, &out_ref);

    let xt = tracked(&x_shape, &x);
    let wt = tracked(&w_shape, &w);
    let bt = tracked(&[3], &b);
    let tt = Tensor::from_vec(&target.shape, as_f32(&target)).unwrap();
    let out = tensor::conv2d(&xt, &wt, &bt, 2, 1).unwrap();
    let loss = tensor::l1_loss(&out, &tt).unwrap();
    tensor::backward(&loss).unwrap();

    let fd_w = fd_grad(
        |v| l1_ref(&conv2d_ref(&xa, &Arr::new(&w_shape, v.to_vec()), &ba, 2, 1), &target),
        &wa.data,
        FD_H,
    );
    assert_grad_close("strided conv2d d/dweights", &wt.grad().unwrap(), &fd_w);

    let fd_x = fd_grad(
        |v| l1_ref(&conv2d_ref(&Arr::new(&x_shape, v.to_vec()), &wa, &ba, 2, 1), &target),
        &xa.data,
        FD_H,
    );
    assert_grad_close("strided conv2d d/dinput", &xt.grad().unwrap(), &fd_x);
}

pub fn check_maxpool_gradients() {
    // Keep every window's top-two values separated so the FD step cannot
    // flip the argmax.
    let x_shape = vec![1usize, 2, 8, 8];
    let n: usize = x_shape.iter().product();
    let mut r = rng(31);
    let x: Vec<f32> = loop {
        let cand = random_vec(&mut r, n, -1.0, 1.0);
        let mut ok = true;
        'windows: for c in 0..2 {
            for i in 0..4 {
                for j in 0..4 {
                    let mut vals: Vec<f32> = (0..4)
                        .map(|t| cand[c * 64 + (2 * i + t / 2) * 8 + 2 * j + t % 2])
                        .collect();
                    vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
                    if vals[0] - vals[1] < 0.01 {
                        ok = false;
                        break 'windows;
                    }
                }
            }
        }
        if ok {
            break cand;
        }
    };

    let xa = Arr::from_f32(&x_shape, &x);
    let out_ref = maxpool2d_ref(&xa);
    let target = projection_target(&mut r, &out_ref);

    let xt = tracked(&x_shape, &x);
    let tt = Tensor::from_vec(&target.shape, as_f32(&target)).unwrap();
    let out = tensor::maxpool2d(&xt).unwrap();
    let loss = tensor::l1_loss(&out, &tt).unwrap();
    tensor::backward(&loss).unwrap();

    let fd = fd_grad(
        |v| l1_ref(&maxpool2d_ref(&Arr::new(&x_shape, v.to_vec())), &target),
        &xa.data,
        FD_H,
    );
    assert_grad_close("maxpool2d d/dinput", &xt.grad().unwrap(), &fd);
}

pub fn check_fully_connected_gradients() {
    let mut r = rng(41);
    let x = random_vec(&mut r, 40, -1.0, 1.0);
    let w = random_vec(&mut r, 30, -1.0, 1.0);
    let b = random_vec(&mut r, 3, -1.0, 1.0);

    let xa = Arr::from_f32(&[4, 10], &x);
    let wa = Arr::from_f32(&[3, 10], &w);
    let ba = Arr::from_f32(&[3], &b);
    let out_ref = fully_connected_ref(&xa, &wa, &ba);
    let target = projection_target(&mut r, &out_ref);

    let xt = tracked(&[4, 10], &x);
    let wt = tracked(&[3, 10], &w);
    let bt = tracked(&[3], &b);
    let tt = Tensor::from_vec(&target.shape, as_f32(&target)).unwrap();
    let out = tensor::fully_connected(&xt, &wt, &bt).unwrap();
    let loss = tensor::l1_loss(&out, &tt).unwrap();
    tensor::backward(&loss).unwrap();

    let fd_x = fd_grad(
        |v| l1_ref(&fully_connected_ref(&Arr::new(&[4, 10], v.to_vec()), &wa, &ba), &target),
        &xa.data,
        FD_H,
    );
    assert_grad_close("fc d/dinput", &xt.grad().unwrap(), &fd_x);

    let fd_w = fd_grad(
        |v| l1_ref(&fully_connected_ref(&xa, &Arr::new(&[3, 10], v.to_vec()), &ba), &target),
        &wa.data,
        FD_H,
    );
    assert_grad_close("fc d/dweights", &wt.grad().unwrap(), &fd_w);

    let fd_b = fd_grad(
        |v| l1_ref(&fully_connected_ref(&xa, &wa, &Arr::new(&[3], v.to_vec())), &target),
        &ba.data,
        FD_H,
    );
    assert_grad_close("fc d/dbias", &bt.grad().unwrap(), &fd_b);
}

pub fn check_relu_gradients() {
    let mut r = rng(51);
    // |x| > 1e-2 keeps the kink out of FD reach.
    let x: Vec<f32> = (0..64)
        .map(|_| {
            let mag = r.gen_range(0.05f32..1.0);
            if r.gen_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect();
    let shape = vec![4usize, 16];
    let xa = Arr::from_f32(&shape, &x);
    let out_ref = relu_ref(&xa);
    let target = projection_target(&mut r, &out_ref);

    let xt = tracked(&shape, &x);
    let tt = Tensor::from_vec(&target.shape, as_f32(&target)).unwrap();
    let out = tensor::relu(&xt).unwrap();
    let loss = tensor::l1_loss(&out, &tt).unwrap();
    tensor::backward(&loss).unwrap();

    let fd = fd_grad(
        |v| l1_ref(&relu_ref(&Arr::new(&shape, v.to_vec())), &target),
        &xa.data,
        FD_H,
    );
    assert_grad_close("relu d/dinput", &xt.grad().unwrap(), &fd);
}

pub fn check_flatten_gradients() {
    let mut r = rng(61);
    let shape = vec![2usize, 3, 4, 4];
    let x = random_vec(&mut r, 96, -1.0, 1.0);
    let xa = Arr::from_f32(&shape, &x);
    let out_ref = flatten_ref(&xa);
    let target = projection_target(&mut r, &out_ref);

    let xt = tracked(&shape, &x);
    let tt = Tensor::from_vec(&target.shape, as_f32(&target)).unwrap();
    let out = tensor::flatten(&xt).unwrap();
    let loss = tensor::l1_loss(&out, &tt).unwrap();
    tensor::backward(&loss).unwrap();

    let fd = fd_grad(
        |v| l1_ref(&flatten_ref(&Arr::new(&shape, v.to_vec())), &target),
        &xa.data,
        FD_H,
    );
    assert_grad_close("flatten d/dinput", &xt.grad().unwrap(), &fd);
}

pub fn check_concat_gradients() {
    let mut r = rng(71);
    let a = random_vec(&mut r, 2 * 5, -1.0, 1.0);
    let b = random_vec(&mut r, 2 * 3, -1.0, 1.0);
    let aa = Arr::from_f32(&[2, 5], &a);
    let ba = Arr::from_f32(&[2, 3], &b);
    let out_ref = concat_ref(&[&aa, &ba], 1);
    let target = projection_target(&mut r, &out_ref);

    let at = tracked(&[2, 5], &a);
    let bt = tracked(&[2, 3], &b);
    let tt = Tensor::from_vec(&target.shape, as_f32(&target)).unwrap();
    let out = tensor::concat(&[at.clone(), bt.clone()], 1).unwrap();
    let loss = tensor::l1_loss(&out, &tt).unwrap();
    tensor::backward(&loss).unwrap();

    let fd_a = fd_grad(
        |v| l1_ref(&concat_ref(&[&Arr::new(&[2, 5], v.to_vec()), &ba], 1), &target),
        &aa.data,
        FD_H,
    );
    assert_grad_close("concat d/dfirst", &at.grad().unwrap(), &fd_a);

    let fd_b = fd_grad(
        |v| l1_ref(&concat_ref(&[&aa, &Arr::new(&[2, 3], v.to_vec())], 1), &target),
        &ba.data,
        FD_H,
    );
    assert_grad_close("concat d/dsecond", &bt.grad().unwrap(), &fd_b);
}

pub fn check_l1_gradients() {
    let mut r = rng(91);
    let p = random_vec(&mut r, 6, -2.0, 2.0);
    let t = random_vec(&mut r, 6, -2.0, 2.0);
    let pa = Arr::from_f32(&[6, 1], &p);
    let ta = Arr::from_f32(&[6, 1], &t);

    let pt = tracked(&[6, 1], &p);
    let tt = Tensor::from_vec(&[6, 1], t.clone()).unwrap();
    let loss = tensor::l1_loss(&pt, &tt).unwrap();
    tensor::backward(&loss).unwrap();

    let fd = fd_grad(|v| l1_ref(&Arr::new(&[6, 1], v.to_vec()), &ta), &pa.data, FD_H);
    assert_grad_close("l1 d/dpred", &pt.grad().unwrap(), &fd);
}

/// Gradient of the full four-term composite loss through the real network,
/// checked for sampled parameters in all four score heads plus a fused-head
/// and a first-layer weight, against finite differences of the f64
/// reference network.
pub fn check_composite_loss_gradients() {
    let mut r = rng(123);
    let net = MultiScoreNet::build(77);
    let n_px = 3 * 32 * 32;
    let left_px = random_vec(&mut r, n_px, 0.0, 255.0);
    let right_px = random_vec(&mut r, n_px, 0.0, 255.0);
    let left = Tensor::from_vec(&[1, 3, 32, 32], left_px.clone()).unwrap();
    let right = Tensor::from_vec(&[1, 3, 32, 32], right_px.clone()).unwrap();
    // Keep every target well away from the scores' init point so neither
    // the FD probe nor the analytic sign sits on an L1 kink.
    let (ml, mr, ms) = (81.0f32, 37.0f32, 64.0f32);

    let out = net.forward(&left, &right).unwrap();
    let target = |v: f32| Tensor::from_vec(&[1, 1], vec![v]).unwrap();
    let loss = {
        let lg = tensor::scale(&tensor::l1_loss(&out.q_global, &target(ms)).unwrap(), 2.0).unwrap();
        let ls = tensor::l1_loss(&out.q_stereo, &target(ms)).unwrap();
        let ll = tensor::l1_loss(&out.q_left, &target(ml)).unwrap();
        let lr = tensor::l1_loss(&out.q_right, &target(mr)).unwrap();
        tensor::add(&tensor::add(&lg, &ls).unwrap(), &tensor::add(&ll, &lr).unwrap()).unwrap()
    };
    tensor::backward(&loss).unwrap();

    let mut refnet = RefNet::from_entries(&net.export_parameters());
    let la = Arr::from_f32(&[1, 3, 32, 32], &left_px);
    let ra = Arr::from_f32(&[1, 3, 32, 32], &right_px);
    let mla = Arr::new(&[1, 1], vec![ml as f64]);
    let mra = Arr::new(&[1, 1], vec![mr as f64]);
    let msa = Arr::new(&[1, 1], vec![ms as f64]);

    // Value agreement between the f32 engine and the f64 reference.
    let [ql, qr, qs, qg] = refnet.forward(&la, &ra);
    for (engine, reference) in [
        (out.q_left.item().unwrap(), ql.data[0]),
        (out.q_right.item().unwrap(), qr.data[0]),
        (out.q_stereo.item().unwrap(), qs.data[0]),
        (out.q_global.item().unwrap(), qg.data[0]),
    ] {
        let rel = (engine as f64 - reference).abs() / reference.abs().max(1e-3);
        assert!(rel < 1e-3, "forward value disagreement: {engine} vs {reference}");
    }

    let ref_loss = refnet.composite_loss(&la, &ra, &mla, &mra, &msa);
    let engine_loss = loss.item().unwrap() as f64;
    assert!(
        (engine_loss - ref_loss).abs() / ref_loss.abs().max(1.0) < 1e-3,
        "loss disagreement: {engine_loss} vs {ref_loss}"
    );

    // Piecewise-linear net: small h, f64 arithmetic.
    let h = 1e-5;
    let samples: &[(&str, &[usize])] = &[
        ("left/score/weight", &[0, 257]),
        ("right/score/weight", &[3, 511]),
        ("stereo/score/weight", &[17, 400]),
        ("global/LBconct/fc2/weight", &[0, 300]),
        ("global/LBconct/fc1/weight", &[1536 * 7 + 42]),
        ("left/LBconv1/conv/weight", &[13]),
        ("left/score/bias", &[0]),
        ("global/LBconct/fc2/bias", &[0]),
    ];
    for (name, indices) in samples {
        let analytic_full = net
            .parameters()
            .into_iter()
            .find(|p| p.name() == *name)
            .unwrap()
            .tensor
            .grad()
            .unwrap();
        for &idx in *indices {
            let base = refnet.param_value(name, idx);
            refnet.set_param_value(name, idx, base + h);
            let up = refnet.composite_loss(&la, &ra, &mla, &mra, &msa);
            refnet.set_param_value(name, idx, base - h);
            let down = refnet.composite_loss(&la, &ra, &mla, &mra, &msa);
            refnet.set_param_value(name, idx, base);
            let fd = (up - down) / (2.0 * h);
            let analytic = analytic_full[idx] as f64;
            let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(REL_FLOOR);
            assert!(
                rel < REL_TOL,
                "composite grad mismatch at {name}[{idx}]: analytic {analytic:.6e} vs fd {fd:.6e}"
            );
        }
    }
}
