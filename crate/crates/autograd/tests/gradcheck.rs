//! Finite-difference verification of every op's backward, in f64 with
//! h = 1e-5 and relative tolerance 1e-5. Random shapes stay small
//! (<= 64 elements per input) so central differences are well conditioned.

use autograd::{finite_diff_check, Array, Graph, Parameter, Result, ScanMode, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-5;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn randn(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Array<f64> {
    Array::from_fn(shape, || {
        // Box-Muller
        let u1: f64 = rng.gen_range(1e-9..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos() * scale
    })
}

fn param(rng: &mut ChaCha8Rng, name: &str, shape: &[usize], scale: f64) -> Parameter<f64> {
    Parameter::new(name, randn(rng, shape, scale))
}

fn check(params: &[Parameter<f64>], f: impl FnMut(&mut Graph<f64>) -> Result<Var>) {
    let report = finite_diff_check(params, H, f).unwrap();
    assert!(
        report.max_rel_err < TOL,
        "gradcheck failed: {:?}",
        report
    );
}

#[test]
fn add_sub_mul() {
    let mut r = rng(1);
    let a = param(&mut r, "a", &[3, 4], 1.0);
    let b = param(&mut r, "b", &[3, 4], 1.0);
    check(&[a.clone(), b.clone()], |g| {
        let x = g.param(&a);
        let y = g.param(&b);
        let s = g.add(x, y)?;
        let d = g.sub(s, y)?;
        let m = g.mul(d, s)?;
        Ok(g.sum_all(m))
    });
}

#[test]
fn scalar_ops_and_neg() {
    let mut r = rng(2);
    let a = param(&mut r, "a", &[7], 1.0);
    check(&[a.clone()], |g| {
        let x = g.param(&a);
        let y = g.mul_scalar(x, 2.5);
        let z = g.add_scalar(y, -0.7);
        let n = g.neg(z);
        Ok(g.sum_all(n))
    });
}

#[test]
fn activations() {
    let mut r = rng(3);
    let a = param(&mut r, "a", &[2, 5], 0.8);
    check(&[a.clone()], |g| {
        let x = g.param(&a);
        let e = g.exp(x);
        let sp = g.softplus(e);
        let si = g.sigmoid(sp);
        let sl = g.silu(si);
        let lg = g.log(g.add_scalar(sl, 1.5));
        Ok(g.sum_all(lg))
    });
}

#[test]
fn matmul_2d_and_batched() {
    let mut r = rng(4);
    let a = param(&mut r, "a", &[3, 4], 0.7);
    let b = param(&mut r, "b", &[4, 2], 0.7);
    check(&[a.clone(), b.clone()], |g| {
        let x = g.param(&a);
        let y = g.param(&b);
        let m = g.matmul(x, y)?;
        Ok(g.sum_all(m))
    });

    let ab = param(&mut r, "ab", &[2, 3, 2], 0.7);
    let bb = param(&mut r, "bb", &[2, 2, 2], 0.7);
    check(&[ab.clone(), bb.clone()], |g| {
        let x = g.param(&ab);
        let y = g.param(&bb);
        let m = g.matmul(x, y)?;
        let sq = g.mul(m, m)?;
        Ok(g.sum_all(sq))
    });
}

#[test]
fn conv2d_strided_padded() {
    let mut r = rng(5);
    let x = param(&mut r, "x", &[2, 5, 5], 0.6);
    let k = param(&mut r, "k", &[3, 2, 3, 3], 0.4);
    check(&[x.clone(), k.clone()], |g| {
        let xi = g.param(&x);
        let ki = g.param(&k);
        let y = g.conv2d(xi, ki, 2, 1)?;
        let sq = g.mul(y, y)?;
        Ok(g.sum_all(sq))
    });
}

/// A 1x1 convolution is algebraically a matmul on the channel axis;
/// forward and backward must agree with the matmul route.
#[test]
fn conv_1x1_equals_matmul() {
    let mut r = rng(6);
    let xa = randn(&mut r, &[3, 4], 0.8); // (L=3 positions, C=4 channels)
    let ka = randn(&mut r, &[2, 4], 0.5); // (Cout=2, Cin=4)

    // conv route: (L, Cin) with kernel (Cout, Cin, 1), groups=1
    let xp = Parameter::new("x", xa.clone());
    let kp = Parameter::new(
        "k",
        Array::from_vec(vec![2, 4, 1], ka.data().to_vec()).unwrap(),
    );
    let mut g = Graph::<f64>::new();
    let xi = g.param(&xp);
    let ki = g.param(&kp);
    let y = g.conv1d_grouped(xi, ki, 1).unwrap();
    let sq = g.mul(y, y).unwrap();
    let loss = g.sum_all(sq);
    let conv_loss = g.value(loss).item();
    g.backward(loss).unwrap();
    let conv_gx = xp.grad();
    let conv_gk = kp.grad();

    // matmul route: x (L, Cin) times k^T (Cin, Cout)
    let xq = Parameter::new("x", xa);
    let mut kt = Array::zeros(&[4, 2]);
    for o in 0..2 {
        for i in 0..4 {
            kt.data_mut()[i * 2 + o] = ka.data()[o * 4 + i];
        }
    }
    let kq = Parameter::new("kt", kt);
    let mut g2 = Graph::<f64>::new();
    let xi = g2.param(&xq);
    let ki = g2.param(&kq);
    let y = g2.matmul(xi, ki).unwrap();
    let sq = g2.mul(y, y).unwrap();
    let loss = g2.sum_all(sq);
    let mm_loss = g2.value(loss).item();
    g2.backward(loss).unwrap();

    assert!((conv_loss - mm_loss).abs() < 1e-12);
    for (a, b) in conv_gx.data().iter().zip(xq.grad().data()) {
        assert!((a - b).abs() < 1e-12);
    }
    // conv_gk is (Cout, Cin, 1); matmul grad is (Cin, Cout)
    let mm_gk = kq.grad();
    for o in 0..2 {
        for i in 0..4 {
            let a = conv_gk.data()[o * 4 + i];
            let b = mm_gk.data()[i * 2 + o];
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn conv3d_patch_projection() {
    let mut r = rng(7);
    let x = param(&mut r, "x", &[2, 2, 4, 4], 0.6);
    let k = param(&mut r, "k", &[3, 2, 1, 2, 2], 0.5);
    check(&[x.clone(), k.clone()], |g| {
        let xi = g.param(&x);
        let ki = g.param(&k);
        let y = g.conv3d(xi, ki, [1, 2, 2], [0, 0, 0])?;
        let sq = g.mul(y, y)?;
        Ok(g.sum_all(sq))
    });
}

#[test]
fn depthwise_causal_conv() {
    let mut r = rng(8);
    let x = param(&mut r, "x", &[6, 3], 0.8);
    let k = param(&mut r, "k", &[3, 4], 0.5);
    check(&[x.clone(), k.clone()], |g| {
        let xi = g.param(&x);
        let ki = g.param(&k);
        let y = g.conv1d_depthwise_causal(xi, ki)?;
        let sq = g.mul(y, y)?;
        Ok(g.sum_all(sq))
    });
}

#[test]
fn grouped_conv() {
    let mut r = rng(9);
    let x = param(&mut r, "x", &[5, 4], 0.8);
    let k = param(&mut r, "k", &[4, 2, 3], 0.5);
    check(&[x.clone(), k.clone()], |g| {
        let xi = g.param(&x);
        let ki = g.param(&k);
        let y = g.conv1d_grouped(xi, ki, 2)?;
        let sq = g.mul(y, y)?;
        Ok(g.sum_all(sq))
    });
}

#[test]
fn softmax_layernorm() {
    let mut r = rng(10);
    let x = param(&mut r, "x", &[3, 5], 1.0);
    let gamma = param(&mut r, "gamma", &[5], 0.5);
    let beta = param(&mut r, "beta", &[5], 0.5);
    check(&[x.clone(), gamma.clone(), beta.clone()], |g| {
        let xi = g.param(&x);
        let gi = g.param(&gamma);
        let bi = g.param(&beta);
        let ln = g.layer_norm(xi, gi, bi, 1e-5)?;
        let sm = g.softmax_last(ln)?;
        let sq = g.mul(sm, sm)?;
        Ok(g.sum_all(sq))
    });
}

#[test]
fn reductions_and_broadcasts() {
    let mut r = rng(11);
    let x = param(&mut r, "x", &[4, 3], 0.9);
    let f = param(&mut r, "f", &[3], 0.9);
    let b = param(&mut r, "b", &[4], 0.9);
    check(&[x.clone(), f.clone(), b.clone()], |g| {
        let xi = g.param(&x);
        let fi = g.param(&f);
        let bi = g.param(&b);
        let scaled = g.mul_axis(xi, fi, 1)?;
        let shifted = g.add_axis(scaled, bi, 0)?;
        let m = g.mean_axis0(shifted)?;
        let mm = g.mean_all(m);
        let s = g.segment_mean(g.reshape(shifted, &[12])?, &[0..5, 5..5, 5..12])?;
        let ss = g.sum_all(s);
        g.add(mm, ss)
    });
}

#[test]
fn shape_movement() {
    let mut r = rng(12);
    let x = param(&mut r, "x", &[2, 3, 4], 0.9);
    check(&[x.clone()], |g| {
        let xi = g.param(&x);
        let p = g.permute(xi, &[2, 0, 1])?;
        let rs = g.reshape(p, &[4, 6])?;
        let nr = g.narrow(rs, 1, 1, 3)?;
        let sel = g.select_rows(nr, &[3, 0, 0, 2])?;
        let t = g.tile_rows(sel, 2)?;
        let rr = g.repeat_each_row(t, 2)?;
        let st = g.stack(&[rr, rr])?;
        let sq = g.mul(st, st)?;
        Ok(g.sum_all(sq))
    });
}

#[test]
fn l2_normalize_and_losses() {
    let mut r = rng(13);
    let x = param(&mut r, "x", &[6], 1.0);
    check(&[x.clone()], |g| {
        let xi = g.param(&x);
        let n = g.l2_normalize(xi)?;
        let lse = g.logsumexp(n)?;
        let p = g.pick(n, 2)?;
        g.sub(lse, p)
    });
}

#[test]
fn spike_surrogate_against_smooth_primitive() {
    let mut r = rng(14);
    let x = param(&mut r, "x", &[12], 0.9);
    check(&[x.clone()], |g| {
        let xi = g.param(&x);
        let s = g.spike_smooth(xi, 1.0, 1.0);
        let w = g.mul(s, s)?;
        Ok(g.sum_all(w))
    });
}

#[test]
fn ssm_scan_sequential_gradcheck() {
    let mut r = rng(15);
    let (l, e, n) = (6, 3, 2);
    let delta_raw = param(&mut r, "delta_raw", &[l, e], 0.6);
    let a_log = param(&mut r, "a_log", &[e, n], 0.4);
    let b = param(&mut r, "b", &[l, n], 0.7);
    let c = param(&mut r, "c", &[l, n], 0.7);
    let x = param(&mut r, "x", &[l, e], 0.7);
    let d = param(&mut r, "d", &[e], 0.7);
    let params = [
        delta_raw.clone(),
        a_log.clone(),
        b.clone(),
        c.clone(),
        x.clone(),
        d.clone(),
    ];
    for mode in [ScanMode::Sequential, ScanMode::Parallel] {
        check(&params, |g| {
            let dr = g.param(&delta_raw);
            let delta = g.softplus(dr);
            let al = g.param(&a_log);
            let a = g.neg(g.exp(al));
            let bi = g.param(&b);
            let ci = g.param(&c);
            let xi = g.param(&x);
            let di = g.param(&d);
            let y = g.ssm_scan(delta, a, bi, ci, xi, di, mode)?;
            let sq = g.mul(y, y)?;
            Ok(g.sum_all(sq))
        });
    }
}

/// Gradient of a*f + b*g equals a*grad(f) + b*grad(g).
#[test]
fn gradient_linearity() {
    let mut r = rng(16);
    let w = param(&mut r, "w", &[5], 1.0);
    let (a, b) = (1.7, -0.6);

    let grad_of = |scale_f: f64, scale_g: f64, w: &Parameter<f64>| -> Vec<f64> {
        w.zero_grad();
        let mut g = Graph::<f64>::new();
        let wi = g.param(w);
        let f = {
            let sq = g.mul(wi, wi).unwrap();
            g.sum_all(sq)
        };
        let gg = {
            let e = g.exp(wi);
            g.sum_all(e)
        };
        let sf = g.mul_scalar(f, scale_f);
        let sg = g.mul_scalar(gg, scale_g);
        let loss = g.add(sf, sg).unwrap();
        g.backward(loss).unwrap();
        w.grad().data().to_vec()
    };

    let gf = grad_of(1.0, 0.0, &w);
    let gg = grad_of(0.0, 1.0, &w);
    let combined = grad_of(a, b, &w);
    for i in 0..5 {
        let expect = a * gf[i] + b * gg[i];
        assert!((combined[i] - expect).abs() < 1e-10);
    }
}

/// Unreachable parameters keep zero gradients.
#[test]
fn unreachable_parameter_gets_zero_grad() {
    let used = Parameter::new("used", Array::scalar(2.0f64));
    let unused = Parameter::new("unused", Array::scalar(5.0f64));
    let mut g = Graph::<f64>::new();
    let u = g.param(&used);
    let _ = g.param(&unused);
    let loss = g.mul(u, u).unwrap();
    let loss = g.sum_all(loss);
    g.backward(loss).unwrap();
    assert_eq!(used.grad().item(), 4.0);
    assert_eq!(unused.grad().item(), 0.0);
}

/// Two identical forward passes are bit-identical.
#[test]
fn forward_determinism() {
    let mut r = rng(17);
    let x = param(&mut r, "x", &[4, 4], 1.0);
    let run = || {
        let mut g = Graph::<f64>::new();
        let xi = g.param(&x);
        let y = g.matmul(xi, xi).unwrap();
        let sm = g.softmax_last(y).unwrap();
        g.value(g.l2_normalize(sm).unwrap()).data().to_vec()
    };
    let a = run();
    let b = run();
    assert_eq!(a, b);
}
