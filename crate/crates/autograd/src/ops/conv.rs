//! Convolutions: strided 2D/3D, depthwise causal 1D, grouped 1D.

use super::{require, shape_err};
use crate::{Array, Graph, Result, Scalar, Var};

impl<T: Scalar> Graph<T> {
    /// 2D convolution. `x: (Cin, H, W)`, `kernel: (Cout, Cin, KH, KW)`,
    /// zero padding `pad` on both spatial sides.
    pub fn conv2d(&mut self, x: Var, kernel: Var, stride: usize, pad: usize) -> Result<Var> {
        let vx = self.rc_value(x);
        let vk = self.rc_value(kernel);
        let (cin, h, w) = match vx.shape() {
            [c, h, w] => (*c, *h, *w),
            _ => return Err(shape_err("conv2d input", vx.shape(), &[])),
        };
        let (cout, kc, kh, kw) = match vk.shape() {
            [o, c, a, b] => (*o, *c, *a, *b),
            _ => return Err(shape_err("conv2d kernel", vk.shape(), &[])),
        };
        if kc != cin {
            return Err(shape_err("conv2d", vx.shape(), vk.shape()));
        }
        require(h + 2 * pad >= kh && w + 2 * pad >= kw, || {
            format!("conv2d: kernel {kh}x{kw} larger than padded input {h}x{w} (pad {pad})")
        })?;
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;

        let mut out = Array::zeros(&[cout, oh, ow]);
        {
            let xd = vx.data();
            let kd = vk.data();
            let od = out.data_mut();
            for co in 0..cout {
                for ci in 0..cin {
                    for ki in 0..kh {
                        for kj in 0..kw {
                            let kv = kd[((co * cin + ci) * kh + ki) * kw + kj];
                            if kv == T::zero() {
                                continue;
                            }
                            for oi in 0..oh {
                                let ih = (oi * stride + ki).wrapping_sub(pad);
                                if ih >= h {
                                    continue;
                                }
                                for oj in 0..ow {
                                    let iw = (oj * stride + kj).wrapping_sub(pad);
                                    if iw >= w {
                                        continue;
                                    }
                                    od[(co * oh + oi) * ow + oj] +=
                                        kv * xd[(ci * h + ih) * w + iw];
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(self.push_op(out, &[x, kernel], move |g, store| {
            let gd = g.data();
            store.add_with(x.0, vx.shape(), |gx| {
                let kd = vk.data();
                for co in 0..cout {
                    for ci in 0..cin {
                        for ki in 0..kh {
                            for kj in 0..kw {
                                let kv = kd[((co * cin + ci) * kh + ki) * kw + kj];
                                if kv == T::zero() {
                                    continue;
                                }
                                for oi in 0..oh {
                                    let ih = (oi * stride + ki).wrapping_sub(pad);
                                    if ih >= h {
                                        continue;
                                    }
                                    for oj in 0..ow {
                                        let iw = (oj * stride + kj).wrapping_sub(pad);
                                        if iw >= w {
                                            continue;
                                        }
                                        gx[(ci * h + ih) * w + iw] +=
                                            kv * gd[(co * oh + oi) * ow + oj];
                                    }
                                }
                            }
                        }
                    }
                }
            });
            store.add_with(kernel.0, vk.shape(), |gk| {
                let xd = vx.data();
                for co in 0..cout {
                    for ci in 0..cin {
                        for ki in 0..kh {
                            for kj in 0..kw {
                                let mut acc = T::zero();
                                for oi in 0..oh {
                                    let ih = (oi * stride + ki).wrapping_sub(pad);
                                    if ih >= h {
                                        continue;
                                    }
                                    for oj in 0..ow {
                                        let iw = (oj * stride + kj).wrapping_sub(pad);
                                        if iw >= w {
                                            continue;
                                        }
                                        acc += gd[(co * oh + oi) * ow + oj]
                                            * xd[(ci * h + ih) * w + iw];
                                    }
                                }
                                gk[((co * cin + ci) * kh + ki) * kw + kj] += acc;
                            }
                        }
                    }
                }
            });
        }))
    }

    /// 3D convolution. `x: (Cin, D0, D1, D2)`, `kernel: (Cout, Cin, K0, K1, K2)`,
    /// per-axis strides, zero padding `pad` on every axis.
    pub fn conv3d(
        &mut self,
        x: Var,
        kernel: Var,
        stride: [usize; 3],
        pad: [usize; 3],
    ) -> Result<Var> {
        let vx = self.rc_value(x);
        let vk = self.rc_value(kernel);
        let (cin, d): (usize, [usize; 3]) = match vx.shape() {
            [c, a, b, e] => (*c, [*a, *b, *e]),
            _ => return Err(shape_err("conv3d input", vx.shape(), &[])),
        };
        let (cout, kc, k): (usize, usize, [usize; 3]) = match vk.shape() {
            [o, c, a, b, e] => (*o, *c, [*a, *b, *e]),
            _ => return Err(shape_err("conv3d kernel", vk.shape(), &[])),
        };
        if kc != cin {
            return Err(shape_err("conv3d", vx.shape(), vk.shape()));
        }
        let mut od = [0usize; 3];
        for i in 0..3 {
            require(d[i] + 2 * pad[i] >= k[i], || {
                format!("conv3d: kernel {:?} larger than padded input {:?}", k, d)
            })?;
            od[i] = (d[i] + 2 * pad[i] - k[i]) / stride[i] + 1;
        }

        let in_at = move |ci: usize, p: [usize; 3]| ((ci * d[0] + p[0]) * d[1] + p[1]) * d[2] + p[2];
        let out_at =
            move |co: usize, p: [usize; 3]| ((co * od[0] + p[0]) * od[1] + p[1]) * od[2] + p[2];
        let k_at = move |co: usize, ci: usize, p: [usize; 3]| {
            (((co * cin + ci) * k[0] + p[0]) * k[1] + p[1]) * k[2] + p[2]
        };
        // Walks every (output position, tap) pair once; `f` gets flat
        // (input, output, kernel) indices. Shared by forward and backward.
        let for_each_tap = move |co: usize, ci: usize, f: &mut dyn FnMut(usize, usize, usize)| {
            for k0 in 0..k[0] {
                for k1 in 0..k[1] {
                    for k2 in 0..k[2] {
                        let kflat = k_at(co, ci, [k0, k1, k2]);
                        for o0 in 0..od[0] {
                            let i0 = (o0 * stride[0] + k0).wrapping_sub(pad[0]);
                            if i0 >= d[0] {
                                continue;
                            }
                            for o1 in 0..od[1] {
                                let i1 = (o1 * stride[1] + k1).wrapping_sub(pad[1]);
                                if i1 >= d[1] {
                                    continue;
                                }
                                for o2 in 0..od[2] {
                                    let i2 = (o2 * stride[2] + k2).wrapping_sub(pad[2]);
                                    if i2 >= d[2] {
                                        continue;
                                    }
                                    f(in_at(ci, [i0, i1, i2]), out_at(co, [o0, o1, o2]), kflat);
                                }
                            }
                        }
                    }
                }
            }
        };

        let mut out = Array::zeros(&[cout, od[0], od[1], od[2]]);
        {
            let xd = vx.data();
            let kd = vk.data();
            let o = out.data_mut();
            for co in 0..cout {
                for ci in 0..cin {
                    for_each_tap(co, ci, &mut |xi, oi, ki| {
                        o[oi] += xd[xi] * kd[ki];
                    });
                }
            }
        }
        Ok(self.push_op(out, &[x, kernel], move |g, store| {
            let gd = g.data();
            store.add_with(x.0, vx.shape(), |gx| {
                let kd = vk.data();
                for co in 0..cout {
                    for ci in 0..cin {
                        for_each_tap(co, ci, &mut |xi, oi, ki| {
                            gx[xi] += gd[oi] * kd[ki];
                        });
                    }
                }
            });
            store.add_with(kernel.0, vk.shape(), |gk| {
                let xd = vx.data();
                for co in 0..cout {
                    for ci in 0..cin {
                        for_each_tap(co, ci, &mut |xi, oi, ki| {
                            gk[ki] += gd[oi] * xd[xi];
                        });
                    }
                }
            });
        }))
    }

    /// Depthwise causal 1D convolution over a `(L, C)` sequence with a
    /// `(C, W)` kernel; position `t` sees inputs `t-W+1 ..= t` (zero padded).
    pub fn conv1d_depthwise_causal(&mut self, x: Var, kernel: Var) -> Result<Var> {
        let vx = self.rc_value(x);
        let vk = self.rc_value(kernel);
        let (l, c) = match vx.shape() {
            [l, c] => (*l, *c),
            _ => return Err(shape_err("conv1d_depthwise_causal input", vx.shape(), &[])),
        };
        let (kc, w) = match vk.shape() {
            [kc, w] => (*kc, *w),
            _ => return Err(shape_err("conv1d_depthwise_causal kernel", vk.shape(), &[])),
        };
        if kc != c {
            return Err(shape_err("conv1d_depthwise_causal", vx.shape(), vk.shape()));
        }

        let mut out = Array::zeros(&[l, c]);
        {
            let xd = vx.data();
            let kd = vk.data();
            let od = out.data_mut();
            for t in 0..l {
                for j in 0..w {
                    let ti = (t + j).wrapping_sub(w - 1);
                    if ti >= l {
                        continue;
                    }
                    for ch in 0..c {
                        od[t * c + ch] += xd[ti * c + ch] * kd[ch * w + j];
                    }
                }
            }
        }
        Ok(self.push_op(out, &[x, kernel], move |g, store| {
            let gd = g.data();
            store.add_with(x.0, vx.shape(), |gx| {
                let kd = vk.data();
                for t in 0..l {
                    for j in 0..w {
                        let ti = (t + j).wrapping_sub(w - 1);
                        if ti >= l {
                            continue;
                        }
                        for ch in 0..c {
                            gx[ti * c + ch] += gd[t * c + ch] * kd[ch * w + j];
                        }
                    }
                }
            });
            store.add_with(kernel.0, vk.shape(), |gk| {
                let xd = vx.data();
                for t in 0..l {
                    for j in 0..w {
                        let ti = (t + j).wrapping_sub(w - 1);
                        if ti >= l {
                            continue;
                        }
                        for ch in 0..c {
                            gk[ch * w + j] += gd[t * c + ch] * xd[ti * c + ch];
                        }
                    }
                }
            });
        }))
    }

    /// Grouped 1D convolution over a `(L, Cin)` sequence with a
    /// `(Cout, Cin/groups, KW)` kernel and symmetric zero padding `KW/2`
    /// (odd `KW` keeps the length). `groups = 1` is a full convolution;
    /// `KW = 1, groups = 1` is a pointwise (1x1) convolution.
    pub fn conv1d_grouped(&mut self, x: Var, kernel: Var, groups: usize) -> Result<Var> {
        let vx = self.rc_value(x);
        let vk = self.rc_value(kernel);
        let (l, cin) = match vx.shape() {
            [l, c] => (*l, *c),
            _ => return Err(shape_err("conv1d_grouped input", vx.shape(), &[])),
        };
        let (cout, cpg, kw) = match vk.shape() {
            [o, c, w] => (*o, *c, *w),
            _ => return Err(shape_err("conv1d_grouped kernel", vk.shape(), &[])),
        };
        require(
            groups >= 1 && cin % groups == 0 && cout % groups == 0 && cpg == cin / groups,
            || {
                format!(
                    "conv1d_grouped: {groups} groups incompatible with Cin {cin}, Cout {cout}, kernel {:?}",
                    vk.shape()
                )
            },
        )?;
        let pad = kw / 2;
        let in_per = cin / groups;
        let out_per = cout / groups;

        let mut out = Array::zeros(&[l, cout]);
        {
            let xd = vx.data();
            let kd = vk.data();
            let od = out.data_mut();
            for gi in 0..groups {
                for oc in 0..out_per {
                    let co = gi * out_per + oc;
                    for j in 0..kw {
                        for t in 0..l {
                            let ti = (t + j).wrapping_sub(pad);
                            if ti >= l {
                                continue;
                            }
                            let mut acc = T::zero();
                            for ic in 0..in_per {
                                acc += xd[ti * cin + gi * in_per + ic]
                                    * kd[(co * cpg + ic) * kw + j];
                            }
                            od[t * cout + co] += acc;
                        }
                    }
                }
            }
        }
        Ok(self.push_op(out, &[x, kernel], move |g, store| {
            let gd = g.data();
            store.add_with(x.0, vx.shape(), |gx| {
                let kd = vk.data();
                for gi in 0..groups {
                    for oc in 0..out_per {
                        let co = gi * out_per + oc;
                        for j in 0..kw {
                            for t in 0..l {
                                let ti = (t + j).wrapping_sub(pad);
                                if ti >= l {
                                    continue;
                                }
                                let gv = gd[t * cout + co];
                                for ic in 0..in_per {
                                    gx[ti * cin + gi * in_per + ic] +=
                                        gv * kd[(co * cpg + ic) * kw + j];
                                }
                            }
                        }
                    }
                }
            });
            store.add_with(kernel.0, vk.shape(), |gk| {
                let xd = vx.data();
                for gi in 0..groups {
                    for oc in 0..out_per {
                        let co = gi * out_per + oc;
                        for j in 0..kw {
                            for t in 0..l {
                                let ti = (t + j).wrapping_sub(pad);
                                if ti >= l {
                                    continue;
                                }
                                let gv = gd[t * cout + co];
                                for ic in 0..in_per {
                                    gk[(co * cpg + ic) * kw + j] +=
                                        gv * xd[ti * cin + gi * in_per + ic];
                                }
                            }
                        }
                    }
                }
            });
        }))
    }
}
