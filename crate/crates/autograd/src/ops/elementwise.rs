//! Elementwise arithmetic, activations, and the surrogate-gradient spike.

use std::rc::Rc;

use super::{require, shape_err};
use crate::array::strides_for;
use crate::{Array, Graph, Result, Scalar, Var};

impl<T: Scalar> Graph<T> {
    fn binary_same_shape(
        &mut self,
        op: &str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        // (grad_out, a_val, b_val) -> (grad_a, grad_b)
        df: impl Fn(T, T, T) -> (T, T) + 'static,
    ) -> Result<Var> {
        let va = self.rc_value(a);
        let vb = self.rc_value(b);
        if va.shape() != vb.shape() {
            return Err(shape_err(op, va.shape(), vb.shape()));
        }
        let out = va.zip(&vb, f);
        Ok(self.push_op(out, &[a, b], move |g, store| {
            let n = va.numel();
            store.add_with(a.0, va.shape(), |ga| {
                for i in 0..n {
                    ga[i] += df(g.data()[i], va.data()[i], vb.data()[i]).0;
                }
            });
            store.add_with(b.0, vb.shape(), |gb| {
                for i in 0..n {
                    gb[i] += df(g.data()[i], va.data()[i], vb.data()[i]).1;
                }
            });
        }))
    }

    fn unary(
        &mut self,
        a: Var,
        f: impl Fn(T) -> T,
        // (x, y) -> dy/dx
        df: impl Fn(T, T) -> T + 'static,
    ) -> Var {
        let va = self.rc_value(a);
        let out = Rc::new(va.map(f));
        let vy = Rc::clone(&out);
        self.push_op_rc(out, &[a], move |g, store| {
            store.add_with(a.0, va.shape(), |ga| {
                for i in 0..va.numel() {
                    ga[i] += g.data()[i] * df(va.data()[i], vy.data()[i]);
                }
            });
        })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape("add", a, b, |x, y| x + y, |g, _, _| (g, g))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape("sub", a, b, |x, y| x - y, |g, _, _| (g, -g))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape("mul", a, b, |x, y| x * y, |g, x, y| (g * y, g * x))
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        self.unary(a, |x| x + c, |_, _| T::one())
    }

    pub fn mul_scalar(&mut self, a: Var, c: T) -> Var {
        self.unary(a, move |x| x * c, move |_, _| c)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.mul_scalar(a, -T::one())
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.exp(), |_, y| y)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.ln(), |x, _| T::one() / x)
    }

    /// Numerically stable `ln(1 + e^x)`.
    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(
            a,
            |x| x.max(T::zero()) + (-x.abs()).exp().ln_1p(),
            |x, _| sigmoid_scalar(x),
        )
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid_scalar, |_, y| y * (T::one() - y))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        self.unary(
            a,
            |x| x * sigmoid_scalar(x),
            |x, _| {
                let s = sigmoid_scalar(x);
                s * (T::one() + x * (T::one() - s))
            },
        )
    }

    /// Heaviside threshold with a triangular surrogate gradient:
    /// forward 1 where `x >= u_th` else 0; backward
    /// `max(0, 1 - |x - u_th|/w) / w`.
    pub fn spike(&mut self, a: Var, u_th: T, w: T) -> Var {
        self.unary(
            a,
            move |x| {
                if x >= u_th {
                    T::one()
                } else {
                    T::zero()
                }
            },
            move |x, _| triangular(x, u_th, w),
        )
    }

    /// Smooth primitive of the triangular surrogate (a piecewise-quadratic
    /// ramp from 0 to 1 over `[u_th - w, u_th + w]`). Shares the spike's
    /// backward exactly; used to finite-difference-check spiking graphs.
    pub fn spike_smooth(&mut self, a: Var, u_th: T, w: T) -> Var {
        self.unary(
            a,
            move |x| {
                let d = x - u_th;
                let half = T::from_f64(0.5);
                if d <= -w {
                    T::zero()
                } else if d <= T::zero() {
                    let r = d + w;
                    half * r * r / (w * w)
                } else if d < w {
                    let r = w - d;
                    T::one() - half * r * r / (w * w)
                } else {
                    T::one()
                }
            },
            move |x, _| triangular(x, u_th, w),
        )
    }

    /// Multiply by a vector broadcast along `axis`:
    /// `y[.., j, ..] = x[.., j, ..] * f[j]` with `j` indexing `axis`.
    pub fn mul_axis(&mut self, x: Var, f: Var, axis: usize) -> Result<Var> {
        self.broadcast_axis("mul_axis", x, f, axis, true)
    }

    /// Add a vector broadcast along `axis`.
    pub fn add_axis(&mut self, x: Var, f: Var, axis: usize) -> Result<Var> {
        self.broadcast_axis("add_axis", x, f, axis, false)
    }

    fn broadcast_axis(
        &mut self,
        op: &str,
        x: Var,
        f: Var,
        axis: usize,
        multiply: bool,
    ) -> Result<Var> {
        let vx = self.rc_value(x);
        let vf = self.rc_value(f);
        require(axis < vx.rank(), || {
            format!("{op}: axis {axis} out of range for shape {:?}", vx.shape())
        })?;
        if vf.rank() != 1 || vf.shape()[0] != vx.shape()[axis] {
            return Err(shape_err(op, vx.shape(), vf.shape()));
        }
        let strides = strides_for(vx.shape());
        let axis_len = vx.shape()[axis];
        let axis_stride = strides[axis];
        // Flat index i has axis coordinate (i / axis_stride) % axis_len.
        let coord = move |i: usize| (i / axis_stride) % axis_len;

        let mut out = Array::zeros(vx.shape());
        for i in 0..vx.numel() {
            let fv = vf.data()[coord(i)];
            out.data_mut()[i] = if multiply {
                vx.data()[i] * fv
            } else {
                vx.data()[i] + fv
            };
        }
        Ok(self.push_op(out, &[x, f], move |g, store| {
            store.add_with(x.0, vx.shape(), |gx| {
                for i in 0..vx.numel() {
                    gx[i] += if multiply {
                        g.data()[i] * vf.data()[coord(i)]
                    } else {
                        g.data()[i]
                    };
                }
            });
            store.add_with(f.0, vf.shape(), |gf| {
                for i in 0..vx.numel() {
                    gf[coord(i)] += if multiply {
                        g.data()[i] * vx.data()[i]
                    } else {
                        g.data()[i]
                    };
                }
            });
        }))
    }
}

pub(crate) fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn triangular<T: Scalar>(x: T, u_th: T, w: T) -> T {
    let t = T::one() - ((x - u_th) / w).abs();
    t.max(T::zero()) / w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::AutogradError;

    #[test]
    fn mul_matches_elementwise_definition() {
        let mut g = Graph::<f64>::new();
        let a = g.input(Array::from_vec(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
        let b = g.input(Array::from_vec(vec![3], vec![4.0, 5.0, 6.0]).unwrap());
        let y = g.mul(a, b).unwrap();
        assert_eq!(g.value(y).data(), &[4.0, 10.0, 18.0]);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let mut g = Graph::<f64>::new();
        let a = g.input(Array::zeros(&[2]));
        let b = g.input(Array::zeros(&[3]));
        match g.add(a, b) {
            Err(AutogradError::Shape(msg)) => {
                assert!(msg.contains("[2]") && msg.contains("[3]"), "{msg}");
            }
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn spike_fires_at_threshold() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Array::from_vec(vec![3], vec![0.0, 1.0, 2.0]).unwrap());
        let s = g.spike(x, 1.0, 1.0);
        assert_eq!(g.value(s).data(), &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn spike_smooth_midpoint_is_half() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Array::from_vec(vec![1], vec![1.0]).unwrap());
        let s = g.spike_smooth(x, 1.0, 1.0);
        assert!((g.value(s).data()[0] - 0.5).abs() < 1e-12);
    }
}
