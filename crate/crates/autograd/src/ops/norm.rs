//! Softmax, layer normalization, L2 normalization, log-sum-exp, row picks.

use std::rc::Rc;

use super::{require, shape_err};
use crate::{Array, Graph, Result, Scalar, Var};

impl<T: Scalar> Graph<T> {
    /// Softmax over the last axis.
    pub fn softmax_last(&mut self, a: Var) -> Result<Var> {
        let va = self.rc_value(a);
        require(va.rank() >= 1, || {
            format!("softmax_last: needs rank >= 1, got {:?}", va.shape())
        })?;
        let cols = *va.shape().last().unwrap();
        let rows = va.numel() / cols;
        let mut out = Array::zeros(va.shape());
        {
            let od = out.data_mut();
            for r in 0..rows {
                let row = &va.data()[r * cols..(r + 1) * cols];
                let m = row.iter().cloned().fold(T::neg_infinity(), T::max);
                let mut sum = T::zero();
                for (o, &x) in od[r * cols..(r + 1) * cols].iter_mut().zip(row) {
                    *o = (x - m).exp();
                    sum += *o;
                }
                for o in od[r * cols..(r + 1) * cols].iter_mut() {
                    *o /= sum;
                }
            }
        }
        let out = Rc::new(out);
        let vy = Rc::clone(&out);
        Ok(self.push_op_rc(out, &[a], move |g, store| {
            store.add_with(a.0, vy.shape(), |gx| {
                for r in 0..rows {
                    let y = &vy.data()[r * cols..(r + 1) * cols];
                    let gr = &g.data()[r * cols..(r + 1) * cols];
                    let mut dot = T::zero();
                    for (yv, gv) in y.iter().zip(gr) {
                        dot += *yv * *gv;
                    }
                    for (i, x) in gx[r * cols..(r + 1) * cols].iter_mut().enumerate() {
                        *x += y[i] * (gr[i] - dot);
                    }
                }
            });
        }))
    }

    /// Layer normalization over the last axis with learnable gain and shift.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        let vx = self.rc_value(x);
        let vg = self.rc_value(gamma);
        let vb = self.rc_value(beta);
        require(vx.rank() >= 1, || {
            format!("layer_norm: needs rank >= 1, got {:?}", vx.shape())
        })?;
        let cols = *vx.shape().last().unwrap();
        if vg.shape() != [cols] || vb.shape() != [cols] {
            return Err(shape_err("layer_norm", vx.shape(), vg.shape()));
        }
        let rows = vx.numel() / cols;
        let colsf = T::from_f64(cols as f64);

        let mut out = Array::zeros(vx.shape());
        // normalized activations and 1/sigma per row, saved for backward
        let mut xhat = vec![T::zero(); vx.numel()];
        let mut inv_sigma = vec![T::zero(); rows];
        {
            let od = out.data_mut();
            for r in 0..rows {
                let row = &vx.data()[r * cols..(r + 1) * cols];
                let mut mean = T::zero();
                for &v in row {
                    mean += v;
                }
                mean /= colsf;
                let mut var = T::zero();
                for &v in row {
                    let d = v - mean;
                    var += d * d;
                }
                var /= colsf;
                let inv = T::one() / (var + eps).sqrt();
                inv_sigma[r] = inv;
                for c in 0..cols {
                    let h = (row[c] - mean) * inv;
                    xhat[r * cols + c] = h;
                    od[r * cols + c] = h * vg.data()[c] + vb.data()[c];
                }
            }
        }
        let xhat = Rc::new(xhat);
        let xh = Rc::clone(&xhat);
        Ok(self.push_op(out, &[x, gamma, beta], move |g, store| {
            store.add_with(beta.0, &[cols], |gb| {
                for r in 0..rows {
                    for c in 0..cols {
                        gb[c] += g.data()[r * cols + c];
                    }
                }
            });
            store.add_with(gamma.0, &[cols], |gg| {
                for r in 0..rows {
                    for c in 0..cols {
                        gg[c] += g.data()[r * cols + c] * xh[r * cols + c];
                    }
                }
            });
            store.add_with(x.0, vx.shape(), |gx| {
                for r in 0..rows {
                    // gh = g * gamma restricted to this row
                    let mut mean_gh = T::zero();
                    let mut mean_gh_xhat = T::zero();
                    for c in 0..cols {
                        let gh = g.data()[r * cols + c] * vg.data()[c];
                        mean_gh += gh;
                        mean_gh_xhat += gh * xh[r * cols + c];
                    }
                    mean_gh /= colsf;
                    mean_gh_xhat /= colsf;
                    for c in 0..cols {
                        let gh = g.data()[r * cols + c] * vg.data()[c];
                        gx[r * cols + c] +=
                            (gh - mean_gh - xh[r * cols + c] * mean_gh_xhat) * inv_sigma[r];
                    }
                }
            });
        }))
    }

    /// L2-normalize along the last axis. Rows with norm below `1e-12` are
    /// scaled by `1/1e-12` instead, keeping the output finite.
    pub fn l2_normalize(&mut self, a: Var) -> Result<Var> {
        let va = self.rc_value(a);
        require(va.rank() >= 1, || {
            format!("l2_normalize: needs rank >= 1, got {:?}", va.shape())
        })?;
        let eps = T::from_f64(1e-12);
        let cols = *va.shape().last().unwrap();
        let rows = va.numel() / cols;
        let mut out = Array::zeros(va.shape());
        let mut norms = vec![T::zero(); rows];
        {
            let od = out.data_mut();
            for r in 0..rows {
                let row = &va.data()[r * cols..(r + 1) * cols];
                let mut sq = T::zero();
                for &v in row {
                    sq += v * v;
                }
                let n = sq.sqrt().max(eps);
                norms[r] = n;
                for c in 0..cols {
                    od[r * cols + c] = row[c] / n;
                }
            }
        }
        let out = Rc::new(out);
        let vy = Rc::clone(&out);
        Ok(self.push_op_rc(out, &[a], move |g, store| {
            store.add_with(a.0, va.shape(), |gx| {
                for r in 0..rows {
                    let y = &vy.data()[r * cols..(r + 1) * cols];
                    let gr = &g.data()[r * cols..(r + 1) * cols];
                    let mut dot = T::zero();
                    for (yv, gv) in y.iter().zip(gr) {
                        dot += *yv * *gv;
                    }
                    for c in 0..cols {
                        gx[r * cols + c] += (gr[c] - y[c] * dot) / norms[r];
                    }
                }
            });
        }))
    }

    /// `log(sum(exp(x)))` of a 1D vector, computed stably.
    pub fn logsumexp(&mut self, a: Var) -> Result<Var> {
        let va = self.rc_value(a);
        if va.rank() != 1 {
            return Err(shape_err("logsumexp", va.shape(), &[]));
        }
        let m = va.data().iter().cloned().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for &x in va.data() {
            sum += (x - m).exp();
        }
        let lse = m + sum.ln();
        Ok(self.push_op(Array::scalar(lse), &[a], move |g, store| {
            let gv = g.item();
            store.add_with(a.0, va.shape(), |gx| {
                for (x, &v) in gx.iter_mut().zip(va.data()) {
                    *x += gv * (v - lse).exp();
                }
            });
        }))
    }

    /// Extract one element of a 1D vector as a scalar.
    pub fn pick(&mut self, a: Var, index: usize) -> Result<Var> {
        let va = self.rc_value(a);
        require(va.rank() == 1 && index < va.shape()[0], || {
            format!("pick: index {index} out of bounds for {:?}", va.shape())
        })?;
        let value = va.data()[index];
        Ok(self.push_op(Array::scalar(value), &[a], move |g, store| {
            let gv = g.item();
            store.add_with(a.0, va.shape(), |gx| {
                gx[index] += gv;
            });
        }))
    }
}
