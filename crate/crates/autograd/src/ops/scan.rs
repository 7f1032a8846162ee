//! Input-dependent linear recurrence (selective SSM scan).
//!
//! Per channel `e` with state size `N`:
//!
//! ```text
//! abar[t,e,n] = exp(delta[t,e] * a[e,n])
//! h[t,e,n]    = abar[t,e,n] * h[t-1,e,n] + delta[t,e] * b[t,n] * x[t,e]
//! y[t,e]      = sum_n c[t,n] * h[t,e,n] + d_skip[e] * x[t,e]
//! ```
//!
//! with `h[-1] = 0`. Sequential mode evaluates the recurrence directly;
//! parallel mode computes the same prefix via the associative operator
//! `(a2,b2) . (a1,b1) = (a2*a1, a2*b1 + b2)` (Hillis-Steele over time).
//! Both modes produce the full state history, so they share one backward.

use std::rc::Rc;

use super::shape_err;
use crate::{Array, Graph, Result, Scalar, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanMode {
    Sequential,
    Parallel,
}

impl<T: Scalar> Graph<T> {
    /// Selective scan. Shapes: `delta (L,E)`, `a (E,N)`, `b (L,N)`,
    /// `c (L,N)`, `x (L,E)`, `d_skip (E)`; output `(L,E)`.
    #[allow(clippy::too_many_arguments)]
    pub fn ssm_scan(
        &mut self,
        delta: Var,
        a: Var,
        b: Var,
        c: Var,
        x: Var,
        d_skip: Var,
        mode: ScanMode,
    ) -> Result<Var> {
        let vdelta = self.rc_value(delta);
        let va = self.rc_value(a);
        let vb = self.rc_value(b);
        let vc = self.rc_value(c);
        let vx = self.rc_value(x);
        let vd = self.rc_value(d_skip);

        let (l, e) = match vdelta.shape() {
            [l, e] => (*l, *e),
            _ => return Err(shape_err("ssm_scan delta", vdelta.shape(), &[])),
        };
        let n = match va.shape() {
            [ae, n] if *ae == e => *n,
            _ => return Err(shape_err("ssm_scan a", va.shape(), vdelta.shape())),
        };
        if vb.shape() != [l, n] {
            return Err(shape_err("ssm_scan b", vb.shape(), &[l, n]));
        }
        if vc.shape() != [l, n] {
            return Err(shape_err("ssm_scan c", vc.shape(), &[l, n]));
        }
        if vx.shape() != [l, e] {
            return Err(shape_err("ssm_scan x", vx.shape(), &[l, e]));
        }
        if vd.shape() != [e] {
            return Err(shape_err("ssm_scan d_skip", vd.shape(), &[e]));
        }

        let en = e * n;
        let mut abar = vec![T::zero(); l * en];
        let mut inp = vec![T::zero(); l * en]; // delta * b * x per step
        for t in 0..l {
            for ei in 0..e {
                let dt = vdelta.data()[t * e + ei];
                let xv = vx.data()[t * e + ei];
                for ni in 0..n {
                    let idx = t * en + ei * n + ni;
                    abar[idx] = (dt * va.data()[ei * n + ni]).exp();
                    inp[idx] = dt * vb.data()[t * n + ni] * xv;
                }
            }
        }

        let h = match mode {
            ScanMode::Sequential => {
                let mut h = inp;
                for t in 1..l {
                    let (prev, cur) = h.split_at_mut(t * en);
                    let prev = &prev[(t - 1) * en..];
                    let cur = &mut cur[..en];
                    let ab = &abar[t * en..(t + 1) * en];
                    for i in 0..en {
                        cur[i] += ab[i] * prev[i];
                    }
                }
                h
            }
            ScanMode::Parallel => {
                let mut pa = abar.clone();
                let mut pb = inp;
                let mut offset = 1;
                while offset < l {
                    let prev_a = pa.clone();
                    let prev_b = pb.clone();
                    for t in offset..l {
                        let cur = t * en;
                        let earlier = (t - offset) * en;
                        for i in 0..en {
                            pa[cur + i] = prev_a[cur + i] * prev_a[earlier + i];
                            pb[cur + i] =
                                prev_a[cur + i] * prev_b[earlier + i] + pb[cur + i];
                        }
                    }
                    offset *= 2;
                }
                pb
            }
        };

        let mut out = Array::zeros(&[l, e]);
        {
            let od = out.data_mut();
            for t in 0..l {
                for ei in 0..e {
                    let mut acc = T::zero();
                    for ni in 0..n {
                        acc += vc.data()[t * n + ni] * h[t * en + ei * n + ni];
                    }
                    od[t * e + ei] = acc + vd.data()[ei] * vx.data()[t * e + ei];
                }
            }
        }

        let h = Rc::new(h);
        let abar = Rc::new(abar);
        Ok(self.push_op(
            out,
            &[delta, a, b, c, x, d_skip],
            move |g, store| {
                let gd = g.data();
                let mut gdelta = vec![T::zero(); l * e];
                let mut ga = vec![T::zero(); en];
                let mut gb = vec![T::zero(); l * n];
                let mut gc = vec![T::zero(); l * n];
                let mut gx = vec![T::zero(); l * e];
                let mut gskip = vec![T::zero(); e];

                // lam holds dL/dh[t]; sweep t from L-1 down to 0.
                let mut lam = vec![T::zero(); en];
                for t in (0..l).rev() {
                    for ei in 0..e {
                        let gy = gd[t * e + ei];
                        let xv = vx.data()[t * e + ei];
                        let dt = vdelta.data()[t * e + ei];
                        gskip[ei] += gy * xv;
                        let mut gx_acc = gy * vd.data()[ei];
                        let mut gdelta_acc = T::zero();
                        for ni in 0..n {
                            let i = ei * n + ni;
                            // fold in the contribution from h[t+1]'s recurrence
                            let lam_t = if t + 1 < l {
                                gy * vc.data()[t * n + ni] + lam[i] * abar[(t + 1) * en + i]
                            } else {
                                gy * vc.data()[t * n + ni]
                            };
                            gc[t * n + ni] += gy * h[t * en + i];
                            let h_prev = if t > 0 {
                                h[(t - 1) * en + i]
                            } else {
                                T::zero()
                            };
                            let bv = vb.data()[t * n + ni];
                            gx_acc += lam_t * dt * bv;
                            gb[t * n + ni] += lam_t * dt * xv;
                            gdelta_acc += lam_t
                                * (va.data()[i] * abar[t * en + i] * h_prev + bv * xv);
                            ga[i] += lam_t * dt * abar[t * en + i] * h_prev;
                            lam[i] = lam_t;
                        }
                        gx[t * e + ei] += gx_acc;
                        gdelta[t * e + ei] += gdelta_acc;
                    }
                }

                store.add(delta.0, Array::from_vec(vec![l, e], gdelta).unwrap());
                store.add(a.0, Array::from_vec(vec![e, n], ga).unwrap());
                store.add(b.0, Array::from_vec(vec![l, n], gb).unwrap());
                store.add(c.0, Array::from_vec(vec![l, n], gc).unwrap());
                store.add(x.0, Array::from_vec(vec![l, e], gx).unwrap());
                store.add(d_skip.0, Array::from_vec(vec![e], gskip).unwrap());
            },
        ))
    }
}
