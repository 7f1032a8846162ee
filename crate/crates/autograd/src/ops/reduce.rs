//! Reductions. Accumulation order is fixed row-major for determinism.

use super::{require, shape_err};
use crate::{Array, Graph, Result, Scalar, Var};

impl<T: Scalar> Graph<T> {
    pub fn sum_all(&mut self, a: Var) -> Var {
        let va = self.rc_value(a);
        let mut acc = T::zero();
        for &x in va.data() {
            acc += x;
        }
        self.push_op(Array::scalar(acc), &[a], move |g, store| {
            let gv = g.item();
            store.add_with(a.0, va.shape(), |gx| {
                for x in gx.iter_mut() {
                    *x += gv;
                }
            });
        })
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).numel();
        let s = self.sum_all(a);
        self.mul_scalar(s, T::one() / T::from_f64(n as f64))
    }

    /// Mean over the leading axis: `(R, ...) -> (...)`.
    pub fn mean_axis0(&mut self, a: Var) -> Result<Var> {
        let va = self.rc_value(a);
        require(va.rank() >= 1, || {
            format!("mean_axis0: needs rank >= 1, got shape {:?}", va.shape())
        })?;
        let rows = va.shape()[0];
        let rest: usize = va.shape()[1..].iter().product();
        let out_shape = va.shape()[1..].to_vec();
        let inv = T::one() / T::from_f64(rows as f64);
        let mut out = Array::zeros(&out_shape);
        {
            let od = out.data_mut();
            for r in 0..rows {
                for i in 0..rest {
                    od[i] += va.data()[r * rest + i];
                }
            }
            for v in od.iter_mut() {
                *v *= inv;
            }
        }
        let in_shape = va.shape().to_vec();
        Ok(self.push_op(out, &[a], move |g, store| {
            store.add_with(a.0, &in_shape, |gx| {
                for r in 0..rows {
                    for i in 0..rest {
                        gx[r * rest + i] += g.data()[i] * inv;
                    }
                }
            });
        }))
    }

    /// Per-segment means of a 1D sequence: segment `k` averages
    /// `x[ranges[k]]`. Empty segments yield 0.
    pub fn segment_mean(&mut self, a: Var, ranges: &[std::ops::Range<usize>]) -> Result<Var> {
        let va = self.rc_value(a);
        if va.rank() != 1 {
            return Err(shape_err("segment_mean", va.shape(), &[]));
        }
        let n = va.shape()[0];
        require(ranges.iter().all(|r| r.start <= r.end && r.end <= n), || {
            format!("segment_mean: range out of bounds for length {n}")
        })?;
        let ranges = ranges.to_vec();
        let mut out = Array::zeros(&[ranges.len()]);
        for (k, r) in ranges.iter().enumerate() {
            if r.is_empty() {
                continue;
            }
            let mut acc = T::zero();
            for &x in &va.data()[r.clone()] {
                acc += x;
            }
            out.data_mut()[k] = acc / T::from_f64(r.len() as f64);
        }
        Ok(self.push_op(out, &[a], move |g, store| {
            store.add_with(a.0, &[n], |gx| {
                for (k, r) in ranges.iter().enumerate() {
                    if r.is_empty() {
                        continue;
                    }
                    let gv = g.data()[k] / T::from_f64(r.len() as f64);
                    for x in gx[r.clone()].iter_mut() {
                        *x += gv;
                    }
                }
            });
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_all_grad_is_ones() {
        let mut g = Graph::<f64>::new();
        let p = crate::Parameter::new("w", Array::from_vec(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
        let w = g.param(&p);
        let loss = g.sum_all(w);
        assert_eq!(g.value(loss).item(), 6.0);
        g.backward(loss).unwrap();
        assert_eq!(p.grad().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn quadratic_grad() {
        let mut g = Graph::<f64>::new();
        let p = crate::Parameter::new("w", Array::from_vec(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
        let w = g.param(&p);
        let sq = g.mul(w, w).unwrap();
        let loss = g.sum_all(sq);
        g.backward(loss).unwrap();
        assert_eq!(p.grad().data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn segment_mean_with_empty_segment() {
        let mut g = Graph::<f64>::new();
        let a = g.input(Array::from_vec(vec![4], vec![1.0, 3.0, 5.0, 7.0]).unwrap());
        let s = g.segment_mean(a, &[0..2, 2..2, 2..4]).unwrap();
        assert_eq!(g.value(s).data(), &[2.0, 0.0, 6.0]);
    }
}
