//! Matrix products.

use super::shape_err;
use crate::{Array, Graph, Result, Scalar, Var};

/// `out[m, n] += sum_k a[m, k] * b[k, n]`, row-major slices.
fn matmul_acc<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (j, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let brow = &b[j * n..(j + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[m, k] += sum_n g[m, n] * b[k, n]` (g times b-transpose).
fn matmul_bt_acc<T: Scalar>(g: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        let orow = &mut out[i * k..(i + 1) * k];
        for j in 0..k {
            let brow = &b[j * n..(j + 1) * n];
            let mut acc = T::zero();
            for (gv, bv) in grow.iter().zip(brow) {
                acc += *gv * *bv;
            }
            orow[j] += acc;
        }
    }
}

/// `out[k, n] += sum_m a[m, k] * g[m, n]` (a-transpose times g).
fn matmul_at_acc<T: Scalar>(a: &[T], g: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let grow = &g[i * n..(i + 1) * n];
        for (j, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let orow = &mut out[j * n..(j + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
}

impl<T: Scalar> Graph<T> {
    /// Matrix product. Accepts `(M,K) x (K,N)` or batched `(B,M,K) x (B,K,N)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let va = self.rc_value(a);
        let vb = self.rc_value(b);
        let (batch, m, k, n) = match (va.shape(), vb.shape()) {
            ([m, k1], [k2, n]) if k1 == k2 => (1usize, *m, *k1, *n),
            ([b1, m, k1], [b2, k2, n]) if b1 == b2 && k1 == k2 => (*b1, *m, *k1, *n),
            _ => return Err(shape_err("matmul", va.shape(), vb.shape())),
        };
        let out_shape = if va.rank() == 2 {
            vec![m, n]
        } else {
            vec![batch, m, n]
        };
        let mut out = Array::zeros(&out_shape);
        for bi in 0..batch {
            matmul_acc(
                &va.data()[bi * m * k..],
                &vb.data()[bi * k * n..],
                m,
                k,
                n,
                &mut out.data_mut()[bi * m * n..(bi + 1) * m * n],
            );
        }
        Ok(self.push_op(out, &[a, b], move |g, store| {
            store.add_with(a.0, va.shape(), |ga| {
                for bi in 0..batch {
                    matmul_bt_acc(
                        &g.data()[bi * m * n..],
                        &vb.data()[bi * k * n..],
                        m,
                        k,
                        n,
                        &mut ga[bi * m * k..(bi + 1) * m * k],
                    );
                }
            });
            store.add_with(b.0, vb.shape(), |gb| {
                for bi in 0..batch {
                    matmul_at_acc(
                        &va.data()[bi * m * k..],
                        &g.data()[bi * m * n..],
                        m,
                        k,
                        n,
                        &mut gb[bi * k * n..(bi + 1) * k * n],
                    );
                }
            });
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_2x2() {
        let mut g = Graph::<f64>::new();
        let a = g.input(Array::from_vec(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = g.input(Array::from_vec(vec![2, 2], vec![5.0, 6.0, 7.0, 8.0]).unwrap());
        let y = g.matmul(a, b).unwrap();
        assert_eq!(g.value(y).data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn batched_matmul_shapes() {
        let mut g = Graph::<f64>::new();
        let a = g.input(Array::zeros(&[4, 3, 2]));
        let b = g.input(Array::zeros(&[4, 2, 5]));
        let y = g.matmul(a, b).unwrap();
        assert_eq!(g.shape(y), &[4, 3, 5]);
    }
}
