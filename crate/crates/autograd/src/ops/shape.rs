//! Data movement: reshape, permute, slicing, stacking, row gathers.

use super::{require, shape_err};
use crate::array::strides_for;
use crate::{Array, Graph, Result, Scalar, Var};

impl<T: Scalar> Graph<T> {
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let va = self.rc_value(a);
        let out = va.as_ref().clone().reshaped(shape.to_vec())?;
        let old_shape = va.shape().to_vec();
        Ok(self.push_op(out, &[a], move |g, store| {
            store.add(a.0, g.clone().reshaped(old_shape.clone()).unwrap());
        }))
    }

    /// Reorder axes: `out.shape[i] = in.shape[perm[i]]`.
    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Result<Var> {
        let va = self.rc_value(a);
        require(
            perm.len() == va.rank() && {
                let mut seen = vec![false; perm.len()];
                perm.iter().all(|&p| {
                    p < seen.len() && !std::mem::replace(&mut seen[p], true)
                })
            },
            || format!("permute: {perm:?} is not a permutation of axes of {:?}", va.shape()),
        )?;
        let perm = perm.to_vec();
        let out = permute_array(&va, &perm);
        let inverse: Vec<usize> = {
            let mut inv = vec![0; perm.len()];
            for (i, &p) in perm.iter().enumerate() {
                inv[p] = i;
            }
            inv
        };
        Ok(self.push_op(out, &[a], move |g, store| {
            store.add(a.0, permute_array(g, &inverse));
        }))
    }

    /// Contiguous slice along one axis.
    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let va = self.rc_value(a);
        require(axis < va.rank() && start + len <= va.shape()[axis], || {
            format!(
                "narrow: axis {axis} range {start}..{} out of bounds for {:?}",
                start + len,
                va.shape()
            )
        })?;
        let in_shape = va.shape().to_vec();
        let mut out_shape = in_shape.clone();
        out_shape[axis] = len;

        // Treat the array as (outer, axis, inner).
        let outer: usize = in_shape[..axis].iter().product();
        let inner: usize = in_shape[axis + 1..].iter().product();
        let axis_len = in_shape[axis];

        let mut out = Array::zeros(&out_shape);
        {
            let xd = va.data();
            let od = out.data_mut();
            for o in 0..outer {
                for j in 0..len {
                    let src = (o * axis_len + start + j) * inner;
                    let dst = (o * len + j) * inner;
                    od[dst..dst + inner].copy_from_slice(&xd[src..src + inner]);
                }
            }
        }
        Ok(self.push_op(out, &[a], move |g, store| {
            store.add_with(a.0, &in_shape, |gx| {
                let gd = g.data();
                for o in 0..outer {
                    for j in 0..len {
                        let dst = (o * axis_len + start + j) * inner;
                        let src = (o * len + j) * inner;
                        for i in 0..inner {
                            gx[dst + i] += gd[src + i];
                        }
                    }
                }
            });
        }))
    }

    /// Stack equal-shaped values along a new leading axis.
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var> {
        require(!parts.is_empty(), || "stack: no inputs".to_string())?;
        let first = self.rc_value(parts[0]);
        let each = first.numel();
        let mut out_shape = vec![parts.len()];
        out_shape.extend_from_slice(first.shape());
        let mut data = Vec::with_capacity(each * parts.len());
        for &p in parts {
            let v = self.rc_value(p);
            if v.shape() != first.shape() {
                return Err(shape_err("stack", first.shape(), v.shape()));
            }
            data.extend_from_slice(v.data());
        }
        let out = Array::from_vec(out_shape, data)?;
        let parts = parts.to_vec();
        let part_shape = first.shape().to_vec();
        Ok(self.push_op(out, &parts.clone(), move |g, store| {
            for (i, &p) in parts.iter().enumerate() {
                store.add_with(p.0, &part_shape, |gp| {
                    let gd = &g.data()[i * each..(i + 1) * each];
                    for (dst, &src) in gp.iter_mut().zip(gd) {
                        *dst += src;
                    }
                });
            }
        }))
    }

    /// Gather rows of a 2D array: `out[i, :] = x[indices[i], :]`.
    pub fn select_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let va = self.rc_value(a);
        let (rows, cols) = match va.shape() {
            [r, c] => (*r, *c),
            _ => return Err(shape_err("select_rows", va.shape(), &[])),
        };
        require(indices.iter().all(|&i| i < rows), || {
            format!("select_rows: index out of range for {rows} rows")
        })?;
        let indices = indices.to_vec();
        let mut out = Array::zeros(&[indices.len(), cols]);
        for (i, &src) in indices.iter().enumerate() {
            out.data_mut()[i * cols..(i + 1) * cols]
                .copy_from_slice(&va.data()[src * cols..(src + 1) * cols]);
        }
        Ok(self.push_op(out, &[a], move |g, store| {
            store.add_with(a.0, &[rows, cols], |gx| {
                for (i, &dst) in indices.iter().enumerate() {
                    let grow = &g.data()[i * cols..(i + 1) * cols];
                    for (x, &gv) in gx[dst * cols..(dst + 1) * cols].iter_mut().zip(grow) {
                        *x += gv;
                    }
                }
            });
        }))
    }

    /// Repeat a whole 2D block `reps` times vertically: `(R,C) -> (R*reps, C)`.
    pub fn tile_rows(&mut self, a: Var, reps: usize) -> Result<Var> {
        let va = self.rc_value(a);
        let (rows, cols) = match va.shape() {
            [r, c] => (*r, *c),
            _ => return Err(shape_err("tile_rows", va.shape(), &[])),
        };
        let mut data = Vec::with_capacity(rows * cols * reps);
        for _ in 0..reps {
            data.extend_from_slice(va.data());
        }
        let out = Array::from_vec(vec![rows * reps, cols], data)?;
        Ok(self.push_op(out, &[a], move |g, store| {
            store.add_with(a.0, &[rows, cols], |gx| {
                for rep in 0..reps {
                    let base = rep * rows * cols;
                    for i in 0..rows * cols {
                        gx[i] += g.data()[base + i];
                    }
                }
            });
        }))
    }

    /// Repeat each row `reps` consecutive times: `(R,C) -> (R*reps, C)`.
    pub fn repeat_each_row(&mut self, a: Var, reps: usize) -> Result<Var> {
        let va = self.rc_value(a);
        let (rows, cols) = match va.shape() {
            [r, c] => (*r, *c),
            _ => return Err(shape_err("repeat_each_row", va.shape(), &[])),
        };
        let mut data = Vec::with_capacity(rows * cols * reps);
        for r in 0..rows {
            for _ in 0..reps {
                data.extend_from_slice(&va.data()[r * cols..(r + 1) * cols]);
            }
        }
        let out = Array::from_vec(vec![rows * reps, cols], data)?;
        Ok(self.push_op(out, &[a], move |g, store| {
            store.add_with(a.0, &[rows, cols], |gx| {
                for r in 0..rows {
                    for rep in 0..reps {
                        let base = (r * reps + rep) * cols;
                        for c in 0..cols {
                            gx[r * cols + c] += g.data()[base + c];
                        }
                    }
                }
            });
        }))
    }
}

fn permute_array<T: Scalar>(a: &Array<T>, perm: &[usize]) -> Array<T> {
    let in_shape = a.shape();
    let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
    let in_strides = strides_for(in_shape);
    let mut out = Array::zeros(&out_shape);
    let rank = perm.len();
    if rank == 0 {
        out.data_mut()[0] = a.data()[0];
        return out;
    }
    let mut coords = vec![0usize; rank];
    let numel = a.numel();
    let od = out.data_mut();
    for flat in 0..numel {
        let mut src = 0;
        for (i, &c) in coords.iter().enumerate() {
            src += c * in_strides[perm[i]];
        }
        od[flat] = a.data()[src];
        // row-major increment of out coords
        for i in (0..rank).rev() {
            coords[i] += 1;
            if coords[i] < out_shape[i] {
                break;
            }
            coords[i] = 0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permute_transposes() {
        let mut g = Graph::<f64>::new();
        let a = g.input(Array::from_vec(vec![2, 3], (0..6).map(|x| x as f64).collect()).unwrap());
        let t = g.permute(a, &[1, 0]).unwrap();
        assert_eq!(g.shape(t), &[3, 2]);
        assert_eq!(g.value(t).data(), &[0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
    }

    #[test]
    fn narrow_then_grad_shape() {
        let mut g = Graph::<f64>::new();
        let a = g.input(Array::from_vec(vec![2, 4], (0..8).map(|x| x as f64).collect()).unwrap());
        let s = g.narrow(a, 1, 1, 2).unwrap();
        assert_eq!(g.value(s).data(), &[1.0, 2.0, 5.0, 6.0]);
    }

    #[test]
    fn select_rows_gathers() {
        let mut g = Graph::<f64>::new();
        let a = g.input(Array::from_vec(vec![3, 2], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap());
        let s = g.select_rows(a, &[2, 0]).unwrap();
        assert_eq!(g.value(s).data(), &[4.0, 5.0, 0.0, 1.0]);
    }

    #[test]
    fn tile_and_repeat_layouts() {
        let mut g = Graph::<f64>::new();
        let a = g.input(Array::from_vec(vec![2, 1], vec![1.0, 2.0]).unwrap());
        let t = g.tile_rows(a, 2).unwrap();
        assert_eq!(g.value(t).data(), &[1.0, 2.0, 1.0, 2.0]);
        let r = g.repeat_each_row(a, 2).unwrap();
        assert_eq!(g.value(r).data(), &[1.0, 1.0, 2.0, 2.0]);
    }
}
