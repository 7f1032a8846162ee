//! Central finite-difference verification of recorded gradients.

use crate::{AutogradError, Graph, Parameter, Result, Scalar, Var};

/// Worst-coordinate report from [`finite_diff_check`].
#[derive(Debug, Clone)]
pub struct FiniteDiffReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares the recorded backward of `f` against central finite
/// differences, coordinate by coordinate over every parameter.
///
/// `f` must rebuild the loss graph from the parameters' current values on
/// every call. Relative error uses a `max(|analytic|, |numeric|, 1e-12)`
/// denominator. Non-finite losses or gradients are reported as errors with
/// the offending coordinate.
pub fn finite_diff_check<T: Scalar>(
    params: &[Parameter<T>],
    h: f64,
    mut f: impl FnMut(&mut Graph<T>) -> Result<Var>,
) -> Result<FiniteDiffReport> {
    let eval = |f: &mut dyn FnMut(&mut Graph<T>) -> Result<Var>| -> Result<f64> {
        let mut g = Graph::new();
        let loss = f(&mut g)?;
        let v = g.value(loss);
        if v.numel() != 1 {
            return Err(AutogradError::Contract(format!(
                "finite_diff_check needs a scalar loss, got {:?}",
                v.shape()
            )));
        }
        Ok(v.item().to_f64())
    };

    for p in params {
        p.zero_grad();
    }
    {
        let mut g = Graph::new();
        let loss = f(&mut g)?;
        g.backward(loss)?;
    }

    let step = T::from_f64(h);
    let mut report = FiniteDiffReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    for p in params {
        let name = p.name();
        let n = p.numel();
        for i in 0..n {
            p.nudge(i, step);
            let up = eval(&mut f)?;
            p.nudge(i, -(step + step));
            let down = eval(&mut f)?;
            p.nudge(i, step);

            let numeric = (up - down) / (2.0 * h);
            let analytic = p.grad_at(i).to_f64();
            if !numeric.is_finite() || !analytic.is_finite() {
                return Err(AutogradError::NonFinite {
                    context: format!("finite_diff_check of {name}"),
                    index: i,
                });
            }
            let denom = analytic.abs().max(numeric.abs()).max(1e-12);
            let rel = (analytic - numeric).abs() / denom;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_param = name.clone();
                report.worst_index = i;
                report.analytic = analytic;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Array;

    #[test]
    fn quadratic_matches_exactly() {
        let p = Parameter::new("w", Array::scalar(3.0f64));
        let report = finite_diff_check(&[p.clone()], 1e-5, |g| {
            let w = g.param(&p);
            let sq = g.mul(w, w)?;
            Ok(g.sum_all(sq))
        })
        .unwrap();
        assert!((p.grad().item() - 6.0).abs() < 1e-12);
        assert!(report.max_rel_err < 1e-8, "{report:?}");
    }

    #[test]
    fn surrogate_primitive_gradcheck() {
        let p = Parameter::new(
            "x",
            Array::from_vec(vec![4], vec![0.3, 0.9, 1.1, 1.7]).unwrap(),
        );
        let report = finite_diff_check(&[p.clone()], 1e-5, |g| {
            let x = g.param(&p);
            let s = g.spike_smooth(x, 1.0, 1.0);
            Ok(g.sum_all(s))
        })
        .unwrap();
        assert!(report.max_rel_err < 1e-5, "{report:?}");
    }
}
