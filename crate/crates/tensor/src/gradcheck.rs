use crate::error::{Result, TensorError};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// `|a − f| / max(|a|, |f|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_rel_error: f64,
    /// Flat index of the worst component.
    pub worst: usize,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tol
    }

    pub(crate) fn from_parts(analytic: Vec<f64>, numeric: Vec<f64>, tol: f64) -> Self {
        let (worst, max_rel_error) = analytic
            .iter()
            .zip(&numeric)
            .map(|(&a, &f)| relative_error(a, f))
            .enumerate()
            .fold((0, 0.0), |best, (i, e)| if e > best.1 { (i, e) } else { best });
        Self {
            analytic,
            numeric,
            max_rel_error,
            worst,
            tol,
        }
    }
}

/// Compares the reverse-mode gradient of a scalar function at `point`
/// against central finite differences with step `eps`.
pub fn grad_check<F>(f: F, point: &Tensor, eps: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_>, Var) -> Result<Var>,
{
    if !(eps > 0.0) {
        return crate::error::contract("grad_check", "eps must be positive");
    }
    let leaf = point.clone().with_grad();
    let analytic = {
        let mut g = Graph::new();
        let x = g.leaf(&leaf);
        let y = f(&mut g, x)?;
        let value = g.scalar(y);
        if !value.is_finite() {
            return Err(TensorError::NonFinite("grad_check objective".into()));
        }
        let grads = g.backward(y)?;
        grads
            .get(x)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; point.len()])
    };
    let eval = |t: &Tensor| -> Result<f64> {
        let mut g = Graph::inference();
        let x = g.leaf(t);
        let y = f(&mut g, x)?;
        let v = g.scalar(y);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(TensorError::NonFinite("grad_check objective".into()))
        }
    };
    let mut probe = point.clone();
    let mut numeric = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let up = eval(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let down = eval(&probe)?;
        probe.data_mut()[i] = orig;
        numeric.push((up - down) / (2.0 * eps));
    }
    Ok(GradCheckReport::from_parts(analytic, numeric, tol))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let report = grad_check(
            |g, x| {
                let y = g.mul(x, x)?;
                Ok(g.sum(y))
            },
            &Tensor::scalar(3.0),
            1e-5,
            1e-8,
        )
        .unwrap();
        assert!((report.analytic[0] - 6.0).abs() < 1e-12);
        assert!((report.numeric[0] - 6.0).abs() < 1e-8);
        assert!(report.passed());
    }

    #[test]
    fn relative_error_guards_tiny_denominators() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-12, 0.0) - 1e-4).abs() < 1e-18);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn non_finite_objective_is_reported() {
        let err = grad_check(
            |g, x| {
                let y = g.scale(x, f64::INFINITY);
                Ok(g.sum(y))
            },
            &Tensor::scalar(1.0),
            1e-5,
            1e-4,
        )
        .unwrap_err();
        assert!(matches!(err, TensorError::NonFinite(_)));
    }
}
