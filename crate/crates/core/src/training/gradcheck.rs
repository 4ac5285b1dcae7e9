use hiertag_tensor::relative_error;
use rayon::prelude::*;

use super::loss::{document_gradients, loss_values, LossSpec};
use crate::corpus::BatchedDocument;
use crate::error::Result;
use crate::model::{Dropout, HierModel};

/// Worst finite-difference disagreement for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

/// Finite-difference estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FiniteDifference {
    /// `(f(x+h) − f(x−h)) / 2h`.
    Central(f64),
    /// Central differences at `h` and `h/2` combined to cancel the `h²`
    /// error term, allowing a larger step and so less cancellation noise.
    Richardson(f64),
}

/// Finite differences of the gated total loss against backprop, over every
/// scalar of every parameter. Returns the worst scalar per parameter tensor.
pub fn check_model_gradients(
    model: &HierModel,
    doc: &BatchedDocument,
    spec: &LossSpec,
    scheme: FiniteDifference,
) -> Result<Vec<ParamCheck>> {
    let (_, grads) = document_gradients(model, doc, spec, &mut Dropout::off())?;
    (0..model.params().len())
        .into_par_iter()
        .map(|i| {
            let mut probe = model.clone();
            let len = probe.params().by_index(i).tensor.len();
            let mut worst = ParamCheck {
                name: probe.params().by_index(i).name.clone(),
                index: 0,
                analytic: 0.0,
                numeric: 0.0,
                rel_error: 0.0,
            };
            for j in 0..len {
                let mut central = |h: f64| -> Result<f64> {
                    let orig = probe.params().by_index(i).tensor.data()[j];
                    probe.params_mut().by_index_mut(i).tensor.data_mut()[j] = orig + h;
                    let up = loss_values(&probe, doc, spec)?.total;
                    probe.params_mut().by_index_mut(i).tensor.data_mut()[j] = orig - h;
                    let down = loss_values(&probe, doc, spec)?.total;
                    probe.params_mut().by_index_mut(i).tensor.data_mut()[j] = orig;
                    Ok((up - down) / (2.0 * h))
                };
                let numeric = match scheme {
                    FiniteDifference::Central(h) => central(h)?,
                    FiniteDifference::Richardson(h) => {
                        let coarse = central(h)?;
                        (4.0 * central(h / 2.0)? - coarse) / 3.0
                    }
                };
                let analytic = grads[i].as_ref().map_or(0.0, |g| g[j]);
                let e = relative_error(analytic, numeric);
                if e > worst.rel_error {
                    worst = ParamCheck { index: j, analytic, numeric, rel_error: e, ..worst };
                }
            }
            Ok(worst)
        })
        .collect()
}
