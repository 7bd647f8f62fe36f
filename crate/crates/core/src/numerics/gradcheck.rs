//! Central finite-difference gradient checking.
//!
//! Only evaluates the forward function, so it is an oracle independent of
//! the tape's backward pass.

use super::{Graph, NodeId, ParamStore};
use crate::error::Result;

/// Magnitudes below this are compared absolutely rather than relatively.
pub const RELATIVE_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `(parameter name, flat index)` of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares `backward` against central differences with step `h` for every
/// parameter entry. `forward` must build a scalar on the supplied graph.
pub fn check_gradients<F>(params: &ParamStore, h: f64, forward: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_>) -> Result<NodeId>,
{
    let analytic = {
        let mut g = Graph::new(params);
        let root = forward(&mut g)?;
        g.backward(root)?
    };
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut g = Graph::inference(store);
        let root = forward(&mut g)?;
        Ok(g.value(root).item())
    };

    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        checked: 0,
    };
    for id in params.ids() {
        for k in 0..params.get(id).len() {
            let original = params.get(id).data()[k];
            probe.get_mut(id).data_mut()[k] = original + h;
            let up = eval(&probe)?;
            probe.get_mut(id).data_mut()[k] = original - h;
            let down = eval(&probe)?;
            probe.get_mut(id).data_mut()[k] = original;

            let numeric = (up - down) / (2.0 * h);
            let err = relative_error(analytic.get(id).data()[k], numeric);
            report.checked += 1;
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = report.max_relative_error.max(err);
                if err >= report.max_relative_error {
                    report.worst = Some((params.name(id).to_string(), k));
                }
            }
        }
    }
    Ok(report)
}
