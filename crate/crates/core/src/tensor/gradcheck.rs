use super::{Graph, NodeId, Tensor};
use crate::error::Result;

/// Outcome of comparing reverse-mode gradients to central finite differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (parameter index, element index) where the maximum occurred.
    pub worst: (usize, usize),
    pub checked: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// Gradients below this magnitude are compared absolutely.
const REL_FLOOR: f64 = 1e-6;

/// Checks `d loss / d params` against central differences with step `step`.
///
/// `loss` builds a scalar on a fresh graph from the parameter nodes; it must be
/// deterministic.
pub fn grad_check<F>(params: &[Tensor<f64>], loss: F, step: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let ids: Vec<NodeId> = params.iter().map(|p| g.param(p.clone())).collect();
    let root = loss(&mut g, &ids)?;
    g.backward(root)?;
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| g.grad(id).map(<[f64]>::to_vec).unwrap_or_default())
        .collect();

    let eval = |perturbed: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = perturbed.iter().map(|p| g.constant(p.clone())).collect();
        let root = loss(&mut g, &ids)?;
        Ok(g.value(root).item())
    };

    let mut work: Vec<Tensor<f64>> = params.to_vec();
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: (0, 0), checked: 0, tolerance };
    for p in 0..params.len() {
        for (e, &a) in analytic[p].iter().enumerate() {
            let orig = params[p].data()[e];
            work[p].data_mut()[e] = orig + step;
            let plus = eval(&work)?;
            work[p].data_mut()[e] = orig - step;
            let minus = eval(&work)?;
            work[p].data_mut()[e] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            if rel > report.max_rel_error || report.checked == 0 {
                report.max_rel_error = rel;
                report.worst = (p, e);
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
