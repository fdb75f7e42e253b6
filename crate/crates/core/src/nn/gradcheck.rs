use super::graph::{Graph, NodeId};
use super::layers::ParamSet;
use crate::error::{Error, Result};

/// Compares graph gradients of a scalar function with central differences.
///
/// `f` builds the function on a fresh graph from the attached parameter
/// nodes and returns the `1 x 1` output node. Returns the largest
/// `|analytic - numeric| / (|numeric| + 1e-8)` over all scalars.
pub fn finite_difference_check<F>(f: F, point: &ParamSet, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    let eval = |p: &ParamSet| -> Result<f64> {
        let mut g = Graph::new();
        let ids = p.attach(&mut g);
        let out = f(&mut g, &ids)?;
        let v = g.scalar(out);
        if !v.is_finite() {
            return Err(Error::NonFinite("function value".into()));
        }
        Ok(v)
    };

    let mut g = Graph::new();
    let ids = point.attach(&mut g);
    let out = f(&mut g, &ids)?;
    if !g.scalar(out).is_finite() {
        return Err(Error::NonFinite("function value".into()));
    }
    let grads = g.backward(out)?;
    // logical (row-major) order, whatever the memory layout
    let analytic: Vec<Vec<f64>> = grads
        .collect(&ids, point.values())
        .iter()
        .map(|m| m.iter().copied().collect())
        .collect();

    let mut worst: f64 = 0.0;
    let mut probe = point.clone();
    for k in 0..point.len() {
        for j in 0..point.values()[k].len() {
            let base = point.values()[k].as_slice().expect("standard layout")[j];
            probe.values_mut()[k].as_slice_mut().unwrap()[j] = base + eps;
            let up = eval(&probe)?;
            probe.values_mut()[k].as_slice_mut().unwrap()[j] = base - eps;
            let down = eval(&probe)?;
            probe.values_mut()[k].as_slice_mut().unwrap()[j] = base;

            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[k][j];
            worst = worst.max((a - numeric).abs() / (numeric.abs() + 1e-8));
        }
    }
    Ok(worst)
}
