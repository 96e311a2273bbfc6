use serde::Serialize;

use crate::error::Result;
use crate::model::{batch_loss, loss_and_gradient, BiIceConfig, BiIceParams, Sample, TENSOR_NAMES};
use crate::objectives::LossWeights;

/// Entries probed per tensor; smaller tensors are probed exhaustively.
pub const ENTRIES_PER_TENSOR: usize = 32;

/// Worst relative error between analytic and central-difference gradients.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Worst error of each tensor, in [`TENSOR_NAMES`] order.
    pub per_tensor: Vec<(&'static str, f64)>,
    pub entries_checked: usize,
}

fn probe_indices(len: usize) -> Vec<usize> {
    if len <= ENTRIES_PER_TENSOR {
        (0..len).collect()
    } else {
        (0..ENTRIES_PER_TENSOR).map(|i| i * len / ENTRIES_PER_TENSOR).collect()
    }
}

/// Compares `analytic` with central differences of the batch loss, scoring
/// each entry by `|analytic − numeric| / max(1, |numeric|)`.
pub fn compare_with_finite_differences(
    params: &BiIceParams<f64>,
    cfg: &BiIceConfig,
    batch: &[Sample<'_, f64>],
    weights: &LossWeights,
    analytic: &BiIceParams<f64>,
    eps: f64,
) -> Result<GradCheckReport> {
    let mut probe = params.clone();
    let mut per_tensor = Vec::with_capacity(TENSOR_NAMES.len());
    let mut entries = 0;
    for (t, (name, grad)) in analytic.tensors().into_iter().enumerate() {
        let mut worst: f64 = 0.0;
        for i in probe_indices(grad.len()) {
            let orig = probe.tensors()[t].1.data()[i];
            probe.tensors_mut()[t].1.data_mut()[i] = orig + eps;
            let plus = batch_loss(&probe, cfg, batch, weights)?.total;
            probe.tensors_mut()[t].1.data_mut()[i] = orig - eps;
            let minus = batch_loss(&probe, cfg, batch, weights)?.total;
            probe.tensors_mut()[t].1.data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = (grad.data()[i] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
            entries += 1;
        }
        per_tensor.push((name, worst));
    }
    Ok(GradCheckReport {
        max_rel_error: per_tensor.iter().fold(0.0, |a, &(_, e)| a.max(e)),
        per_tensor,
        entries_checked: entries,
    })
}

/// Checks [`loss_and_gradient`] against central differences with step `eps`.
pub fn gradient_check(
    params: &BiIceParams<f64>,
    cfg: &BiIceConfig,
    batch: &[Sample<'_, f64>],
    weights: &LossWeights,
    eps: f64,
) -> Result<GradCheckReport> {
    let (_, analytic) = loss_and_gradient(params, cfg, batch, weights)?;
    compare_with_finite_differences(params, cfg, batch, weights, &analytic, eps)
}
