use super::forward::{backward, check_input, forward_cached};
use super::{split_composition, BiIceConfig, BiIceParams};
use crate::error::{Error, Result};
use crate::numerics::{Mat, Real};
use crate::objectives::{
    cross_entropy, cross_entropy_grad, explanation_grad, explanation_loss, sparsity_entropy,
    sparsity_grad, total_loss, Annotation, LossWeights,
};

/// One training example: patch embeddings, class id and optional annotations.
#[derive(Clone, Copy, Debug)]
pub struct Sample<'a, T = f64> {
    pub z: &'a Mat<T>,
    pub label: usize,
    pub annotation: Option<&'a Annotation<T>>,
}

/// Batch-mean loss terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub cls: f64,
    /// `None` when the explanation term is disabled.
    pub expl: Option<f64>,
    pub sparse: f64,
    /// Correctly classified samples in the batch.
    pub correct: usize,
    pub count: usize,
}

struct SampleLoss<T> {
    cls: T,
    expl: Option<T>,
    sparse: T,
    correct: bool,
}

fn sample_loss<T: Real>(
    trace: &super::ForwardTrace<T>,
    sample: &Sample<'_, T>,
    cfg: &BiIceConfig,
    weights: &LossWeights,
) -> Result<SampleLoss<T>> {
    let cls = cross_entropy(&trace.logits, sample.label)?;
    let expl = if weights.lambda_expl > 0.0 {
        let (g, s) = split_composition(&trace.phi, cfg.global_concepts)?;
        Some(explanation_loss(&g, &s, sample.annotation)?)
    } else {
        None
    };
    let sparse = sparsity_entropy(&trace.phi)?;
    Ok(SampleLoss {
        cls,
        expl,
        sparse,
        correct: trace.predicted_class() == sample.label,
    })
}

fn reduce<T: Real>(losses: &[SampleLoss<T>], weights: &LossWeights) -> Result<LossBreakdown> {
    let n = T::lit(losses.len() as f64);
    let mean = |f: &dyn Fn(&SampleLoss<T>) -> T| losses.iter().fold(T::zero(), |acc, s| acc + f(s)) / n;
    let cls = mean(&|s| s.cls);
    let sparse = mean(&|s| s.sparse);
    let expl = if weights.lambda_expl > 0.0 {
        Some(mean(&|s| s.expl.unwrap_or_else(T::zero)))
    } else {
        None
    };
    let total = total_loss(cls, expl, sparse, weights)?;
    Ok(LossBreakdown {
        total: total.as_f64(),
        cls: cls.as_f64(),
        expl: expl.map(Real::as_f64),
        sparse: sparse.as_f64(),
        correct: losses.iter().filter(|s| s.correct).count(),
        count: losses.len(),
    })
}

fn check_batch<T: Real>(
    params: &BiIceParams<T>,
    cfg: &BiIceConfig,
    batch: &[Sample<'_, T>],
    weights: &LossWeights,
) -> Result<()> {
    weights.validate()?;
    if batch.is_empty() {
        return Err(Error::Contract("empty minibatch".into()));
    }
    for s in batch {
        check_input(s.z, params, cfg)?;
        if s.label >= cfg.classes {
            return Err(Error::Contract(format!(
                "label {} out of range for {} classes",
                s.label, cfg.classes
            )));
        }
    }
    Ok(())
}

/// Batch-mean loss without gradients.
pub fn batch_loss<T: Real>(
    params: &BiIceParams<T>,
    cfg: &BiIceConfig,
    batch: &[Sample<'_, T>],
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    check_batch(params, cfg, batch, weights)?;
    let losses = batch
        .iter()
        .map(|s| sample_loss(&forward_cached(s.z, params, cfg).0, s, cfg, weights))
        .collect::<Result<Vec<_>>>()?;
    reduce(&losses, weights)
}

/// Batch-mean loss and its exact gradient with respect to every parameter.
///
/// Per-sample gradients are accumulated in batch order and divided by the
/// batch size.
pub fn loss_and_gradient<T: Real>(
    params: &BiIceParams<T>,
    cfg: &BiIceConfig,
    batch: &[Sample<'_, T>],
    weights: &LossWeights,
) -> Result<(LossBreakdown, BiIceParams<T>)> {
    check_batch(params, cfg, batch, weights)?;
    let mut grads = BiIceParams::zeros(cfg);
    let mut losses = Vec::with_capacity(batch.len());
    let lambda_expl = T::lit(weights.lambda_expl);
    let lambda_sparse = T::lit(weights.lambda_sparse);
    for s in batch {
        let (trace, cache) = forward_cached(s.z, params, cfg);
        let loss = sample_loss(&trace, s, cfg, weights)?;
        let d_logits = cross_entropy_grad(&trace.logits, s.label);
        let mut d_phi = sparsity_grad(&trace.phi).scale(lambda_sparse);
        if let (Some(_), Some(ann)) = (loss.expl, s.annotation) {
            d_phi.add_assign(&explanation_grad(&trace.phi, ann).scale(lambda_expl));
        }
        backward(s.z, params, cfg, &trace, &cache, &d_logits, &d_phi, &mut grads);
        losses.push(loss);
    }
    grads.scale_in_place(T::one() / T::lit(batch.len() as f64));
    Ok((reduce(&losses, weights)?, grads))
}
