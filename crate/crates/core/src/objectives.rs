//! Classification, explanation and sparsity losses.
//!
//! All three are per-sample quantities; the trainer averages them over a
//! minibatch before weighting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Mat, Real};

/// Per-sample binary concept annotations.
#[derive(Clone, Debug, PartialEq)]
pub struct Annotation<T = f64> {
    /// Image-level presence of each global concept.
    pub global: Vec<T>,
    /// Patch-level presence of each spatial concept, `L×K_spatial`.
    pub spatial: Mat<T>,
}

impl<T: Real> Annotation<T> {
    /// Builds an annotation from 0/1 bytes, rejecting any other value.
    pub fn from_bytes(global: &[u8], spatial: &[u8], patches: usize, k_spatial: usize) -> Result<Self> {
        if spatial.len() != patches * k_spatial {
            return Err(Error::shape(
                "Annotation",
                format!("{} spatial entries for {patches}x{k_spatial}", spatial.len()),
            ));
        }
        if let Some(b) = global.iter().chain(spatial).find(|&&b| b > 1) {
            return Err(Error::Contract(format!("annotation entry {b} is not binary")));
        }
        let cv = |b: &u8| if *b == 1 { T::one() } else { T::zero() };
        Ok(Annotation {
            global: global.iter().map(cv).collect(),
            spatial: Mat::from_vec(patches, k_spatial, spatial.iter().map(cv).collect())?,
        })
    }
}

/// Relative weights of the explanation and sparsity terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_expl: f64,
    pub lambda_sparse: f64,
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_expl >= 0.0 && self.lambda_sparse >= 0.0 {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "loss weights must be nonnegative, got lambda_expl={} lambda_sparse={}",
                self.lambda_expl, self.lambda_sparse
            )))
        }
    }
}

/// `-ln softmax(logits)[label]`.
pub fn cross_entropy<T: Real>(logits: &[T], label: usize) -> Result<T> {
    if label >= logits.len() {
        return Err(Error::Contract(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().fold(T::neg_infinity(), |acc, &x| acc.max(x));
    let lse = logits.iter().fold(T::zero(), |acc, &x| acc + (x - max).exp()).ln() + max;
    Ok(lse - logits[label])
}

/// Gradient of [`cross_entropy`] with respect to the logits.
pub(crate) fn cross_entropy_grad<T: Real>(logits: &[T], label: usize) -> Vec<T> {
    let max = logits.iter().fold(T::neg_infinity(), |acc, &x| acc.max(x));
    let exps: Vec<T> = logits.iter().map(|&x| (x - max).exp()).collect();
    let total = exps.iter().fold(T::zero(), |acc, &x| acc + x);
    exps.iter()
        .enumerate()
        .map(|(i, &e)| e / total - if i == label { T::one() } else { T::zero() })
        .collect()
}

/// Squared error between composition scores and annotations, summed over
/// the global vector and the spatial matrix.
pub fn explanation_loss<T: Real>(
    phi_global: &[T],
    phi_spatial: &Mat<T>,
    ann: Option<&Annotation<T>>,
) -> Result<T> {
    let ann = ann.ok_or_else(|| {
        Error::Contract("explanation loss needs annotations; set lambda_expl = 0 instead".into())
    })?;
    if ann.global.len() != phi_global.len() || ann.spatial.shape() != phi_spatial.shape() {
        return Err(Error::shape(
            "explanation_loss",
            format!(
                "scores {}+{:?} vs annotations {}+{:?}",
                phi_global.len(),
                phi_spatial.shape(),
                ann.global.len(),
                ann.spatial.shape()
            ),
        ));
    }
    let global = phi_global
        .iter()
        .zip(&ann.global)
        .fold(T::zero(), |acc, (&a, &q)| acc + (a - q) * (a - q));
    let spatial = phi_spatial
        .data()
        .iter()
        .zip(ann.spatial.data())
        .fold(T::zero(), |acc, (&a, &q)| acc + (a - q) * (a - q));
    Ok(global + spatial)
}

/// Gradient of [`explanation_loss`] with respect to the full `L×K`
/// composition matrix whose leading `K_global` columns are patch-averaged.
pub(crate) fn explanation_grad<T: Real>(phi: &Mat<T>, ann: &Annotation<T>) -> Mat<T> {
    let k_global = ann.global.len();
    let l = phi.rows();
    let means = phi.col_means();
    let two = T::lit(2.0);
    let inv_l = T::one() / T::lit(l as f64);
    let mut g = Mat::zeros(l, phi.cols());
    for r in 0..l {
        for c in 0..phi.cols() {
            let v = if c < k_global {
                two * (means[c] - ann.global[c]) * inv_l
            } else {
                two * (phi.get(r, c) - ann.spatial.get(r, c - k_global))
            };
            g.set(r, c, v);
        }
    }
    g
}

const ENTROPY_TOLERANCE: f64 = 1e-9;

/// Mean of `-a ln a` over every entry, with `0 ln 0 = 0`.
pub fn sparsity_entropy<T: Real>(phi: &Mat<T>) -> Result<T> {
    if phi.is_empty() {
        return Err(Error::Contract("sparsity entropy of an empty matrix".into()));
    }
    let tol = T::lit(ENTROPY_TOLERANCE);
    if let Some(a) = phi
        .data()
        .iter()
        .find(|&&a| !(a >= -tol && a <= T::one() + tol))
    {
        return Err(Error::Contract(format!(
            "composition score {a} outside [0, 1]"
        )));
    }
    let total = phi.data().iter().fold(T::zero(), |acc, &a| {
        if a > T::zero() {
            acc - a * a.ln()
        } else {
            acc
        }
    });
    Ok(total / T::lit(phi.len() as f64))
}

pub(crate) fn sparsity_grad<T: Real>(phi: &Mat<T>) -> Mat<T> {
    let n = T::lit(phi.len() as f64);
    phi.map(|a| {
        if a > T::zero() {
            -(a.ln() + T::one()) / n
        } else {
            T::zero()
        }
    })
}

/// `cls + λ_expl·expl + λ_sparse·sparse`.
///
/// `expl` may be `None` only when `λ_expl = 0`.
pub fn total_loss<T: Real>(cls: T, expl: Option<T>, sparse: T, w: &LossWeights) -> Result<T> {
    let expl_term = match expl {
        Some(e) => T::lit(w.lambda_expl) * e,
        None if w.lambda_expl == 0.0 => T::zero(),
        None => {
            return Err(Error::Contract(
                "lambda_expl > 0 requires an explanation loss".into(),
            ))
        }
    };
    Ok(cls + expl_term + T::lit(w.lambda_sparse) * sparse)
}
