use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{forward, split_composition, BiIceConfig, BiIceParams};
use crate::numerics::{Mat, Real};

/// Threshold above which a spatial composition score marks a patch as
/// activated.
pub const ACTIVATION_THRESHOLD: f64 = 0.6;

/// A patch whose score for a spatial concept exceeds the threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivatedPatch {
    pub patch: usize,
    /// Column of the spatial block (add `K_global` for the model-wide id).
    pub concept: usize,
    pub score: f64,
}

/// Per-sample spatial scores and their activated patches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleImportance {
    pub index: usize,
    pub phi_global: Vec<f64>,
    pub phi_spatial: Mat<f64>,
    pub activated: Vec<ActivatedPatch>,
}

/// Concept contributions for one class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub class: usize,
    /// Mean patch-averaged global score over the class's samples.
    pub global: Vec<f64>,
    pub samples: Vec<SampleImportance>,
}

/// All `(patch, concept, score)` with `score > threshold`, highest first.
/// Ties keep patch-major order.
pub fn activated_patches<T: Real>(phi_spatial: &Mat<T>, threshold: f64) -> Result<Vec<ActivatedPatch>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Contract(format!("threshold {threshold} outside (0, 1]")));
    }
    let mut hits: Vec<ActivatedPatch> = (0..phi_spatial.rows())
        .flat_map(|l| (0..phi_spatial.cols()).map(move |k| (l, k)))
        .filter_map(|(l, k)| {
            let score = phi_spatial.get(l, k).as_f64();
            (score > threshold).then_some(ActivatedPatch {
                patch: l,
                concept: k,
                score,
            })
        })
        .collect();
    hits.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(hits)
}

/// Averages the global scores of every sample of `class` and keeps each
/// sample's spatial scores and activated patches.
pub fn concept_importance<T: Real>(
    params: &BiIceParams<T>,
    cfg: &BiIceConfig,
    data: &Dataset<T>,
    class: usize,
    threshold: f64,
) -> Result<ImportanceReport> {
    let members = data.class_indices(class);
    if members.is_empty() {
        return Err(Error::Evaluation(format!("no samples of class {class}")));
    }
    let mut global = vec![0.0; cfg.global_concepts];
    let mut samples = Vec::with_capacity(members.len());
    for &i in &members {
        let trace = forward(&data.samples[i], params, cfg)?;
        let (g, s) = split_composition(&trace.phi, cfg.global_concepts)?;
        let g: Vec<f64> = g.into_iter().map(Real::as_f64).collect();
        for (acc, x) in global.iter_mut().zip(&g) {
            *acc += x;
        }
        samples.push(SampleImportance {
            index: i,
            phi_global: g,
            activated: activated_patches(&s, threshold)?,
            phi_spatial: s.cast(),
        });
    }
    let n = members.len() as f64;
    global.iter_mut().for_each(|x| *x /= n);
    Ok(ImportanceReport {
        class,
        global,
        samples,
    })
}
