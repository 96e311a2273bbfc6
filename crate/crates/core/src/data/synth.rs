use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{AnnotationData, EmbeddingDataset};
use crate::error::{Error, Result};
use crate::numerics::{Mat, RngState};

// Stream ids disjoint from the ones the trainer draws from the same seed.
const PLANTED_STREAM: u64 = 0x5359_4e54_0001;
const PATCH_STREAM: u64 = 0x5359_4e54_0002;

fn default_noise() -> f64 {
    0.1
}

fn default_per_class() -> usize {
    2
}

/// Parameters of the planted-concept generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    /// Number of classes `N`.
    pub classes: usize,
    /// Number of planted concepts.
    pub concepts: usize,
    pub dim: usize,
    pub patches: usize,
    pub samples: usize,
    /// Standard deviation of the additive Gaussian patch noise.
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_per_class")]
    pub concepts_per_class: usize,
    /// Leading planted concepts annotated at image level rather than per patch.
    #[serde(default)]
    pub k_global: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.classes == 0 || self.dim == 0 || self.patches == 0 {
            return err("classes, dim and patches must be at least 1".into());
        }
        if self.concepts < self.classes {
            return err(format!(
                "{} planted concepts cannot cover {} classes",
                self.concepts, self.classes
            ));
        }
        if self.concepts_per_class == 0 || self.concepts_per_class > self.concepts {
            return err(format!(
                "concepts_per_class must be in 1..={}, got {}",
                self.concepts, self.concepts_per_class
            ));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return err(format!("noise must be a finite nonnegative number, got {}", self.noise));
        }
        if self.k_global > self.concepts {
            return err(format!("k_global {} exceeds {} concepts", self.k_global, self.concepts));
        }
        Ok(())
    }

    /// Concept subsets owned by each class, assigned round robin.
    pub fn class_subsets(&self) -> Result<Vec<Vec<usize>>> {
        self.validate()?;
        let subsets: Vec<Vec<usize>> = (0..self.classes)
            .map(|y| {
                (0..self.concepts_per_class)
                    .map(|j| (y * self.concepts_per_class + j) % self.concepts)
                    .collect()
            })
            .collect();
        let distinct: BTreeSet<BTreeSet<usize>> = subsets
            .iter()
            .map(|s| s.iter().copied().collect())
            .collect();
        if distinct.len() != subsets.len() {
            return Err(Error::Config(format!(
                "cannot give {} classes distinct subsets of {} out of {} concepts",
                self.classes, self.concepts_per_class, self.concepts
            )));
        }
        Ok(subsets)
    }
}

/// Generated data together with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthOutput {
    pub data: EmbeddingDataset,
    pub annotations: AnnotationData,
    /// Planted concept vectors, one unit-norm row each, exactly representable
    /// in the `f32` storage format.
    pub planted: Mat<f64>,
    pub subsets: Vec<Vec<usize>>,
}

/// Unit rows from Gram-Schmidt on Gaussian draws; rows beyond the dimension
/// are normalized draws.
fn planted_basis(k: usize, d: usize, rng: &mut RngState) -> Mat<f64> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(k);
    for i in 0..k {
        loop {
            let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            if i < d {
                for r in &rows {
                    let p: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(r).for_each(|(a, b)| *a -= p * b);
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                v.iter_mut().for_each(|x| *x /= norm);
                rows.push(v);
                break;
            }
        }
    }
    let data = rows.into_iter().flatten().map(|x| x as f32 as f64).collect();
    Mat::from_vec(k, d, data).expect("k·d values")
}

/// Draws a dataset whose patches are noisy copies of planted concepts.
///
/// Sample `i` has class `i mod N`; each of its patches copies a concept drawn
/// uniformly from the class subset and adds `N(0, noise²)` per coordinate.
/// Global annotations mark which leading concepts the class owns; spatial
/// annotations are one-hot at each patch's chosen concept.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SynthOutput> {
    let subsets = cfg.class_subsets()?;
    let root = RngState::new(cfg.seed);
    let planted = planted_basis(cfg.concepts, cfg.dim, &mut root.split(PLANTED_STREAM));
    let mut rng = root.split(PATCH_STREAM);
    let (l, d) = (cfg.patches, cfg.dim);
    let k_spatial = cfg.concepts - cfg.k_global;

    let mut values = Vec::with_capacity(cfg.samples * l * d);
    let mut labels = Vec::with_capacity(cfg.samples);
    let mut ann = Vec::with_capacity(cfg.samples * (cfg.k_global + l * k_spatial));
    for i in 0..cfg.samples {
        let y = i % cfg.classes;
        let subset = &subsets[y];
        labels.push(y as u32);
        ann.extend((0..cfg.k_global).map(|c| subset.contains(&c) as u8));
        for _ in 0..l {
            let c = subset[rng.gen_range(0..subset.len())];
            for j in 0..d {
                let noise: f64 = if cfg.noise > 0.0 {
                    cfg.noise * rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                };
                values.push((planted.get(c, j) + noise) as f32);
            }
            ann.extend((cfg.k_global..cfg.concepts).map(|s| (s == c) as u8));
        }
    }
    Ok(SynthOutput {
        data: EmbeddingDataset::new(cfg.samples, l, d, cfg.classes, values, labels)?,
        annotations: AnnotationData::new(cfg.samples, l, cfg.k_global, k_spatial, ann)?,
        planted,
        subsets,
    })
}

/// The planted vectors as a one-sample `BIEM1` dataset (`L = K`).
pub fn planted_as_dataset(planted: &Mat<f64>) -> EmbeddingDataset {
    let values = planted.data().iter().map(|&x| x as f32).collect();
    EmbeddingDataset::new(1, planted.rows(), planted.cols(), 1, values, vec![0]).expect("consistent")
}
