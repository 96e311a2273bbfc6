//! Concept insertion and deletion curves.
//!
//! Concepts are removed from (or added to) the composition scores in a given
//! order by zeroing their columns without renormalizing, and the accuracy of
//! the decomposed logits is tracked relative to the unmasked model.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{argmax, concept_class_contributions, forward, BiIceConfig, BiIceParams, ForwardTrace};
use crate::numerics::{vec_mat, Mat, Real, RngState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveMode {
    Insertion,
    Deletion,
}

/// Normalized accuracy along a concept masking schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveResult {
    pub mode: CurveMode,
    /// Fractions of concepts inserted or deleted: `0, 1/K, …, 1`.
    pub grid: Vec<f64>,
    /// Accuracy relative to the unmasked model, clipped to `[0, 1]`.
    pub f: Vec<f64>,
    /// Raw accuracy at each grid point.
    pub accuracy: Vec<f64>,
    /// Trapezoid area under `f`.
    pub auc: f64,
}

/// Pointwise mean and standard deviation over random orders.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineCurves {
    pub mean: CurveResult,
    pub std: Vec<f64>,
    pub curves: Vec<CurveResult>,
}

/// Logits with the composition columns outside `keep` zeroed.
pub fn masked_logits<T: Real>(trace: &ForwardTrace<T>, params: &BiIceParams<T>, keep: &[usize]) -> Result<Vec<T>> {
    let k = trace.phi.cols();
    if let Some(&bad) = keep.iter().find(|&&c| c >= k) {
        return Err(Error::Contract(format!("concept {bad} out of range for K={k}")));
    }
    let contrib = concept_class_contributions(&trace.zeta_refined, &params.v_omega, &params.head)?;
    let means = trace.phi.col_means();
    let mut mass = vec![T::zero(); k];
    for &c in keep {
        mass[c] = means[c];
    }
    Ok(vec_mat(&mass, &contrib))
}

/// Per-sample quantities needed to score any concept mask.
pub struct MaskingContext {
    /// Patch-averaged composition mass per sample, `M×K`.
    mass: Mat<f64>,
    /// Per-sample `K×N` class contributions.
    contrib: Vec<Mat<f64>>,
    labels: Vec<usize>,
    full_accuracy: f64,
}

impl MaskingContext {
    pub fn new<T: Real>(params: &BiIceParams<T>, cfg: &BiIceConfig, data: &Dataset<T>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Evaluation("no samples to evaluate".into()));
        }
        let mut mass = Vec::with_capacity(data.len() * cfg.concepts);
        let mut contrib = Vec::with_capacity(data.len());
        let mut correct = 0;
        for (z, &y) in data.samples.iter().zip(&data.labels) {
            let trace = forward(z, params, cfg)?;
            correct += (trace.predicted_class() == y) as usize;
            mass.extend(trace.phi.col_means().into_iter().map(Real::as_f64));
            contrib.push(concept_class_contributions(&trace.zeta_refined, &params.v_omega, &params.head)?.cast());
        }
        Ok(MaskingContext {
            mass: Mat::from_vec(data.len(), cfg.concepts, mass)?,
            contrib,
            labels: data.labels.clone(),
            full_accuracy: correct as f64 / data.len() as f64,
        })
    }

    pub fn concepts(&self) -> usize {
        self.mass.cols()
    }

    pub fn full_accuracy(&self) -> f64 {
        self.full_accuracy
    }

    /// Dataset-mean composition mass of every concept.
    pub fn mean_mass(&self) -> Vec<f64> {
        self.mass.col_means()
    }

    /// Accuracy with only the concepts flagged in `keep` contributing.
    pub fn accuracy(&self, keep: &[bool]) -> f64 {
        let mut correct = 0;
        for (i, c) in self.contrib.iter().enumerate() {
            let mass: Vec<f64> = self
                .mass
                .row(i)
                .iter()
                .zip(keep)
                .map(|(&m, &k)| if k { m } else { 0.0 })
                .collect();
            correct += (argmax(&vec_mat(&mass, c)) == self.labels[i]) as usize;
        }
        correct as f64 / self.labels.len() as f64
    }

    /// Concepts by descending mean mass, ties by ascending id.
    pub fn importance_order(&self) -> Vec<usize> {
        let mass = self.mean_mass();
        let mut order: Vec<usize> = (0..mass.len()).collect();
        order.sort_by(|&a, &b| mass[b].total_cmp(&mass[a]).then(a.cmp(&b)));
        order
    }

    pub fn curve(&self, mode: CurveMode, order: &[usize]) -> Result<CurveResult> {
        let k = self.concepts();
        let mut seen = vec![false; k];
        if order.len() != k || order.iter().any(|&c| c >= k || std::mem::replace(&mut seen[c], true)) {
            return Err(Error::Contract(format!("order {order:?} is not a permutation of 0..{k}")));
        }
        if self.full_accuracy == 0.0 {
            return Err(Error::Evaluation(
                "unmasked accuracy is zero; normalized curve undefined".into(),
            ));
        }
        let mut keep = vec![mode == CurveMode::Deletion; k];
        let mut accuracy = Vec::with_capacity(k + 1);
        for m in 0..=k {
            if m > 0 {
                keep[order[m - 1]] = mode == CurveMode::Insertion;
            }
            accuracy.push(self.accuracy(&keep));
        }
        // The all-concepts point is the unmasked model by construction.
        match mode {
            CurveMode::Deletion => accuracy[0] = self.full_accuracy,
            CurveMode::Insertion => accuracy[k] = self.full_accuracy,
        }
        let f: Vec<f64> = accuracy
            .iter()
            .map(|a| (a / self.full_accuracy).clamp(0.0, 1.0))
            .collect();
        let grid: Vec<f64> = (0..=k).map(|m| m as f64 / k as f64).collect();
        Ok(CurveResult {
            mode,
            auc: trapezoid(&grid, &f),
            grid,
            f,
            accuracy,
        })
    }

    pub fn random_baseline(&self, mode: CurveMode, repeats: usize, seed: u64) -> Result<BaselineCurves> {
        if repeats == 0 {
            return Err(Error::Contract("at least one random order is required".into()));
        }
        let rng = RngState::new(seed);
        let curves = (0..repeats)
            .map(|r| {
                let mut order: Vec<usize> = (0..self.concepts()).collect();
                order.shuffle(&mut rng.split(r as u64));
                self.curve(mode, &order)
            })
            .collect::<Result<Vec<_>>>()?;
        let points = curves[0].f.len();
        let n = repeats as f64;
        let mean_f: Vec<f64> = (0..points)
            .map(|j| curves.iter().map(|c| c.f[j]).sum::<f64>() / n)
            .collect();
        let mean_acc: Vec<f64> = (0..points)
            .map(|j| curves.iter().map(|c| c.accuracy[j]).sum::<f64>() / n)
            .collect();
        let std: Vec<f64> = (0..points)
            .map(|j| {
                let var = curves.iter().map(|c| (c.f[j] - mean_f[j]).powi(2)).sum::<f64>() / n;
                var.sqrt()
            })
            .collect();
        let grid = curves[0].grid.clone();
        let mean = CurveResult {
            mode,
            auc: trapezoid(&grid, &mean_f),
            grid,
            f: mean_f,
            accuracy: mean_acc,
        };
        Ok(BaselineCurves { mean, std, curves })
    }
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| (xs[1] - xs[0]) * (ys[0] + ys[1]) / 2.0)
        .sum()
}

/// Removes concepts in `order`, most important first.
pub fn c_deletion_curve<T: Real>(
    params: &BiIceParams<T>,
    cfg: &BiIceConfig,
    data: &Dataset<T>,
    order: &[usize],
) -> Result<CurveResult> {
    MaskingContext::new(params, cfg, data)?.curve(CurveMode::Deletion, order)
}

/// Adds concepts in `order` to an empty mask, most important first.
pub fn c_insertion_curve<T: Real>(
    params: &BiIceParams<T>,
    cfg: &BiIceConfig,
    data: &Dataset<T>,
    order: &[usize],
) -> Result<CurveResult> {
    MaskingContext::new(params, cfg, data)?.curve(CurveMode::Insertion, order)
}

/// Curves for `repeats` seeded random orders.
pub fn random_baseline_curves<T: Real>(
    params: &BiIceParams<T>,
    cfg: &BiIceConfig,
    data: &Dataset<T>,
    mode: CurveMode,
    repeats: usize,
    seed: u64,
) -> Result<BaselineCurves> {
    MaskingContext::new(params, cfg, data)?.random_baseline(mode, repeats, seed)
}

/// Concepts ranked by dataset-mean composition mass.
pub fn importance_order<T: Real>(params: &BiIceParams<T>, cfg: &BiIceConfig, data: &Dataset<T>) -> Result<Vec<usize>> {
    Ok(MaskingContext::new(params, cfg, data)?.importance_order())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SynthConfig};
    use crate::model::{decomposed_logits, NormAxis};

    fn setup(concepts: usize) -> (BiIceConfig, BiIceParams<f64>, Dataset<f64>) {
        let sc = SynthConfig {
            classes: 2,
            concepts: 4,
            dim: 6,
            patches: 4,
            samples: 30,
            noise: 0.1,
            concepts_per_class: 2,
            k_global: 0,
            seed: 3,
        };
        let out = generate_synthetic(&sc).unwrap();
        let ds = Dataset::from_files(&out.data, None).unwrap();
        let cfg = BiIceConfig::new(concepts, 6, 4, 2);
        // Pick an initialization with nonzero unmasked accuracy.
        let p = (0..)
            .map(|s| BiIceParams::init(&cfg, &mut RngState::new(s)).unwrap())
            .find(|p| MaskingContext::new(p, &cfg, &ds).unwrap().full_accuracy() > 0.0)
            .unwrap();
        (cfg, p, ds)
    }

    #[test]
    fn masked_logits_edge_cases() {
        let (cfg, p, ds) = setup(4);
        let trace = forward(&ds.samples[0], &p, &cfg).unwrap();
        let all = masked_logits(&trace, &p, &[0, 1, 2, 3]).unwrap();
        for (a, b) in all.iter().zip(&trace.logits) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(masked_logits(&trace, &p, &[]).unwrap().iter().all(|&x| x == 0.0));
        let contrib = concept_class_contributions(&trace.zeta_refined, &p.v_omega, &p.head).unwrap();
        let mass = trace.phi.col_means()[2];
        let single = masked_logits(&trace, &p, &[2]).unwrap();
        for i in 0..2 {
            assert!((single[i] - mass * contrib.get(2, i)).abs() < 1e-15);
        }
        assert!(masked_logits(&trace, &p, &[4]).is_err());
        let mut phi = trace.phi.clone();
        for l in 0..4 {
            phi.set(l, 1, 0.0);
            phi.set(l, 3, 0.0);
        }
        let direct = decomposed_logits(&phi, &trace.zeta_refined, &p.v_omega, &p.head).unwrap();
        let masked = masked_logits(&trace, &p, &[0, 2]).unwrap();
        for (a, b) in direct.iter().zip(&masked) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn normalization_endpoints() {
        let (cfg, p, ds) = setup(4);
        let ctx = MaskingContext::new(&p, &cfg, &ds).unwrap();
        let order = ctx.importance_order();
        let del = ctx.curve(CurveMode::Deletion, &order).unwrap();
        let ins = ctx.curve(CurveMode::Insertion, &order).unwrap();
        assert_eq!(del.f[0], 1.0);
        assert_eq!(ins.f[4], 1.0);
        assert_eq!(del.grid, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(del.f.iter().chain(&ins.f).all(|&f| (0.0..=1.0).contains(&f)));
        assert!(ctx.curve(CurveMode::Deletion, &[0, 0, 1, 2]).is_err());
    }

    #[test]
    fn single_concept_gives_two_points() {
        let (cfg, p, ds) = setup(1);
        let c = c_deletion_curve(&p, &cfg, &ds, &[0]).unwrap();
        assert_eq!(c.grid, vec![0.0, 1.0]);
        assert_eq!(c.f[0], 1.0);
        assert_eq!(c.f.len(), 2);
    }

    #[test]
    fn zero_accuracy_is_undefined() {
        let (cfg, mut p, ds) = setup(2);
        // A head that always prefers a class no sample has.
        let ds = ds.subset(&ds.class_indices(1));
        p.head = Mat::zeros(6, 2);
        let ctx = MaskingContext::new(&p, &cfg, &ds).unwrap();
        assert_eq!(ctx.full_accuracy(), 0.0);
        assert!(matches!(ctx.curve(CurveMode::Deletion, &[0, 1]), Err(Error::Evaluation(_))));
    }

    #[test]
    fn baseline_properties() {
        let (cfg, p, ds) = setup(4);
        let ctx = MaskingContext::new(&p, &cfg, &ds).unwrap();
        let one = ctx.random_baseline(CurveMode::Insertion, 1, 5).unwrap();
        assert_eq!(one.mean.f, one.curves[0].f);
        assert!(one.std.iter().all(|&s| s == 0.0));

        let many = ctx.random_baseline(CurveMode::Deletion, 10, 5).unwrap();
        assert_eq!(many.std[0], 0.0);
        for j in 0..many.mean.f.len() {
            let lo = many.curves.iter().map(|c| c.f[j]).fold(f64::INFINITY, f64::min);
            let hi = many.curves.iter().map(|c| c.f[j]).fold(f64::NEG_INFINITY, f64::max);
            assert!(many.mean.f[j] >= lo - 1e-15 && many.mean.f[j] <= hi + 1e-15);
        }
        let auc_mean: f64 = many.curves.iter().map(|c| c.auc).sum::<f64>() / 10.0;
        assert!((auc_mean - many.mean.auc).abs() < 1e-12);
        assert!(ctx.random_baseline(CurveMode::Deletion, 0, 5).is_err());
    }

    #[test]
    fn ranking_ties_and_dominance() {
        let (cfg, mut p, ds) = setup(4);
        p.q_omega.weight = Mat::zeros(6, 6);
        assert_eq!(importance_order(&p, &cfg, &ds).unwrap(), vec![0, 1, 2, 3]);

        // Per-concept simplex with one concept owning every patch.
        let cfg = cfg.with_norm_axis(NormAxis::Concepts);
        let (_, mut p, _) = setup(4);
        p.q_omega.weight = Mat::identity(6).scale(50.0);
        p.k_omega.weight = Mat::zeros(6, 6);
        p.bank.zeta = Mat::zeros(4, 6);
        let ctx = MaskingContext::new(&p, &cfg, &ds).unwrap();
        assert_eq!(ctx.importance_order(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn trapezoid_area() {
        assert_eq!(trapezoid(&[0.0, 0.5, 1.0], &[1.0, 1.0, 1.0]), 1.0);
        assert_eq!(trapezoid(&[0.0, 1.0], &[0.0, 1.0]), 0.5);
    }
}
