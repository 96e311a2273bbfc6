use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, Mat, Real};

/// Per-epoch concept bank statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSeries {
    /// `drift[t]` is the Frobenius distance between snapshots `t` and `t+1`.
    pub drift: Vec<f64>,
    /// One minus the largest cosine between two distinct concepts.
    pub separation: Vec<f64>,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

/// Separation of a single bank. A bank with one concept has no pairs and
/// scores 1.
pub fn separation<T: Real>(zeta: &Mat<T>) -> f64 {
    let z: Mat<f64> = zeta.cast();
    let mut worst = f64::NEG_INFINITY;
    for i in 0..z.rows() {
        for j in i + 1..z.rows() {
            worst = worst.max(cosine(z.row(i), z.row(j)));
        }
    }
    if worst.is_finite() {
        1.0 - worst
    } else {
        1.0
    }
}

pub fn convergence_metrics<T: Real>(snapshots: &[Mat<T>]) -> Result<ConvergenceSeries> {
    if snapshots.len() < 2 {
        return Err(Error::Evaluation(format!(
            "convergence needs at least 2 snapshots, got {}",
            snapshots.len()
        )));
    }
    let shape = snapshots[0].shape();
    if let Some(s) = snapshots.iter().find(|s| s.shape() != shape) {
        return Err(Error::shape("convergence_metrics", format!("{:?} vs {:?}", s.shape(), shape)));
    }
    let drift = snapshots
        .windows(2)
        .map(|w| {
            w[1].data()
                .iter()
                .zip(w[0].data())
                .map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    Ok(ConvergenceSeries {
        drift,
        separation: snapshots.iter().map(separation).collect(),
    })
}

/// Mean cosine of a greedy one-to-one matching between learned concepts and
/// planted vectors, clipped to `[0, 1]`.
///
/// Pairs are taken in order of decreasing cosine; each learned row and each
/// planted row is used at most once.
pub fn planted_recovery<T: Real>(zeta: &Mat<T>, planted: &Mat<f64>) -> Result<f64> {
    if zeta.cols() != planted.cols() {
        return Err(Error::shape(
            "planted_recovery",
            format!("learned dim {} vs planted dim {}", zeta.cols(), planted.cols()),
        ));
    }
    let z: Mat<f64> = zeta.cast();
    let mut pairs: Vec<(f64, usize, usize)> = (0..z.rows())
        .flat_map(|i| (0..planted.rows()).map(move |j| (i, j)))
        .map(|(i, j)| (cosine(z.row(i), planted.row(j)), i, j))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut used_z = vec![false; z.rows()];
    let mut used_p = vec![false; planted.rows()];
    let mut matched = Vec::new();
    for (c, i, j) in pairs {
        if !used_z[i] && !used_p[j] {
            used_z[i] = true;
            used_p[j] = true;
            matched.push(c);
        }
    }
    if matched.is_empty() {
        return Ok(0.0);
    }
    let mean = matched.iter().sum::<f64>() / matched.len() as f64;
    Ok(mean.clamp(0.0, 1.0))
}
