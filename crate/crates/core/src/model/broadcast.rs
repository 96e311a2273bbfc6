use super::{BiIceParams, NormAxis};
use crate::error::{Error, Result};
use crate::numerics::{softmax_unchecked, vec_mat, LinearMap, Mat, Real};

/// Output of the broadcast step.
#[derive(Clone, Debug, PartialEq)]
pub struct Broadcast<T = f64> {
    /// `L×K` nonnegative composition scores.
    pub phi: Mat<T>,
    /// `L×D` patch embeddings rebuilt from concept values.
    pub z_bar: Mat<T>,
}

pub(crate) struct BroadcastCache<T> {
    pub queries: Mat<T>,
    pub keys: Mat<T>,
    pub values: Mat<T>,
}

/// Cross-attention from patches to the refined concepts.
pub fn broadcast<T: Real>(
    z: &Mat<T>,
    zeta_refined: &Mat<T>,
    params: &BiIceParams<T>,
    norm_axis: NormAxis,
) -> Result<Broadcast<T>> {
    let d = params.q_omega.in_dim();
    if z.cols() != d || zeta_refined.cols() != d {
        return Err(Error::shape(
            "broadcast",
            format!("z {:?}, zeta {:?}, D={d}", z.shape(), zeta_refined.shape()),
        ));
    }
    Ok(broadcast_cached(z, zeta_refined, params, norm_axis).0)
}

pub(crate) fn broadcast_cached<T: Real>(
    z: &Mat<T>,
    zeta: &Mat<T>,
    params: &BiIceParams<T>,
    norm_axis: NormAxis,
) -> (Broadcast<T>, BroadcastCache<T>) {
    let temperature = T::lit(params.q_omega.in_dim() as f64).sqrt();
    let queries = params.q_omega.fwd(z);
    let keys = params.k_omega.fwd(zeta);
    let values = params.v_omega.fwd(zeta);
    let scores = queries.mm_t(&keys);
    let phi = softmax_unchecked(&scores, norm_axis.axis(), temperature);
    let z_bar = phi.mm(&values);
    (
        Broadcast { phi, z_bar },
        BroadcastCache {
            queries,
            keys,
            values,
        },
    )
}

/// Mean-pools `z_bar` over patches and applies the head.
pub fn compute_logits<T: Real>(z_bar: &Mat<T>, head: &Mat<T>) -> Result<Vec<T>> {
    if z_bar.cols() != head.rows() || z_bar.rows() == 0 {
        return Err(Error::shape(
            "compute_logits",
            format!("z_bar {:?}, head {:?}", z_bar.shape(), head.shape()),
        ));
    }
    Ok(vec_mat(&z_bar.col_means(), head))
}

/// Per-concept class contributions `v_Ω(ζ) · P`, a `K×N` matrix.
pub fn concept_class_contributions<T: Real>(
    zeta_refined: &Mat<T>,
    v_omega: &LinearMap<T>,
    head: &Mat<T>,
) -> Result<Mat<T>> {
    v_omega.apply(zeta_refined)?.matmul(head)
}

/// Logits as a sum over concepts of patch-averaged composition mass times
/// that concept's class contribution.
///
/// Equal to [`compute_logits`] on the broadcast output because the head has
/// no bias.
pub fn decomposed_logits<T: Real>(
    phi: &Mat<T>,
    zeta_refined: &Mat<T>,
    v_omega: &LinearMap<T>,
    head: &Mat<T>,
) -> Result<Vec<T>> {
    let contrib = concept_class_contributions(zeta_refined, v_omega, head)?;
    if phi.cols() != contrib.rows() || phi.rows() == 0 {
        return Err(Error::shape(
            "decomposed_logits",
            format!("phi {:?}, {} concepts", phi.shape(), contrib.rows()),
        ));
    }
    Ok(vec_mat(&phi.col_means(), &contrib))
}

/// Splits composition scores into patch-averaged global scores and the
/// per-patch spatial block.
pub fn split_composition<T: Real>(phi: &Mat<T>, k_global: usize) -> Result<(Vec<T>, Mat<T>)> {
    if k_global > phi.cols() {
        return Err(Error::Contract(format!(
            "k_global {k_global} exceeds {} concepts",
            phi.cols()
        )));
    }
    let global_idx: Vec<usize> = (0..k_global).collect();
    let spatial_idx: Vec<usize> = (k_global..phi.cols()).collect();
    let global = if k_global == 0 {
        Vec::new()
    } else {
        phi.select_cols(&global_idx).col_means()
    };
    Ok((global, phi.select_cols(&spatial_idx)))
}
