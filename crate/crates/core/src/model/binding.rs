use super::BiIceParams;
use crate::error::{Error, Result};
use crate::numerics::{softmax_backward, softmax_unchecked, Axis, GatedRecurrentCell, GruCache, Mat, Real};

/// Row sums below this are clamped before renormalization.
pub const DEGENERATE_FLOOR: f64 = 1e-12;

/// Output of one concept-binding pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Binding<T = f64> {
    /// `K×L` softmax over concepts; every column sums to one.
    pub competition: Mat<T>,
    /// `competition` renormalized so every concept row sums to one.
    pub attn: Mat<T>,
    /// `K×D` readout `attn · v_Θ(z)`.
    pub readout: Mat<T>,
    /// Concept rows whose mass fell below [`DEGENERATE_FLOOR`].
    pub degenerate_rows: usize,
}

pub(crate) struct BindCache<T> {
    pub zeta_in: Mat<T>,
    pub queries: Mat<T>,
    pub row_sums: Vec<T>,
    pub gru: Option<GruCache<T>>,
}

/// Competitive attention of the concepts over the patches of `z`.
///
/// Concepts compete for each patch through a softmax over the concept axis;
/// each concept's weights are then renormalized over the patches and used to
/// average the value projections of the patches.
pub fn concept_binding<T: Real>(z: &Mat<T>, zeta: &Mat<T>, params: &BiIceParams<T>) -> Result<Binding<T>> {
    let d = params.k_theta.in_dim();
    if z.cols() != d || zeta.cols() != d {
        return Err(Error::shape(
            "concept_binding",
            format!("z {:?}, zeta {:?}, D={d}", z.shape(), zeta.shape()),
        ));
    }
    let keys = params.k_theta.fwd(z);
    let values = params.v_theta.fwd(z);
    Ok(bind(&keys, &values, zeta, params).0)
}

pub(crate) fn bind<T: Real>(
    keys: &Mat<T>,
    values: &Mat<T>,
    zeta: &Mat<T>,
    params: &BiIceParams<T>,
) -> (Binding<T>, BindCache<T>) {
    let temperature = T::lit(params.k_theta.in_dim() as f64).sqrt();
    let queries = params.q_theta.fwd(zeta);
    let scores = queries.mm_t(keys);
    let competition = softmax_unchecked(&scores, Axis::Cols, temperature);
    let floor = T::lit(DEGENERATE_FLOOR);
    let mut degenerate_rows = 0;
    let row_sums: Vec<T> = competition
        .row_sums()
        .into_iter()
        .map(|s| {
            if s < floor {
                degenerate_rows += 1;
                floor
            } else {
                s
            }
        })
        .collect();
    let mut attn = competition.clone();
    for (k, &s) in row_sums.iter().enumerate() {
        attn.row_mut(k).iter_mut().for_each(|x| *x = *x / s);
    }
    let readout = attn.mm(values);
    let cache = BindCache {
        zeta_in: zeta.clone(),
        queries,
        row_sums,
        gru: None,
    };
    (
        Binding {
            competition,
            attn,
            readout,
            degenerate_rows,
        },
        cache,
    )
}

/// Gradients of one binding pass. Returns the gradient with respect to the
/// incoming concept vectors and accumulates key/value-side gradients.
#[allow(clippy::too_many_arguments)]
pub(crate) fn bind_backward<T: Real>(
    binding: &Binding<T>,
    cache: &BindCache<T>,
    keys: &Mat<T>,
    values: &Mat<T>,
    d_readout: &Mat<T>,
    params: &BiIceParams<T>,
    grads: &mut BiIceParams<T>,
    d_keys: &mut Mat<T>,
    d_values: &mut Mat<T>,
) -> Mat<T> {
    let temperature = T::lit(params.k_theta.in_dim() as f64).sqrt();
    // readout = attn · values
    let d_attn = d_readout.mm_t(values);
    d_values.add_assign(&binding.attn.t_mm(d_readout));
    // attn = competition / row_sum
    let mut d_comp = Mat::zeros(d_attn.rows(), d_attn.cols());
    for k in 0..d_attn.rows() {
        let inner = crate::numerics::dot(d_attn.row(k), binding.attn.row(k));
        let s = cache.row_sums[k];
        for (o, &g) in d_comp.row_mut(k).iter_mut().zip(d_attn.row(k)) {
            *o = (g - inner) / s;
        }
    }
    let d_scores = softmax_backward(&binding.competition, &d_comp, Axis::Cols, temperature);
    // scores = queries · keysᵀ
    let d_queries = d_scores.mm(keys);
    d_keys.add_assign(&d_scores.t_mm(&cache.queries));
    grads.q_theta.weight.add_assign(&cache.zeta_in.t_mm(&d_queries));
    d_queries.mm_t(&params.q_theta.weight)
}

/// Recurrent update of every concept row with its readout; the cell is shared
/// across rows.
pub fn refine_concepts<T: Real>(zeta: &Mat<T>, readout: &Mat<T>, cell: &GatedRecurrentCell<T>) -> Result<Mat<T>> {
    cell.check_dims()?;
    if zeta.shape() != readout.shape() || zeta.cols() != cell.dim() {
        return Err(Error::shape(
            "refine_concepts",
            format!("zeta {:?}, readout {:?}, D={}", zeta.shape(), readout.shape(), cell.dim()),
        ));
    }
    Ok(cell.forward_rows(zeta, readout).0)
}
