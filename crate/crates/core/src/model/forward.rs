use super::binding::{bind, bind_backward, BindCache, Binding};
use super::broadcast::{broadcast_cached, BroadcastCache};
use super::{BiIceConfig, BiIceParams};
use crate::error::{Error, Result};
use crate::numerics::{softmax_backward, vec_mat, Mat, Real};

/// Every intermediate of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace<T = f64> {
    /// Concept competition of the last binding step (columns sum to one).
    pub competition: Mat<T>,
    /// Renormalized binding attention of the last step, `K×L`.
    pub attn: Mat<T>,
    /// Readout of the last binding step, `K×D`.
    pub readout: Mat<T>,
    /// Concept vectors after all refinement steps, `K×D`.
    pub zeta_refined: Mat<T>,
    /// Composition scores, `L×K`.
    pub phi: Mat<T>,
    /// Rebuilt patch embeddings, `L×D`.
    pub z_bar: Mat<T>,
    pub logits: Vec<T>,
    /// Degenerate binding rows summed over all steps.
    pub degenerate_rows: usize,
}

impl<T: Real> ForwardTrace<T> {
    /// Index of the largest logit, lowest index on ties.
    pub fn predicted_class(&self) -> usize {
        argmax(&self.logits)
    }
}

pub(crate) fn argmax<T: Real>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub(crate) struct ForwardCache<T> {
    keys: Mat<T>,
    values: Mat<T>,
    steps: Vec<(Binding<T>, BindCache<T>)>,
    broadcast: BroadcastCache<T>,
    pooled: Vec<T>,
}

/// Runs binding and refinement `t_inner` times from the persistent concept
/// bank, then broadcast and the logit head.
pub fn forward<T: Real>(z: &Mat<T>, params: &BiIceParams<T>, cfg: &BiIceConfig) -> Result<ForwardTrace<T>> {
    check_input(z, params, cfg)?;
    Ok(forward_cached(z, params, cfg).0)
}

pub(crate) fn check_input<T: Real>(z: &Mat<T>, params: &BiIceParams<T>, cfg: &BiIceConfig) -> Result<()> {
    params.check(cfg)?;
    if z.shape() != (cfg.patches, cfg.dim) {
        return Err(Error::shape(
            "forward",
            format!("input {:?}, expected ({}, {})", z.shape(), cfg.patches, cfg.dim),
        ));
    }
    Ok(())
}

pub(crate) fn forward_cached<T: Real>(
    z: &Mat<T>,
    params: &BiIceParams<T>,
    cfg: &BiIceConfig,
) -> (ForwardTrace<T>, ForwardCache<T>) {
    let keys = params.k_theta.fwd(z);
    let values = params.v_theta.fwd(z);
    let mut zeta = params.bank.zeta.clone();
    let mut steps = Vec::with_capacity(cfg.inner_steps);
    let mut degenerate_rows = 0;
    for _ in 0..cfg.inner_steps {
        let (binding, mut cache) = bind(&keys, &values, &zeta, params);
        degenerate_rows += binding.degenerate_rows;
        let (next, gru) = params.cell.forward_rows(&zeta, &binding.readout);
        cache.gru = Some(gru);
        steps.push((binding, cache));
        zeta = next;
    }
    let (b, bcache) = broadcast_cached(z, &zeta, params, cfg.norm_axis);
    let pooled = b.z_bar.col_means();
    let logits = vec_mat(&pooled, &params.head);
    let last = &steps.last().expect("at least one inner step").0;
    let trace = ForwardTrace {
        competition: last.competition.clone(),
        attn: last.attn.clone(),
        readout: last.readout.clone(),
        zeta_refined: zeta,
        phi: b.phi,
        z_bar: b.z_bar,
        logits,
        degenerate_rows,
    };
    let cache = ForwardCache {
        keys,
        values,
        steps,
        broadcast: bcache,
        pooled,
    };
    (trace, cache)
}

/// Accumulates into `grads` the gradient of a scalar whose partial
/// derivatives with respect to the logits and to `phi` are given.
pub(crate) fn backward<T: Real>(
    z: &Mat<T>,
    params: &BiIceParams<T>,
    cfg: &BiIceConfig,
    trace: &ForwardTrace<T>,
    cache: &ForwardCache<T>,
    d_logits: &[T],
    d_phi_direct: &Mat<T>,
    grads: &mut BiIceParams<T>,
) {
    let temperature = T::lit(cfg.temperature());
    let l = T::lit(cfg.patches as f64);

    // logits = pooled · head, pooled = mean over patches of z_bar
    let pooled = Mat::row_vector(&cache.pooled);
    let dl = Mat::row_vector(d_logits);
    grads.head.add_assign(&pooled.t_mm(&dl));
    let d_pooled = dl.mm_t(&params.head);
    let mut d_zbar = Mat::zeros(cfg.patches, cfg.dim);
    for r in 0..cfg.patches {
        for (o, &g) in d_zbar.row_mut(r).iter_mut().zip(d_pooled.row(0)) {
            *o = g / l;
        }
    }

    // z_bar = phi · values_Ω
    let bc = &cache.broadcast;
    let mut d_phi = d_zbar.mm_t(&bc.values);
    d_phi.add_assign(d_phi_direct);
    let d_values_omega = trace.phi.t_mm(&d_zbar);
    let zeta = &trace.zeta_refined;
    grads.v_omega.weight.add_assign(&zeta.t_mm(&d_values_omega));
    let mut d_zeta = d_values_omega.mm_t(&params.v_omega.weight);

    // phi = softmax(queries · keysᵀ / √D)
    let d_scores = softmax_backward(&trace.phi, &d_phi, cfg.norm_axis.axis(), temperature);
    let d_queries = d_scores.mm(&bc.keys);
    let d_keys = d_scores.t_mm(&bc.queries);
    grads.q_omega.weight.add_assign(&z.t_mm(&d_queries));
    grads.k_omega.weight.add_assign(&zeta.t_mm(&d_keys));
    d_zeta.add_assign(&d_keys.mm_t(&params.k_omega.weight));

    // Binding and refinement steps in reverse.
    let mut d_keys_theta = Mat::zeros(cfg.patches, cfg.dim);
    let mut d_values_theta = Mat::zeros(cfg.patches, cfg.dim);
    for (binding, bcache) in cache.steps.iter().rev() {
        let gru = bcache.gru.as_ref().expect("cached cell step");
        let (mut d_prev, d_readout) = params.cell.backward_rows(gru, &d_zeta, &mut grads.cell);
        let d_from_queries = bind_backward(
            binding,
            bcache,
            &cache.keys,
            &cache.values,
            &d_readout,
            params,
            grads,
            &mut d_keys_theta,
            &mut d_values_theta,
        );
        d_prev.add_assign(&d_from_queries);
        d_zeta = d_prev;
    }
    grads.k_theta.weight.add_assign(&z.t_mm(&d_keys_theta));
    grads.v_theta.weight.add_assign(&z.t_mm(&d_values_theta));
    grads.bank.zeta.add_assign(&d_zeta);
}
