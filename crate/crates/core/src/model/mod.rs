//! The Bi-ICE module: concept binding and refinement, broadcast, and the
//! decomposable logit head.

mod binding;
mod broadcast;
mod config;
mod forward;
mod gradient;
mod params;

pub use binding::{concept_binding, refine_concepts, Binding, DEGENERATE_FLOOR};
pub use broadcast::{
    broadcast, compute_logits, concept_class_contributions, decomposed_logits, split_composition,
    Broadcast,
};
pub use config::{BiIceConfig, NormAxis};
pub use forward::{forward, ForwardTrace};
pub(crate) use forward::argmax;
pub use gradient::{batch_loss, loss_and_gradient, LossBreakdown, Sample};
pub use params::{is_decayed, BiIceParams, ConceptBank, TENSOR_NAMES};
