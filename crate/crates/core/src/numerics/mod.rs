//! Dense linear algebra, softmax, the gated recurrent cell, initialization and
//! seeded randomness.

mod gru;
mod init;
mod mat;
mod real;
mod rng;
mod softmax;

pub use gru::{GatedRecurrentCell, LinearMap};
pub(crate) use gru::GruCache;
pub use init::{glorot_init, truncated_normal};
pub use mat::{Axis, Mat};
pub(crate) use mat::{dot, vec_mat};
pub use real::Real;
pub use rng::RngState;
pub use softmax::softmax_axis;
pub(crate) use softmax::{softmax_backward, softmax_unchecked};
