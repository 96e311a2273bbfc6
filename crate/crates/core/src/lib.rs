//! Interpretable classification through concept decomposition.
//!
//! A learnable bank of concept vectors competes for the patch embeddings of
//! an input, is refined by a gated recurrent cell, and is broadcast back onto
//! the patches as nonnegative composition scores. Logits are a mean-pooled
//! linear head over the rebuilt patches, which makes every logit an exact sum
//! of per-concept contributions.
//!
//! ```
//! use bi_ice::model::{forward, BiIceConfig, BiIceParams};
//! use bi_ice::numerics::{glorot_init, RngState};
//!
//! let cfg = BiIceConfig::new(4, 8, 6, 3);
//! let mut rng = RngState::new(0);
//! let params: BiIceParams = BiIceParams::init(&cfg, &mut rng)?;
//! let z = glorot_init(6, 8, &mut rng);
//! let trace = forward(&z, &params, &cfg)?;
//! assert_eq!(trace.phi.shape(), (6, 4));
//! assert_eq!(trace.logits.len(), 3);
//! # Ok::<(), bi_ice::Error>(())
//! ```

pub mod data;
mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod objectives;
pub mod training;

pub use error::{Error, Result};
