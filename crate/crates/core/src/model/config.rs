use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Axis;

/// Axis along which the broadcast composition scores are normalized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormAxis {
    /// Each patch's scores over the concepts form a simplex.
    #[default]
    Concepts,
    /// Each concept's scores over the patches form a simplex.
    Patches,
}

impl NormAxis {
    /// The matching [`Axis`] for an `L×K` composition matrix.
    pub fn axis(self) -> Axis {
        match self {
            NormAxis::Concepts => Axis::Rows,
            NormAxis::Patches => Axis::Cols,
        }
    }
}

fn one() -> usize {
    1
}

/// Shape and behavior of a Bi-ICE module.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiIceConfig {
    /// Total number of concepts `K`.
    #[serde(rename = "k")]
    pub concepts: usize,
    /// Leading concepts annotated at the image level.
    #[serde(rename = "k_global", default)]
    pub global_concepts: usize,
    /// Trailing concepts annotated per patch.
    #[serde(rename = "k_spatial")]
    pub spatial_concepts: usize,
    /// Embedding dimension `D`.
    #[serde(rename = "d")]
    pub dim: usize,
    /// Patches per sample `L`.
    #[serde(rename = "l")]
    pub patches: usize,
    /// Number of classes `N`.
    #[serde(rename = "n")]
    pub classes: usize,
    /// Binding and refinement iterations per forward pass.
    #[serde(rename = "t_inner", default = "one")]
    pub inner_steps: usize,
    #[serde(default)]
    pub norm_axis: NormAxis,
}

impl BiIceConfig {
    /// A configuration with every concept spatial, one inner step and
    /// per-patch normalization.
    pub fn new(concepts: usize, dim: usize, patches: usize, classes: usize) -> Self {
        BiIceConfig {
            concepts,
            global_concepts: 0,
            spatial_concepts: concepts,
            dim,
            patches,
            classes,
            inner_steps: 1,
            norm_axis: NormAxis::Concepts,
        }
    }

    pub fn with_split(mut self, global: usize) -> Self {
        self.global_concepts = global;
        self.spatial_concepts = self.concepts.saturating_sub(global);
        self
    }

    pub fn with_inner_steps(mut self, steps: usize) -> Self {
        self.inner_steps = steps;
        self
    }

    pub fn with_norm_axis(mut self, axis: NormAxis) -> Self {
        self.norm_axis = axis;
        self
    }

    /// Attention temperature `√D`.
    pub fn temperature(&self) -> f64 {
        (self.dim as f64).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if self.concepts == 0 || self.dim == 0 || self.patches == 0 || self.classes == 0 {
            return Err(Error::Config(
                "k, d, l and n must all be at least 1".into(),
            ));
        }
        if self.global_concepts + self.spatial_concepts != self.concepts {
            return Err(Error::Config(format!(
                "k = {} but k_global + k_spatial = {} + {}",
                self.concepts, self.global_concepts, self.spatial_concepts
            )));
        }
        if self.inner_steps == 0 {
            return Err(Error::Config("t_inner must be at least 1".into()));
        }
        Ok(())
    }
}
