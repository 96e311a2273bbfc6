use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point element type of every matrix in the crate.
///
/// Implemented for `f64` (gradient checks, tests, evaluation) and `f32`
/// (optional training precision).
pub trait Real:
    Float + FromPrimitive + Debug + Display + Default + Send + Sync + Serialize + DeserializeOwned + 'static
{
    /// Name used in parameter files.
    const DTYPE: &'static str;

    /// Converts an `f64` literal, rounding to nearest for narrower types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("float conversion")
    }
}

impl Real for f64 {
    const DTYPE: &'static str = "f64";
}

impl Real for f32 {
    const DTYPE: &'static str = "f32";
}
