use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Linear warmup followed by cosine annealing to zero.
///
/// During warmup the rate is `base·(iter+1)/warmup`, reaching `base` at
/// `iter = warmup`. Afterwards it follows a half cosine that hits zero at the
/// final iteration `total − 1`.
pub fn lr_at(iter: usize, total: usize, warmup: usize, base_lr: f64) -> Result<f64> {
    if total <= warmup + 1 {
        return Err(Error::Config(format!(
            "degenerate schedule: {total} total iterations with {warmup} warmup iterations"
        )));
    }
    if iter < warmup {
        return Ok(base_lr * (iter + 1) as f64 / warmup as f64);
    }
    let progress = ((iter - warmup) as f64 / (total - 1 - warmup) as f64).min(1.0);
    Ok(base_lr * 0.5 * (1.0 + (PI * progress).cos()))
}
