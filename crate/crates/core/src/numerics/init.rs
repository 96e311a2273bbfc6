use rand::Rng;
use rand_distr::StandardNormal;

use super::{Mat, Real, RngState};

/// Glorot-uniform draw in `[-√(6/(rows+cols)), √(6/(rows+cols))]`.
pub fn glorot_init<T: Real>(rows: usize, cols: usize, rng: &mut RngState) -> Mat<T> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| {
            let u: f64 = rng.gen();
            T::lit(bound * (2.0 * u - 1.0))
        })
        .collect();
    Mat::from_vec(rows, cols, data).expect("length matches")
}

/// Gaussian draws with standard deviation `std`, resampled until they fall
/// within two standard deviations of zero.
pub fn truncated_normal<T: Real>(rows: usize, cols: usize, std: f64, rng: &mut RngState) -> Mat<T> {
    let data = (0..rows * cols)
        .map(|_| loop {
            let x: f64 = rng.sample(StandardNormal);
            if x.abs() <= 2.0 {
                break T::lit(std * x);
            }
        })
        .collect();
    Mat::from_vec(rows, cols, data).expect("length matches")
}
