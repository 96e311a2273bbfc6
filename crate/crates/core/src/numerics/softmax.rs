use super::{Axis, Mat, Real};
use crate::error::{Error, Result};

/// Softmax of `m / temperature` over every slice along `axis`.
///
/// The slice maximum is subtracted before exponentiation.
pub fn softmax_axis<T: Real>(m: &Mat<T>, axis: Axis, temperature: T) -> Result<Mat<T>> {
    if !(temperature > T::zero()) {
        return Err(Error::Contract(format!(
            "softmax temperature must be positive, got {temperature}"
        )));
    }
    Ok(softmax_unchecked(m, axis, temperature))
}

pub(crate) fn softmax_unchecked<T: Real>(m: &Mat<T>, axis: Axis, temperature: T) -> Mat<T> {
    match axis {
        Axis::Rows => {
            let mut out = m.clone();
            for r in 0..m.rows() {
                softmax_slice(out.row_mut(r), temperature);
            }
            out
        }
        Axis::Cols => {
            let mut t = m.transpose();
            for r in 0..t.rows() {
                softmax_slice(t.row_mut(r), temperature);
            }
            t.transpose()
        }
    }
}

fn softmax_slice<T: Real>(xs: &mut [T], temperature: T) {
    let max = xs.iter().fold(T::neg_infinity(), |acc, &x| acc.max(x));
    let mut total = T::zero();
    for x in xs.iter_mut() {
        *x = ((*x - max) / temperature).exp();
        total = total + *x;
    }
    for x in xs.iter_mut() {
        *x = *x / total;
    }
}

/// Gradient with respect to the softmax input, given the softmax output `s`
/// and the upstream gradient `ds`.
pub(crate) fn softmax_backward<T: Real>(s: &Mat<T>, ds: &Mat<T>, axis: Axis, temperature: T) -> Mat<T> {
    let slice = |s: &[T], ds: &[T], out: &mut [T]| {
        let inner = s.iter().zip(ds).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
        for ((o, &a), &b) in out.iter_mut().zip(s).zip(ds) {
            *o = a * (b - inner) / temperature;
        }
    };
    match axis {
        Axis::Rows => {
            let mut out = Mat::zeros(s.rows(), s.cols());
            for r in 0..s.rows() {
                slice(s.row(r), ds.row(r), out.row_mut(r));
            }
            out
        }
        Axis::Cols => {
            let (st, dst) = (s.transpose(), ds.transpose());
            let mut out = Mat::zeros(st.rows(), st.cols());
            for r in 0..st.rows() {
                slice(st.row(r), dst.row(r), out.row_mut(r));
            }
            out.transpose()
        }
    }
}
