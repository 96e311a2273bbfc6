use serde::{Deserialize, Serialize};

use super::mat::vec_mat;
use super::{Mat, Real};
use crate::error::{Error, Result};

/// Bias-free linear map applied to row vectors: `x ↦ x · weight`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", transparent)]
pub struct LinearMap<T = f64> {
    pub weight: Mat<T>,
}

impl<T: Real> LinearMap<T> {
    pub fn new(weight: Mat<T>) -> Self {
        LinearMap { weight }
    }

    pub fn identity(dim: usize) -> Self {
        LinearMap {
            weight: Mat::identity(dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    /// Applies the map to every row of `x`.
    pub fn apply(&self, x: &Mat<T>) -> Result<Mat<T>> {
        x.matmul(&self.weight)
    }

    pub(crate) fn fwd(&self, x: &Mat<T>) -> Mat<T> {
        x.mm(&self.weight)
    }
}

/// Gated recurrent cell.
///
/// `z = σ(x·W_z + h·U_z + b_z)`, `r = σ(x·W_r + h·U_r + b_r)`,
/// `h̃ = tanh(x·W_h + (r⊙h)·U_h + b_h)`, `h' = (1−z)⊙h + z⊙h̃`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct GatedRecurrentCell<T = f64> {
    pub w_z: LinearMap<T>,
    pub w_r: LinearMap<T>,
    pub w_h: LinearMap<T>,
    pub u_z: LinearMap<T>,
    pub u_r: LinearMap<T>,
    pub u_h: LinearMap<T>,
    /// Biases, each stored as a `1×D` row.
    pub b_z: Mat<T>,
    pub b_r: Mat<T>,
    pub b_h: Mat<T>,
}

/// Intermediates of a batched cell step, kept for the backward pass.
#[derive(Clone, Debug)]
pub(crate) struct GruCache<T> {
    hidden: Mat<T>,
    input: Mat<T>,
    z: Mat<T>,
    r: Mat<T>,
    cand: Mat<T>,
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

fn add_bias<T: Real>(m: &mut Mat<T>, b: &Mat<T>) {
    let b = b.row(0);
    for r in 0..m.rows() {
        for (x, &bb) in m.row_mut(r).iter_mut().zip(b) {
            *x = *x + bb;
        }
    }
}

impl<T: Real> GatedRecurrentCell<T> {
    /// A cell with every weight and bias zero.
    pub fn zeros(dim: usize) -> Self {
        let z = || LinearMap::new(Mat::zeros(dim, dim));
        GatedRecurrentCell {
            w_z: z(),
            w_r: z(),
            w_h: z(),
            u_z: z(),
            u_r: z(),
            u_h: z(),
            b_z: Mat::zeros(1, dim),
            b_r: Mat::zeros(1, dim),
            b_h: Mat::zeros(1, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.b_z.cols()
    }

    pub(crate) fn check_dims(&self) -> Result<()> {
        let d = self.dim();
        let maps = [&self.w_z, &self.w_r, &self.w_h, &self.u_z, &self.u_r, &self.u_h];
        let square = maps.iter().all(|m| m.weight.shape() == (d, d));
        let biases = [&self.b_z, &self.b_r, &self.b_h]
            .iter()
            .all(|b| b.shape() == (1, d));
        if square && biases {
            Ok(())
        } else {
            Err(Error::shape("GatedRecurrentCell", format!("inconsistent dimensions for D={d}")))
        }
    }

    /// One step on a single state vector.
    pub fn gru_step(&self, hidden: &[T], input: &[T]) -> Result<Vec<T>> {
        self.check_dims()?;
        let d = self.dim();
        if hidden.len() != d || input.len() != d {
            return Err(Error::shape(
                "gru_step",
                format!("hidden {} / input {} for D={d}", hidden.len(), input.len()),
            ));
        }
        let lin = |w: &LinearMap<T>, u: &LinearMap<T>, h: &[T], b: &Mat<T>| -> Vec<T> {
            let xw = vec_mat(input, &w.weight);
            let hu = vec_mat(h, &u.weight);
            xw.iter()
                .zip(&hu)
                .zip(b.row(0))
                .map(|((&a, &c), &bb)| a + c + bb)
                .collect()
        };
        let z: Vec<T> = lin(&self.w_z, &self.u_z, hidden, &self.b_z)
            .into_iter()
            .map(sigmoid)
            .collect();
        let r: Vec<T> = lin(&self.w_r, &self.u_r, hidden, &self.b_r)
            .into_iter()
            .map(sigmoid)
            .collect();
        let rh: Vec<T> = r.iter().zip(hidden).map(|(&a, &b)| a * b).collect();
        let cand: Vec<T> = lin(&self.w_h, &self.u_h, &rh, &self.b_h)
            .into_iter()
            .map(|x| x.tanh())
            .collect();
        Ok((0..d)
            .map(|i| (T::one() - z[i]) * hidden[i] + z[i] * cand[i])
            .collect())
    }

    /// Steps every row of `hidden` with the matching row of `input`.
    pub(crate) fn forward_rows(&self, hidden: &Mat<T>, input: &Mat<T>) -> (Mat<T>, GruCache<T>) {
        let mut az = self.w_z.fwd(input);
        az.add_assign(&self.u_z.fwd(hidden));
        add_bias(&mut az, &self.b_z);
        let z = az.map(sigmoid);

        let mut ar = self.w_r.fwd(input);
        ar.add_assign(&self.u_r.fwd(hidden));
        add_bias(&mut ar, &self.b_r);
        let r = ar.map(sigmoid);

        let rh = r.zip_map(hidden, |a, b| a * b);
        let mut ah = self.w_h.fwd(input);
        ah.add_assign(&self.u_h.fwd(&rh));
        add_bias(&mut ah, &self.b_h);
        let cand = ah.map(|x| x.tanh());

        let mut out = Mat::zeros(hidden.rows(), hidden.cols());
        for ((o, &h), (&zz, &c)) in out
            .data_mut()
            .iter_mut()
            .zip(hidden.data())
            .zip(z.data().iter().zip(cand.data()))
        {
            *o = (T::one() - zz) * h + zz * c;
        }
        let cache = GruCache {
            hidden: hidden.clone(),
            input: input.clone(),
            z,
            r,
            cand,
        };
        (out, cache)
    }

    /// Accumulates parameter gradients into `grad` and returns
    /// `(d_hidden, d_input)`.
    pub(crate) fn backward_rows(
        &self,
        cache: &GruCache<T>,
        d_out: &Mat<T>,
        grad: &mut GatedRecurrentCell<T>,
    ) -> (Mat<T>, Mat<T>) {
        let GruCache {
            hidden,
            input,
            z,
            r,
            cand,
        } = cache;
        let one = T::one();

        let mut d_hidden = d_out.zip_map(z, |g, zz| g * (one - zz));
        let d_cand = d_out.zip_map(z, |g, zz| g * zz);
        let d_z = d_out.zip_map(&cand.zip_map(hidden, |c, h| c - h), |g, diff| g * diff);

        let d_ah = d_cand.zip_map(cand, |g, c| g * (one - c * c));
        let rh = r.zip_map(hidden, |a, b| a * b);
        grad.w_h.weight.add_assign(&input.t_mm(&d_ah));
        grad.u_h.weight.add_assign(&rh.t_mm(&d_ah));
        accumulate_bias(&mut grad.b_h, &d_ah);
        let mut d_input = d_ah.mm_t(&self.w_h.weight);
        let d_rh = d_ah.mm_t(&self.u_h.weight);
        let d_r = d_rh.zip_map(hidden, |g, h| g * h);
        d_hidden.add_assign(&d_rh.zip_map(r, |g, rr| g * rr));

        let d_ar = d_r.zip_map(r, |g, rr| g * rr * (one - rr));
        grad.w_r.weight.add_assign(&input.t_mm(&d_ar));
        grad.u_r.weight.add_assign(&hidden.t_mm(&d_ar));
        accumulate_bias(&mut grad.b_r, &d_ar);
        d_input.add_assign(&d_ar.mm_t(&self.w_r.weight));
        d_hidden.add_assign(&d_ar.mm_t(&self.u_r.weight));

        let d_az = d_z.zip_map(z, |g, zz| g * zz * (one - zz));
        grad.w_z.weight.add_assign(&input.t_mm(&d_az));
        grad.u_z.weight.add_assign(&hidden.t_mm(&d_az));
        accumulate_bias(&mut grad.b_z, &d_az);
        d_input.add_assign(&d_az.mm_t(&self.w_z.weight));
        d_hidden.add_assign(&d_az.mm_t(&self.u_z.weight));

        (d_hidden, d_input)
    }
}

fn accumulate_bias<T: Real>(b: &mut Mat<T>, d: &Mat<T>) {
    let sums = d.col_sums();
    for (x, s) in b.data_mut().iter_mut().zip(sums) {
        *x = *x + s;
    }
}
