use serde::{Deserialize, Serialize};

use super::BiIceConfig;
use crate::error::{Error, Result};
use crate::numerics::{glorot_init, truncated_normal, GatedRecurrentCell, LinearMap, Mat, Real, RngState};

/// The learnable concept vectors, one row per concept.
///
/// The first `global` rows are image-level concepts, the remaining `spatial`
/// rows patch-level concepts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ConceptBank<T = f64> {
    pub zeta: Mat<T>,
    pub global: usize,
    pub spatial: usize,
}

/// Every trainable tensor of the module.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BiIceParams<T = f64> {
    pub bank: ConceptBank<T>,
    /// Binding keys, applied to patches.
    pub k_theta: LinearMap<T>,
    /// Binding queries, applied to concepts.
    pub q_theta: LinearMap<T>,
    /// Binding values, applied to patches.
    pub v_theta: LinearMap<T>,
    /// Broadcast queries, applied to patches.
    pub q_omega: LinearMap<T>,
    /// Broadcast keys, applied to concepts.
    pub k_omega: LinearMap<T>,
    /// Broadcast values, applied to concepts.
    pub v_omega: LinearMap<T>,
    pub cell: GatedRecurrentCell<T>,
    /// Classification head `D×N`.
    pub head: Mat<T>,
}

/// Names of the parameter tensors in iteration order.
pub const TENSOR_NAMES: [&str; 17] = [
    "bank", "k_theta", "q_theta", "v_theta", "q_omega", "k_omega", "v_omega", "gru.w_z", "gru.w_r",
    "gru.w_h", "gru.u_z", "gru.u_r", "gru.u_h", "gru.b_z", "gru.b_r", "gru.b_h", "head",
];

/// Whether the optimizer applies weight decay to the named tensor.
///
/// Only the six attention projections and the head are decayed.
pub fn is_decayed(name: &str) -> bool {
    matches!(
        name,
        "k_theta" | "q_theta" | "v_theta" | "q_omega" | "k_omega" | "v_omega" | "head"
    )
}

impl<T: Real> BiIceParams<T> {
    /// Random initialization: Glorot-uniform projections, recurrent weights and
    /// head, zero recurrent biases, and a concept bank drawn from a normal
    /// distribution with standard deviation `1/√D` truncated at two standard
    /// deviations.
    pub fn init(cfg: &BiIceConfig, rng: &mut RngState) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.dim;
        let zeta = truncated_normal(cfg.concepts, d, 1.0 / (d as f64).sqrt(), rng);
        let mut proj = || LinearMap::new(glorot_init(d, d, rng));
        let k_theta = proj();
        let q_theta = proj();
        let v_theta = proj();
        let q_omega = proj();
        let k_omega = proj();
        let v_omega = proj();
        let cell = GatedRecurrentCell {
            w_z: proj(),
            w_r: proj(),
            w_h: proj(),
            u_z: proj(),
            u_r: proj(),
            u_h: proj(),
            b_z: Mat::zeros(1, d),
            b_r: Mat::zeros(1, d),
            b_h: Mat::zeros(1, d),
        };
        let head = glorot_init(d, cfg.classes, rng);
        Ok(BiIceParams {
            bank: ConceptBank {
                zeta,
                global: cfg.global_concepts,
                spatial: cfg.spatial_concepts,
            },
            k_theta,
            q_theta,
            v_theta,
            q_omega,
            k_omega,
            v_omega,
            cell,
            head,
        })
    }

    /// All-zero tensors shaped like `cfg`; used as a gradient accumulator.
    pub fn zeros(cfg: &BiIceConfig) -> Self {
        let d = cfg.dim;
        let z = || LinearMap::new(Mat::zeros(d, d));
        BiIceParams {
            bank: ConceptBank {
                zeta: Mat::zeros(cfg.concepts, d),
                global: cfg.global_concepts,
                spatial: cfg.spatial_concepts,
            },
            k_theta: z(),
            q_theta: z(),
            v_theta: z(),
            q_omega: z(),
            k_omega: z(),
            v_omega: z(),
            cell: GatedRecurrentCell::zeros(d),
            head: Mat::zeros(d, cfg.classes),
        }
    }

    /// Tensors in [`TENSOR_NAMES`] order.
    pub fn tensors(&self) -> [(&'static str, &Mat<T>); 17] {
        let c = &self.cell;
        [
            (TENSOR_NAMES[0], &self.bank.zeta),
            (TENSOR_NAMES[1], &self.k_theta.weight),
            (TENSOR_NAMES[2], &self.q_theta.weight),
            (TENSOR_NAMES[3], &self.v_theta.weight),
            (TENSOR_NAMES[4], &self.q_omega.weight),
            (TENSOR_NAMES[5], &self.k_omega.weight),
            (TENSOR_NAMES[6], &self.v_omega.weight),
            (TENSOR_NAMES[7], &c.w_z.weight),
            (TENSOR_NAMES[8], &c.w_r.weight),
            (TENSOR_NAMES[9], &c.w_h.weight),
            (TENSOR_NAMES[10], &c.u_z.weight),
            (TENSOR_NAMES[11], &c.u_r.weight),
            (TENSOR_NAMES[12], &c.u_h.weight),
            (TENSOR_NAMES[13], &c.b_z),
            (TENSOR_NAMES[14], &c.b_r),
            (TENSOR_NAMES[15], &c.b_h),
            (TENSOR_NAMES[16], &self.head),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Mat<T>); 17] {
        let c = &mut self.cell;
        [
            (TENSOR_NAMES[0], &mut self.bank.zeta),
            (TENSOR_NAMES[1], &mut self.k_theta.weight),
            (TENSOR_NAMES[2], &mut self.q_theta.weight),
            (TENSOR_NAMES[3], &mut self.v_theta.weight),
            (TENSOR_NAMES[4], &mut self.q_omega.weight),
            (TENSOR_NAMES[5], &mut self.k_omega.weight),
            (TENSOR_NAMES[6], &mut self.v_omega.weight),
            (TENSOR_NAMES[7], &mut c.w_z.weight),
            (TENSOR_NAMES[8], &mut c.w_r.weight),
            (TENSOR_NAMES[9], &mut c.w_h.weight),
            (TENSOR_NAMES[10], &mut c.u_z.weight),
            (TENSOR_NAMES[11], &mut c.u_r.weight),
            (TENSOR_NAMES[12], &mut c.u_h.weight),
            (TENSOR_NAMES[13], &mut c.b_z),
            (TENSOR_NAMES[14], &mut c.b_r),
            (TENSOR_NAMES[15], &mut c.b_h),
            (TENSOR_NAMES[16], &mut self.head),
        ]
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &BiIceParams<T>) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    pub fn scale_in_place(&mut self, s: T) {
        for (_, t) in self.tensors_mut() {
            for x in t.data_mut() {
                *x = *x * s;
            }
        }
    }

    /// Frobenius norm of every tensor, formatted for diagnostics.
    pub fn norm_summary(&self) -> String {
        self.tensors()
            .iter()
            .map(|(name, t)| format!("{name}={:.4e}", t.frobenius_norm().as_f64()))
            .collect::<Vec<_>>()
            .join(", ")
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.all_finite())
    }

    /// Checks every tensor against the configuration.
    pub fn check(&self, cfg: &BiIceConfig) -> Result<()> {
        cfg.validate()?;
        let d = cfg.dim;
        let expect = |name: &str| match name {
            "bank" => (cfg.concepts, d),
            "head" => (d, cfg.classes),
            n if n.starts_with("gru.b_") => (1, d),
            _ => (d, d),
        };
        for (name, t) in self.tensors() {
            if t.shape() != expect(name) {
                return Err(Error::shape(
                    "BiIceParams",
                    format!("{name} is {:?}, expected {:?}", t.shape(), expect(name)),
                ));
            }
        }
        if self.bank.global != cfg.global_concepts || self.bank.spatial != cfg.spatial_concepts {
            return Err(Error::Config(format!(
                "concept bank split {}+{} does not match configuration {}+{}",
                self.bank.global, self.bank.spatial, cfg.global_concepts, cfg.spatial_concepts
            )));
        }
        Ok(())
    }

    /// Converts the element type.
    pub fn cast<U: Real>(&self) -> BiIceParams<U> {
        let lin = |m: &LinearMap<T>| LinearMap::new(m.weight.cast());
        let c = &self.cell;
        BiIceParams {
            bank: ConceptBank {
                zeta: self.bank.zeta.cast(),
                global: self.bank.global,
                spatial: self.bank.spatial,
            },
            k_theta: lin(&self.k_theta),
            q_theta: lin(&self.q_theta),
            v_theta: lin(&self.v_theta),
            q_omega: lin(&self.q_omega),
            k_omega: lin(&self.k_omega),
            v_omega: lin(&self.v_omega),
            cell: GatedRecurrentCell {
                w_z: lin(&c.w_z),
                w_r: lin(&c.w_r),
                w_h: lin(&c.w_h),
                u_z: lin(&c.u_z),
                u_r: lin(&c.u_r),
                u_h: lin(&c.u_h),
                b_z: c.b_z.cast(),
                b_r: c.b_r.cast(),
                b_h: c.b_h.cast(),
            },
            head: self.head.cast(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_well_shaped() {
        let cfg = BiIceConfig::new(4, 8, 6, 3).with_split(1);
        let a: BiIceParams<f64> = BiIceParams::init(&cfg, &mut RngState::new(5)).unwrap();
        let b: BiIceParams<f64> = BiIceParams::init(&cfg, &mut RngState::new(5)).unwrap();
        assert_eq!(a, b);
        a.check(&cfg).unwrap();
        assert!(a.cell.b_z.data().iter().all(|&x| x == 0.0));
        let bound = 2.0 / 8f64.sqrt();
        assert!(a.bank.zeta.data().iter().all(|x| x.abs() <= bound));
    }

    #[test]
    fn check_catches_wrong_head() {
        let cfg = BiIceConfig::new(4, 8, 6, 3);
        let mut p: BiIceParams<f64> = BiIceParams::zeros(&cfg);
        p.head = Mat::zeros(8, 2);
        assert!(p.check(&cfg).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let cfg = BiIceConfig::new(3, 4, 2, 2);
        let p: BiIceParams<f64> = BiIceParams::init(&cfg, &mut RngState::new(1)).unwrap();
        let text = serde_json::to_string(&p).unwrap();
        let back: BiIceParams<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(p, back);
    }
}
