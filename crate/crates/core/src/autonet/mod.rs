//! Small fully-connected network engine with LoRA-SVD adapters.
//!
//! Derivatives with respect to the inputs come from batched Taylor-mode propagation
//! ([`jet`]); parameter gradients come from an exact reverse pass over the same tape;
//! the singular-value Hessian is a central finite difference of the analytic
//! singular-value gradient ([`sigma`]).

pub mod checkpoint;
pub mod jet;
pub mod lora;
pub mod mlp;
pub mod sigma;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use jet::{AdapterGrads, GradRequest, Grads, JetSpec, Tape};
pub use lora::{effective_weights, init_lora, LoraNet, LoraSvdAdapter, SigmaIndexMap};
pub use mlp::{Activation, MlpParams};
pub use sigma::{fd_sigma_hessian, SigmaHessian, SigmaLoss};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Interior,
    Boundary,
    Initial,
}

/// A spatial point in the unit disk with an optional time coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    pub x: Vec<f64>,
    pub t: Option<f64>,
    pub region: Region,
}

impl EvalPoint {
    pub fn new(x: Vec<f64>, t: Option<f64>, region: Region) -> Result<Self> {
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm <= 1.0 + 1e-12) {
            return Err(Error::arg(format!("point {x:?} lies outside the unit disk")));
        }
        if let Some(t) = t {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::arg(format!("time {t} outside [0, 1]")));
            }
        }
        Ok(Self { x, t, region })
    }

    /// Unchecked construction, for oracles that probe outside the domain.
    pub fn raw(x: Vec<f64>, t: Option<f64>) -> Self {
        Self { x, t, region: Region::Interior }
    }

    /// Network input `[x.., t?]`.
    pub fn coords(&self) -> Vec<f64> {
        let mut c = self.x.clone();
        c.extend(self.t);
        c
    }
}

/// Value and input derivatives of a scalar network at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct InputDerivatives {
    pub u: f64,
    pub grad_x: Vec<f64>,
    pub laplacian: f64,
    /// Pure second derivatives along each spatial axis.
    pub hess_diag_x: Vec<f64>,
    dt: Option<f64>,
    dtt: Option<f64>,
}

impl InputDerivatives {
    pub fn dt(&self) -> Result<f64> {
        self.dt.ok_or_else(|| Error::arg("time derivative requested on a stationary network"))
    }

    pub fn dtt(&self) -> Result<f64> {
        self.dtt.ok_or_else(|| Error::arg("time derivative requested on a stationary network"))
    }
}

impl LoraNet {
    fn single_point(&self, point: &EvalPoint) -> Result<Array2<f64>> {
        let c = point.coords();
        let d = c.len();
        Array2::from_shape_vec((d, 1), c).map_err(|e| Error::arg(e.to_string()))
    }

    pub fn forward(&self, point: &EvalPoint) -> Result<f64> {
        let x = self.single_point(point)?;
        Ok(self.forward_batch(x.view(), &JetSpec::value_only())?.value()[0])
    }

    pub fn input_derivatives(&self, point: &EvalPoint) -> Result<InputDerivatives> {
        let x = self.single_point(point)?;
        let d = x.nrows();
        let axes: Vec<usize> = (0..d).collect();
        let spec = JetSpec::new(axes.clone(), axes)?;
        let tape = self.forward_batch(x.view(), &spec)?;
        let ch = |c: usize| tape.channel(c)[0];
        let spatial = point.x.len();
        let grad_x: Vec<f64> = (0..spatial).map(|a| ch(spec.first_channel(a).unwrap())).collect();
        let hess_diag_x: Vec<f64> = (0..spatial).map(|a| ch(spec.second_channel(a).unwrap())).collect();
        let (dt, dtt) = match point.t {
            Some(_) => (Some(ch(spec.first_channel(spatial).unwrap())), Some(ch(spec.second_channel(spatial).unwrap()))),
            None => (None, None),
        };
        Ok(InputDerivatives { u: ch(0), grad_x, laplacian: hess_diag_x.iter().sum(), hess_diag_x, dt, dtt })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};

    fn point(x: &[f64], t: Option<f64>) -> EvalPoint {
        EvalPoint::raw(x.to_vec(), t)
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = LoraNet::plain(MlpParams::zeros(&[2, 5, 5, 1]).unwrap()).unwrap();
        assert_eq!(net.forward(&point(&[0.3, -0.2], None)).unwrap(), 0.0);
    }

    #[test]
    fn single_linear_layer() {
        let p = MlpParams::from_layers(vec![array![[1.0, 2.0]]], vec![Array1::zeros(1)]).unwrap();
        let net = LoraNet::plain(p).unwrap();
        assert_eq!(net.forward(&point(&[3.0, 4.0], None)).unwrap(), 11.0);
        let d = net.input_derivatives(&point(&[3.0, 4.0], None)).unwrap();
        assert_eq!(d.grad_x, vec![1.0, 2.0]);
        assert_eq!(d.laplacian, 0.0);
        assert!(d.dt().is_err());
    }

    #[test]
    fn tanh_second_derivative() {
        // u(x) = tanh(x_1) via a 2 -> 1 -> 1 network with unit weights.
        let p = MlpParams::from_layers(
            vec![array![[1.0, 0.0]], array![[1.0]]],
            vec![Array1::zeros(1), Array1::zeros(1)],
        )
        .unwrap();
        let net = LoraNet::plain(p).unwrap();
        let at0 = net.input_derivatives(&point(&[0.0, 0.3], None)).unwrap();
        assert_eq!(at0.laplacian, 0.0);
        let t = 0.5f64.tanh();
        let d = net.input_derivatives(&point(&[0.5, 0.3], None)).unwrap();
        assert!((d.hess_diag_x[0] - (-2.0 * t * (1.0 - t * t))).abs() < 1e-12);
        assert!((d.grad_x[0] - (1.0 - t * t)).abs() < 1e-15);
        assert_eq!(d.hess_diag_x[1], 0.0);
    }

    #[test]
    fn eval_point_checks_domain() {
        assert!(EvalPoint::new(vec![1.0, 0.5], None, Region::Interior).is_err());
        assert!(EvalPoint::new(vec![0.1, 0.5], Some(1.5), Region::Interior).is_err());
        let p = EvalPoint::new(vec![0.6, 0.8], Some(0.0), Region::Boundary).unwrap();
        assert_eq!(p.coords(), vec![0.6, 0.8, 0.0]);
    }
}
