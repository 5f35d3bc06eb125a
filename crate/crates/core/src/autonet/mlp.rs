use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hidden-layer nonlinearity. The output layer is always affine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
}

/// Plain fully-connected network `n_0 -> n_1 -> ... -> n_L`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub widths: Vec<usize>,
    /// `weights[l]` has shape `(widths[l + 1], widths[l])`.
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub activation: Activation,
}

impl MlpParams {
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        check_widths(widths)?;
        Ok(Self {
            widths: widths.to_vec(),
            weights: widths.windows(2).map(|w| Array2::zeros((w[1], w[0]))).collect(),
            biases: widths[1..].iter().map(|&w| Array1::zeros(w)).collect(),
            activation: Activation::Tanh,
        })
    }

    /// Glorot-normal weights and zero biases.
    pub fn glorot(widths: &[usize], seed: u64) -> Result<Self> {
        let mut p = Self::zeros(widths)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in &mut p.weights {
            let (out, inp) = w.dim();
            let std = (2.0 / (out + inp) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            w.mapv_inplace(|_| normal.sample(&mut rng));
        }
        Ok(p)
    }

    pub fn from_layers(weights: Vec<Array2<f64>>, biases: Vec<Array1<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::arg("need one bias vector per weight matrix"));
        }
        let mut widths = vec![weights[0].ncols()];
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.ncols() != *widths.last().unwrap() || b.len() != w.nrows() {
                return Err(Error::arg(format!("layer {l} shape is inconsistent with its neighbours")));
            }
            widths.push(w.nrows());
        }
        let p = Self { widths, weights, biases, activation: Activation::Tanh };
        p.validate()?;
        Ok(p)
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn validate(&self) -> Result<()> {
        check_widths(&self.widths)?;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            if w.dim() != (self.widths[l + 1], self.widths[l]) || b.len() != self.widths[l + 1] {
                return Err(Error::arg(format!("layer {l} does not match widths {:?}", self.widths)));
            }
            if !w.iter().chain(b.iter()).all(|v| v.is_finite()) {
                return Err(Error::arg(format!("layer {l} contains non-finite parameters")));
            }
        }
        Ok(())
    }
}

fn check_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 || widths.contains(&0) {
        return Err(Error::arg(format!("invalid layer widths {widths:?}")));
    }
    Ok(())
}
