//! Gaussian sensing matrices and the measurement model `y = A x + ω`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{matvec_raw, matvec_t_raw, RngStream, Tensor};

/// Dense `m×d` sensing matrix with the seed it was drawn from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensingMatrix {
    matrix: Tensor,
    seed: u64,
    stream: u64,
}

impl SensingMatrix {
    /// Wraps a hand-built matrix. Provenance fields are zero.
    pub fn from_tensor(matrix: Tensor) -> Result<Self> {
        if matrix.rank() != 2 {
            return Err(Error::dim("sensing matrix", matrix.shape(), &[2]));
        }
        Ok(Self {
            matrix,
            seed: 0,
            stream: 0,
        })
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    pub fn m(&self) -> usize {
        self.matrix.shape()[0]
    }

    pub fn d(&self) -> usize {
        self.matrix.shape()[1]
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// More measurements than unknowns. Allowed, but outside the usual regime.
    pub fn is_overdetermined(&self) -> bool {
        self.m() > self.d()
    }

    /// `A x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d() {
            return Err(Error::dim("measure", self.matrix.shape(), &[x.len()]));
        }
        Ok(matvec_raw(self.matrix.data(), self.m(), self.d(), x))
    }

    /// `Aᵀ r`.
    pub fn adjoint(&self, r: &[f64]) -> Result<Vec<f64>> {
        if r.len() != self.m() {
            return Err(Error::dim("adjoint", self.matrix.shape(), &[r.len()]));
        }
        Ok(matvec_t_raw(self.matrix.data(), self.m(), self.d(), r))
    }

    /// `‖y − A x‖²`.
    pub fn fidelity(&self, y: &[f64], x: &[f64]) -> Result<f64> {
        let ax = self.apply(x)?;
        Ok(ax.iter().zip(y).map(|(a, b)| (b - a).powi(2)).sum())
    }

    /// `A · U` for a `d×d` matrix `U`.
    pub fn right_multiply(&self, u: &Tensor) -> Result<Tensor> {
        let (m, d) = (self.m(), self.d());
        if u.shape() != [d, d] {
            return Err(Error::dim("right_multiply", self.matrix.shape(), u.shape()));
        }
        let a = self.matrix.data();
        let mut out = vec![0.0; m * d];
        for i in 0..m {
            for l in 0..d {
                let ail = a[i * d + l];
                for j in 0..d {
                    out[i * d + j] += ail * u.data()[l * d + j];
                }
            }
        }
        Tensor::matrix(m, d, out)
    }
}

/// Draws an `m×d` matrix with i.i.d. `N(0, 1/m)` entries.
pub fn sample_sensing(m: usize, d: usize, rng: &mut RngStream) -> Result<SensingMatrix> {
    if m == 0 || d == 0 {
        return Err(Error::param(format!("sensing shape must be positive, got {m}x{d}")));
    }
    if m > d {
        log::warn!("sampling an overdetermined sensing matrix ({m} > {d})");
    }
    let std = (1.0 / m as f64).sqrt();
    let data = (0..m * d).map(|_| std * rng.normal()).collect();
    Ok(SensingMatrix {
        matrix: Tensor::matrix(m, d, data)?,
        seed: rng.master_seed(),
        stream: rng.stream_index(),
    })
}

/// Rebuilds the matrix a `(seed, stream)` pair produced.
pub fn regenerate_sensing(m: usize, d: usize, seed: u64, stream: u64) -> Result<SensingMatrix> {
    sample_sensing(m, d, &mut RngStream::new(seed, stream))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    #[default]
    None,
    Gaussian {
        std: f64,
    },
}

/// `y = A x + ω`.
pub fn measure(
    sensing: &SensingMatrix,
    x: &[f64],
    noise: NoiseModel,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let mut y = sensing.apply(x)?;
    match noise {
        NoiseModel::None => {}
        NoiseModel::Gaussian { std } => {
            if !(std >= 0.0) {
                return Err(Error::param(format!("noise std must be non-negative, got {std}")));
            }
            for v in &mut y {
                *v += std * rng.normal();
            }
        }
    }
    Ok(y)
}
