//! Synthetic signals from a hidden low-dimensional generator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Activation;
use crate::numcore::{matvec_raw, RngStream, Tensor};
use crate::transforms::{sparsify, TransformKind, UnitaryTransform};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsifySpec {
    pub transform: TransformKind,
    pub s: usize,
}

/// `x = act(W c)`, `c ~ N(0, I_k)`, `W_ij ~ N(0, scale²/k)`, optionally
/// followed by `U h_s(Uᵀ x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub d: usize,
    pub intrinsic_dim: usize,
    pub scale: f64,
    pub activation: Activation,
    pub sparsify: Option<SparsifySpec>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            d: 64,
            intrinsic_dim: 6,
            scale: 0.5,
            activation: Activation::Tanh,
            sparsify: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticSource {
    spec: SyntheticSpec,
    weights: Tensor,
    transform: Option<UnitaryTransform>,
}

impl SyntheticSource {
    pub fn new(spec: SyntheticSpec, rng: &mut RngStream) -> Result<Self> {
        let (d, k) = (spec.d, spec.intrinsic_dim);
        if d == 0 || k == 0 {
            return Err(Error::param("signal and intrinsic dimensions must be positive"));
        }
        if !(spec.scale > 0.0) {
            return Err(Error::param("signal scale must be positive"));
        }
        let std = spec.scale / (k as f64).sqrt();
        let weights = Tensor::matrix(d, k, (0..d * k).map(|_| std * rng.normal()).collect())?;
        let transform = match spec.sparsify {
            Some(sp) => {
                if sp.s > d {
                    return Err(Error::param(format!("sparsity {} exceeds dimension {d}", sp.s)));
                }
                Some(UnitaryTransform::from_kind(sp.transform, d)?)
            }
            None => None,
        };
        Ok(Self {
            spec,
            weights,
            transform,
        })
    }

    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }

    pub fn sample(&self, rng: &mut RngStream) -> Result<Vec<f64>> {
        let c = rng.normal_vec(self.spec.intrinsic_dim);
        let mut x = matvec_raw(self.weights.data(), self.spec.d, self.spec.intrinsic_dim, &c);
        match self.spec.activation {
            Activation::Linear => {}
            Activation::Tanh => x.iter_mut().for_each(|v| *v = v.tanh()),
            Activation::Relu => x.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Sigmoid => x.iter_mut().for_each(|v| *v = crate::numcore::sigmoid(*v)),
        }
        if let (Some(u), Some(sp)) = (&self.transform, self.spec.sparsify) {
            x = sparsify(u, &x, sp.s)?;
        }
        Ok(x)
    }

    pub fn sample_n(&self, n: usize, rng: &mut RngStream) -> Result<Vec<Vec<f64>>> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_source_spans_k_dims() {
        let spec = SyntheticSpec {
            d: 8,
            intrinsic_dim: 2,
            activation: Activation::Linear,
            ..SyntheticSpec::default()
        };
        let src = SyntheticSource::new(spec, &mut RngStream::new(1, 1)).unwrap();
        let xs = src.sample_n(5, &mut RngStream::new(2, 2)).unwrap();
        let m = Tensor::from_rows(&xs).unwrap();
        let sv = crate::rip::singular_values(&m.transpose().unwrap()).unwrap();
        assert!(sv[2] < 1e-10 * sv[0], "{sv:?}");
    }

    #[test]
    fn sparsified_source_is_sparse() {
        let spec = SyntheticSpec {
            d: 16,
            sparsify: Some(SparsifySpec {
                transform: TransformKind::Haar,
                s: 3,
            }),
            ..SyntheticSpec::default()
        };
        let src = SyntheticSource::new(spec, &mut RngStream::new(1, 1)).unwrap();
        let u = UnitaryTransform::haar(16).unwrap();
        for x in src.sample_n(4, &mut RngStream::new(3, 3)).unwrap() {
            let c = u.forward(&x).unwrap();
            assert!(c.iter().filter(|v| v.abs() > 1e-12).count() <= 3);
        }
    }
}
