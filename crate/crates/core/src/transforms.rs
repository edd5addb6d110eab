//! Unitary sparsifying transforms and hard thresholding.
//!
//! Convention: for a transform with basis matrix `U` (columns are atoms),
//! [`UnitaryTransform::forward`] computes coefficients `Uᵀx` and
//! [`UnitaryTransform::inverse`] synthesizes `U c`.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{matvec_raw, matvec_t_raw, RngStream, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Identity,
    Haar,
    Explicit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryTransform {
    kind: TransformKind,
    d: usize,
    basis: Option<Tensor>,
}

const UNITARY_TOL: f64 = 1e-10;

impl UnitaryTransform {
    pub fn identity(d: usize) -> Self {
        Self {
            kind: TransformKind::Identity,
            d,
            basis: None,
        }
    }

    /// Orthonormal multi-level Haar wavelet; `d` must be a power of two.
    pub fn haar(d: usize) -> Result<Self> {
        if d == 0 || !d.is_power_of_two() {
            return Err(Error::param(format!("haar transform needs a power-of-two length, got {d}")));
        }
        Ok(Self {
            kind: TransformKind::Haar,
            d,
            basis: None,
        })
    }

    /// Explicit basis; columns must be orthonormal to within 1e-10 (Frobenius).
    pub fn explicit(basis: Tensor) -> Result<Self> {
        if basis.rank() != 2 || basis.shape()[0] != basis.shape()[1] {
            return Err(Error::dim("explicit transform", basis.shape(), &[2]));
        }
        let d = basis.shape()[0];
        let u = basis.data();
        let mut err = 0.0;
        for i in 0..d {
            for j in 0..d {
                let g: f64 = (0..d).map(|k| u[k * d + i] * u[k * d + j]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                err += (g - target).powi(2);
            }
        }
        if err.sqrt() > UNITARY_TOL {
            return Err(Error::param(format!(
                "basis is not orthonormal (‖UᵀU − I‖_F = {:.3e})",
                err.sqrt()
            )));
        }
        Ok(Self {
            kind: TransformKind::Explicit,
            d,
            basis: Some(basis),
        })
    }

    /// Orthogonal basis from modified Gram–Schmidt on a Gaussian matrix.
    pub fn random_orthogonal(d: usize, rng: &mut RngStream) -> Result<Self> {
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
        while cols.len() < d {
            let mut v = rng.normal_vec(d);
            for _ in 0..2 {
                for c in &cols {
                    let p: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(c).for_each(|(a, b)| *a -= p * b);
                }
            }
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if n < 1e-8 {
                continue;
            }
            v.iter_mut().for_each(|a| *a /= n);
            cols.push(v);
        }
        let mut data = vec![0.0; d * d];
        for (j, c) in cols.iter().enumerate() {
            for i in 0..d {
                data[i * d + j] = c[i];
            }
        }
        Self::explicit(Tensor::matrix(d, d, data)?)
    }

    pub fn from_kind(kind: TransformKind, d: usize) -> Result<Self> {
        match kind {
            TransformKind::Identity => Ok(Self::identity(d)),
            TransformKind::Haar => Self::haar(d),
            TransformKind::Explicit => Err(Error::param("explicit transforms need a basis matrix")),
        }
    }

    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::dim("transform", &[self.d], &[x.len()]));
        }
        Ok(())
    }

    /// Analysis: `Uᵀ x`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        Ok(match (&self.kind, &self.basis) {
            (TransformKind::Identity, _) => x.to_vec(),
            (TransformKind::Haar, _) => haar_analysis(x),
            (TransformKind::Explicit, Some(u)) => matvec_t_raw(u.data(), self.d, self.d, x),
            (TransformKind::Explicit, None) => unreachable!("explicit transform carries a basis"),
        })
    }

    /// Synthesis: `U c`.
    pub fn inverse(&self, c: &[f64]) -> Result<Vec<f64>> {
        self.check_len(c)?;
        Ok(match (&self.kind, &self.basis) {
            (TransformKind::Identity, _) => c.to_vec(),
            (TransformKind::Haar, _) => haar_synthesis(c),
            (TransformKind::Explicit, Some(u)) => matvec_raw(u.data(), self.d, self.d, c),
            (TransformKind::Explicit, None) => unreachable!("explicit transform carries a basis"),
        })
    }

    /// The basis matrix `U` (`d×d`, atoms as columns).
    pub fn matrix(&self) -> Tensor {
        if let Some(u) = &self.basis {
            return u.clone();
        }
        let d = self.d;
        let mut data = vec![0.0; d * d];
        let mut e = vec![0.0; d];
        for j in 0..d {
            e[j] = 1.0;
            let col = self.inverse(&e).expect("length checked");
            e[j] = 0.0;
            for i in 0..d {
                data[i * d + j] = col[i];
            }
        }
        Tensor::matrix(d, d, data).expect("square")
    }
}

fn haar_analysis(x: &[f64]) -> Vec<f64> {
    let mut c = x.to_vec();
    let mut tmp = vec![0.0; c.len()];
    let mut n = c.len();
    while n > 1 {
        let h = n / 2;
        for i in 0..h {
            let (a, b) = (c[2 * i], c[2 * i + 1]);
            tmp[i] = (a + b) * FRAC_1_SQRT_2;
            tmp[h + i] = (a - b) * FRAC_1_SQRT_2;
        }
        c[..n].copy_from_slice(&tmp[..n]);
        n = h;
    }
    c
}

fn haar_synthesis(c: &[f64]) -> Vec<f64> {
    let mut x = c.to_vec();
    let mut tmp = vec![0.0; x.len()];
    let mut n = 1;
    while n < x.len() {
        for i in 0..n {
            let (s, w) = (x[i], x[n + i]);
            tmp[2 * i] = (s + w) * FRAC_1_SQRT_2;
            tmp[2 * i + 1] = (s - w) * FRAC_1_SQRT_2;
        }
        x[..2 * n].copy_from_slice(&tmp[..2 * n]);
        n *= 2;
    }
    x
}

/// Indices of the `s` largest-magnitude entries, ties to the lower index,
/// returned in increasing index order.
pub fn top_support(v: &[f64], s: usize) -> Result<Vec<usize>> {
    if s > v.len() {
        return Err(Error::param(format!("sparsity {s} exceeds length {}", v.len())));
    }
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
    idx.truncate(s);
    idx.sort_unstable();
    Ok(idx)
}

/// Keeps the `s` largest-magnitude entries in place and zeroes the rest.
pub fn hard_threshold(v: &[f64], s: usize) -> Result<Vec<f64>> {
    let keep = top_support(v, s)?;
    let mut out = vec![0.0; v.len()];
    for i in keep {
        out[i] = v[i];
    }
    Ok(out)
}

/// `U h_s(Uᵀ x)`.
pub fn sparsify(u: &UnitaryTransform, x: &[f64], s: usize) -> Result<Vec<f64>> {
    let c = u.forward(x)?;
    u.inverse(&hard_threshold(&c, s)?)
}
