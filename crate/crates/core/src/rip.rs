//! Restricted isometry checks over explicit support families.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{RngStream, Tensor};
use crate::recovery::RecoveryTrace;
use crate::transforms::{hard_threshold, UnitaryTransform};

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 80;

/// Which quantity the `1 ± γ` bounds apply to.
///
/// `Linear` bounds singular values directly (`(1−γ)‖x‖ ≤ ‖Mx‖ ≤ (1+γ)‖x‖`);
/// `Squared` bounds their squares (`(1−γ)‖x‖² ≤ ‖Mx‖² ≤ (1+γ)‖x‖²`), the
/// form the contraction argument for sparse projected descent consumes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RipConvention {
    #[default]
    Linear,
    Squared,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SupportFamily {
    supports: BTreeSet<Vec<usize>>,
    max_size: usize,
}

impl SupportFamily {
    pub fn new(max_size: usize) -> Self {
        Self {
            supports: BTreeSet::new(),
            max_size,
        }
    }

    /// Adds a support (sorted, deduplicated). Empty supports are skipped and
    /// return `false`.
    pub fn insert(&mut self, mut support: Vec<usize>) -> Result<bool> {
        support.sort_unstable();
        support.dedup();
        if support.is_empty() {
            return Ok(false);
        }
        if support.len() > self.max_size {
            return Err(Error::param(format!(
                "support of size {} exceeds family bound {}",
                support.len(),
                self.max_size
            )));
        }
        Ok(self.supports.insert(support))
    }

    /// Every size-`k` subset of `0..d`.
    pub fn all_of_size(d: usize, k: usize) -> Self {
        let mut fam = Self::new(k);
        let mut idx: Vec<usize> = (0..k).collect();
        if k == 0 || k > d {
            return fam;
        }
        loop {
            fam.supports.insert(idx.clone());
            let mut i = k;
            while i > 0 && idx[i - 1] == d - k + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..k {
                idx[j] = idx[j - 1] + 1;
            }
        }
        fam
    }

    /// `count` uniformly drawn size-`k` supports of `0..d` (duplicates merge).
    pub fn random(d: usize, k: usize, count: usize, rng: &mut RngStream) -> Self {
        let mut fam = Self::new(k);
        for _ in 0..count {
            fam.supports.insert(rng.subset(d, k));
        }
        fam
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn len(&self) -> usize {
        self.supports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.supports.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec<usize>> {
        self.supports.iter()
    }

    pub fn contains(&self, support: &[usize]) -> bool {
        self.supports.contains(support)
    }
}

/// Singular values of a dense `m×k` matrix (`k ≤ m`) by one-sided Jacobi,
/// sorted descending.
pub fn singular_values(a: &Tensor) -> Result<Vec<f64>> {
    if a.rank() != 2 {
        return Err(Error::dim("singular_values", a.shape(), &[2]));
    }
    let (m, k) = (a.shape()[0], a.shape()[1]);
    if k > m {
        return Err(Error::param(format!("one-sided Jacobi needs k ≤ m, got {m}x{k}")));
    }
    let mut cols: Vec<Vec<f64>> = (0..k).map(|j| (0..m).map(|i| a.at(i, j)).collect()).collect();
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0f64;
        for p in 0..k {
            for q in p + 1..k {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (&cols[p], &cols[q]);
                    let alpha: f64 = cp.iter().map(|v| v * v).sum();
                    let beta: f64 = cq.iter().map(|v| v * v).sum();
                    let gamma: f64 = cp.iter().zip(cq).map(|(x, y)| x * y).sum();
                    (alpha, beta, gamma)
                };
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let rel = gamma.abs() / (alpha * beta).sqrt();
                if rel <= JACOBI_TOL {
                    continue;
                }
                off = off.max(rel);
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                let (cp, cq) = (&mut left[p], &mut right[0]);
                for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
            }
        }
        if off <= JACOBI_TOL {
            break;
        }
    }
    let mut sv: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// Smallest and largest singular values of the column submatrix `M_Γ`.
pub fn extreme_singular_values(m: &Tensor, support: &[usize]) -> Result<(f64, f64)> {
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    if m.rank() != 2 {
        return Err(Error::dim("extreme_singular_values", m.shape(), &[2]));
    }
    let (rows, cols) = (m.shape()[0], m.shape()[1]);
    if support.len() > rows.min(cols) {
        return Err(Error::param(format!(
            "support of size {} exceeds min(m, d) = {}",
            support.len(),
            rows.min(cols)
        )));
    }
    let sub = m.select_columns(support)?;
    let sv = singular_values(&sub)?;
    Ok((*sv.last().expect("non-empty"), sv[0]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportBounds {
    pub support: Vec<usize>,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RipReport {
    pub gamma_target: f64,
    pub convention: RipConvention,
    pub per_support: Vec<SupportBounds>,
    pub pass: bool,
    /// Support with the largest deviation from isometry; `None` for an empty family.
    pub worst_support: Option<Vec<usize>>,
}

impl RipReport {
    /// Largest `max(1 − lo, hi − 1)` over the family, in the report's convention.
    pub fn worst_deviation(&self) -> f64 {
        self.per_support
            .iter()
            .map(|b| deviation(b, self.convention))
            .fold(0.0, f64::max)
    }
}

fn deviation(b: &SupportBounds, conv: RipConvention) -> f64 {
    let (lo, hi) = match conv {
        RipConvention::Linear => (b.sigma_min, b.sigma_max),
        RipConvention::Squared => (b.sigma_min.powi(2), b.sigma_max.powi(2)),
    };
    (1.0 - lo).max(hi - 1.0)
}

/// Checks `(S, 1−γ, 1+γ)`-RIP of `m` for `S = {x : supp(x) ∈ Σ}`.
pub fn check_rip(
    m: &Tensor,
    family: &SupportFamily,
    gamma: f64,
    convention: RipConvention,
) -> Result<RipReport> {
    if !(gamma > 0.0) {
        return Err(Error::param(format!("gamma must be positive, got {gamma}")));
    }
    let mut per_support = Vec::with_capacity(family.len());
    for support in family.iter() {
        let (sigma_min, sigma_max) = extreme_singular_values(m, support)?;
        per_support.push(SupportBounds {
            support: support.clone(),
            sigma_min,
            sigma_max,
        });
    }
    let pass = per_support.iter().all(|b| deviation(b, convention) <= gamma);
    let worst_support = per_support
        .iter()
        .max_by(|a, b| deviation(a, convention).total_cmp(&deviation(b, convention)))
        .map(|b| b.support.clone());
    Ok(RipReport {
        gamma_target: gamma,
        convention,
        per_support,
        pass,
        worst_support,
    })
}

fn support_of(v: &[f64]) -> Vec<usize> {
    v.iter()
        .enumerate()
        .filter(|(_, &x)| x != 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// Difference supports `Γ⁽¹⁾_t = supp(h_s(Uᵀx_t) − h_s(Uᵀx_te))` and
/// `Γ⁽²⁾_t = supp(h_s(Uᵀx_{t+1}) − h_s(Uᵀx_t))` along a recovery trace.
/// Entries are compared exactly; empty supports are dropped.
pub fn support_family_from_trace(
    trace: &RecoveryTrace,
    u: &UnitaryTransform,
    s: usize,
) -> Result<SupportFamily> {
    let iterates = trace
        .iterates
        .as_ref()
        .ok_or_else(|| Error::contract("trace does not retain iterates"))?;
    let target = trace
        .target
        .as_ref()
        .ok_or_else(|| Error::contract("trace does not carry the target signal"))?;
    if iterates.is_empty() {
        return Err(Error::contract("trace holds no iterates"));
    }
    let coeffs = |x: &[f64]| -> Result<Vec<f64>> { hard_threshold(&u.forward(x)?, s) };
    let target_c = coeffs(target)?;
    let c: Vec<Vec<f64>> = iterates.iter().map(|x| coeffs(x)).collect::<Result<_>>()?;
    let mut fam = SupportFamily::new(2 * s);
    for t in 0..c.len().saturating_sub(1) {
        let d1: Vec<f64> = c[t].iter().zip(&target_c).map(|(a, b)| a - b).collect();
        let d2: Vec<f64> = c[t + 1].iter().zip(&c[t]).map(|(a, b)| a - b).collect();
        fam.insert(support_of(&d1))?;
        fam.insert(support_of(&d2))?;
    }
    Ok(fam)
}

/// Smallest `m` with `m ≥ 2(s + ln(4T/τ)) / (√(1+γ) − 1)²` and `m ≥ 2s`.
pub fn theorem2_min_m(s: usize, iterations: usize, tau: f64, gamma: f64) -> Result<usize> {
    if s == 0 || iterations == 0 {
        return Err(Error::param("sparsity and iteration count must be at least 1"));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::param(format!("failure probability must lie in (0, 1), got {tau}")));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::param(format!("gamma must be positive and finite, got {gamma}")));
    }
    let denom = ((1.0 + gamma).sqrt() - 1.0).powi(2);
    let bound = 2.0 * (s as f64 + (4.0 * iterations as f64 / tau).ln()) / denom;
    let m = bound.ceil();
    if !m.is_finite() || m > usize::MAX as f64 {
        return Err(Error::param("sample-size bound overflows"));
    }
    Ok((m as usize).max(2 * s))
}
