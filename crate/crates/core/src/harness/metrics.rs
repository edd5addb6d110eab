//! Reconstruction metrics, intervals, paired sign tests and presence probability.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};
use crate::models::GenerativePrior;
use crate::numcore::RngStream;
use crate::sensing::SensingMatrix;

/// `‖x̂ − x‖² / d`.
pub fn per_pixel_error(estimate: &[f64], target: &[f64]) -> Result<f64> {
    if estimate.len() != target.len() || target.is_empty() {
        return Err(Error::dim("per_pixel_error", &[estimate.len()], &[target.len()]));
    }
    let ss: f64 = estimate.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(ss / target.len() as f64)
}

/// Mean and 95% Student-t half-width `t_{0.975, n−1} · s / √n`.
pub fn confidence_interval(values: &[f64]) -> Result<(f64, f64)> {
    let n = values.len();
    if n < 2 {
        return Err(Error::param(format!("a confidence interval needs at least 2 values, got {n}")));
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let t = StudentsT::new(0.0, 1.0, nf - 1.0)
        .map_err(|e| Error::param(e.to_string()))?
        .inverse_cdf(0.975);
    Ok((mean, t * var.sqrt() / nf.sqrt()))
}

/// One-sided exact sign test on paired samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    /// Pairs where the first sample is strictly smaller.
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// `P(Bin(wins + losses, 1/2) ≥ wins)`; 1 when every pair ties.
    pub p_value: f64,
}

impl SignTest {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Tests whether `first` tends to be smaller than `second`. Ties are dropped.
pub fn sign_test(first: &[f64], second: &[f64]) -> Result<SignTest> {
    if first.len() != second.len() {
        return Err(Error::dim("sign_test", &[first.len()], &[second.len()]));
    }
    let (mut wins, mut losses, mut ties) = (0, 0, 0);
    for (a, b) in first.iter().zip(second) {
        match a.partial_cmp(b) {
            Some(std::cmp::Ordering::Less) => wins += 1,
            Some(std::cmp::Ordering::Greater) => losses += 1,
            _ => ties += 1,
        }
    }
    Ok(SignTest {
        wins,
        losses,
        ties,
        p_value: binomial_upper_tail(wins + losses, wins),
    })
}

/// `P(Bin(n, 1/2) ≥ k)`.
pub fn binomial_upper_tail(n: usize, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let ln_half_n = n as f64 * 0.5f64.ln();
    (k..=n)
        .map(|j| (ln_binomial(n as u64, j as u64) + ln_half_n).exp())
        .sum::<f64>()
        .min(1.0)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// `‖G − x‖² / d < ε`.
    #[default]
    PerPixel,
    /// `‖G − x‖² < ε`.
    Total,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PresenceResult {
    pub mean: f64,
    pub std: f64,
    pub per_signal: Vec<f64>,
}

/// Fraction of `n_z` latent draws landing within `ε` of each test signal.
///
/// Signal `i` draws its latents from `rng.fork(i)`, so two priors evaluated
/// from equal streams see the same latent samples.
#[allow(clippy::too_many_arguments)]
pub fn presence_probability(
    prior: &dyn GenerativePrior,
    tests: &[Vec<f64>],
    sensing: &SensingMatrix,
    epsilon: f64,
    n_z: usize,
    mode: ThresholdMode,
    rng: &RngStream,
) -> Result<PresenceResult> {
    if !(epsilon > 0.0) || n_z == 0 {
        return Err(Error::param("presence probability needs ε > 0 and at least one latent draw"));
    }
    if tests.is_empty() {
        return Err(Error::param("presence probability needs at least one test signal"));
    }
    let cond = prior.cond_dim();
    if cond != 0 && cond != sensing.m() {
        return Err(Error::CondDimMismatch {
            expected: sensing.m(),
            found: cond,
        });
    }
    let mut per_signal = Vec::with_capacity(tests.len());
    for (i, x) in tests.iter().enumerate() {
        let y = if cond > 0 { Some(sensing.apply(x)?) } else { None };
        let mut r = rng.fork(i as u64);
        let mut hits = 0usize;
        for _ in 0..n_z {
            let z = r.normal_vec(prior.latent_dim());
            let g = prior.generate(&z, y.as_deref())?;
            let err = match mode {
                ThresholdMode::PerPixel => per_pixel_error(&g, x)?,
                ThresholdMode::Total => per_pixel_error(&g, x)? * x.len() as f64,
            };
            if err < epsilon {
                hits += 1;
            }
        }
        per_signal.push(hits as f64 / n_z as f64);
    }
    let n = per_signal.len() as f64;
    let mean = per_signal.iter().sum::<f64>() / n;
    let std = if per_signal.len() > 1 {
        (per_signal.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(PresenceResult { mean, std, per_signal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{IdentityPrior, SubspacePrior};
    use crate::numcore::Tensor;
    use crate::transforms::UnitaryTransform;

    #[test]
    fn per_pixel_examples() {
        assert_eq!(per_pixel_error(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(per_pixel_error(&[1.0, 0.0, 0.0, 0.0], &[0.0; 4]).unwrap(), 0.25);
        assert!(per_pixel_error(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn interval_examples() {
        let (m, h) = confidence_interval(&[0.3; 5]).unwrap();
        assert!((m - 0.3).abs() < 1e-15);
        assert!(h.abs() < 1e-12);
        let (m, h) = confidence_interval(&[0.0, 1.0]).unwrap();
        assert_eq!(m, 0.5);
        assert!((h - 12.706_204_736 * 0.5).abs() < 1e-6, "{h}");
        assert!(confidence_interval(&[1.0]).is_err());
    }

    #[test]
    fn sign_test_counts_and_tail() {
        let t = sign_test(&[0.1, 0.2, 0.5, 0.4], &[0.2, 0.3, 0.5, 0.1]).unwrap();
        assert_eq!((t.wins, t.losses, t.ties), (2, 1, 1));
        assert!((t.p_value - 0.5).abs() < 1e-12);
        assert!((binomial_upper_tail(10, 10) - 1.0 / 1024.0).abs() < 1e-15);
        assert!((binomial_upper_tail(50, 32) - 0.032_453_33).abs() < 1e-6);
        assert_eq!(sign_test(&[1.0], &[1.0]).unwrap().p_value, 1.0);
    }

    #[test]
    fn presence_extremes() {
        let d = 4;
        let s = SensingMatrix::from_tensor(Tensor::identity(d)).unwrap();
        let tests = vec![vec![0.0; d], vec![5.0; d]];
        let far = SubspacePrior::from_atoms(&UnitaryTransform::identity(d), &[0]).unwrap();
        let r = presence_probability(&far, &tests[1..], &s, 0.01, 50, ThresholdMode::PerPixel, &RngStream::new(0, 0))
            .unwrap();
        assert_eq!((r.mean, r.std), (0.0, 0.0));
        let id = IdentityPrior::new(d);
        assert!(presence_probability(&id, &tests, &s, 0.0, 10, ThresholdMode::PerPixel, &RngStream::new(0, 0)).is_err());
    }
}
