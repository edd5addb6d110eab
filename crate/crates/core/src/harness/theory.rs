//! Empirical checks of the sample-size bound and of the contraction argument
//! for sparse projected descent with an exact range projection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::SubspacePrior;
use crate::numcore::{norm, stable_hash, RngStream};
use crate::recovery::{contraction_factor, spgdgan_recover, step_size_window, Method, Problem, RecoveryConfig};
use crate::rip::{check_rip, support_family_from_trace, theorem2_min_m, RipConvention, SupportFamily};
use crate::sensing::{measure, sample_sensing, NoiseModel};
use crate::transforms::{TransformKind, UnitaryTransform};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RipTrialConfig {
    pub d: usize,
    pub s: usize,
    /// Iteration count `T` entering the bound; the family holds `2T` supports.
    pub iterations: usize,
    pub tau: f64,
    pub gamma: f64,
    /// Overrides the bound when set.
    pub m: Option<usize>,
    pub convention: RipConvention,
    pub transform: TransformKind,
    pub trials: usize,
    pub seed: u64,
}

impl Default for RipTrialConfig {
    fn default() -> Self {
        Self {
            d: 32,
            s: 4,
            iterations: 10,
            tau: 0.1,
            gamma: 3.0,
            m: None,
            convention: RipConvention::Linear,
            transform: TransformKind::Identity,
            trials: 200,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RipTrialReport {
    pub m: usize,
    pub d: usize,
    pub transform: TransformKind,
    pub trials: usize,
    pub passes: usize,
    pub rate: f64,
    /// `1 − τ − 3·sqrt(τ(1−τ)/trials)`.
    pub threshold: f64,
    pub pass: bool,
}

/// Pass rate of `A·U` over `2T` random supports of size `2s`, one Gaussian `A`
/// per trial. Trial `i` uses the same stream for every transform.
pub fn rip_pass_rate(cfg: &RipTrialConfig) -> Result<RipTrialReport> {
    if cfg.trials == 0 {
        return Err(Error::param("at least one trial is required"));
    }
    let m = match cfg.m {
        Some(m) => m,
        None => theorem2_min_m(cfg.s, cfg.iterations, cfg.tau, cfg.gamma)?,
    };
    let u = UnitaryTransform::from_kind(cfg.transform, cfg.d)?.matrix();
    let mut passes = 0;
    for trial in 0..cfg.trials {
        let mut rng = RngStream::new(cfg.seed, stable_hash(&["rip-trial", &trial.to_string()]));
        let a = sample_sensing(m, cfg.d, &mut rng)?;
        let family = SupportFamily::random(cfg.d, 2 * cfg.s, 2 * cfg.iterations, &mut rng);
        let rotated = a.right_multiply(&u)?;
        if check_rip(&rotated, &family, cfg.gamma, cfg.convention)?.pass {
            passes += 1;
        }
    }
    let n = cfg.trials as f64;
    let rate = passes as f64 / n;
    let threshold = 1.0 - cfg.tau - 3.0 * (cfg.tau * (1.0 - cfg.tau) / n).sqrt();
    Ok(RipTrialReport {
        m,
        d: cfg.d,
        transform: cfg.transform,
        trials: cfg.trials,
        passes,
        rate,
        threshold,
        pass: rate >= threshold,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContractionConfig {
    pub d: usize,
    pub s: usize,
    /// Squared restricted-isometry constant.
    pub gamma: f64,
    pub bound_iterations: usize,
    pub tau: f64,
    /// Overrides the sample-size bound when set.
    pub m: Option<usize>,
    /// Overrides the window midpoint when set.
    pub alpha: Option<f64>,
    pub seeds: usize,
    pub max_iterations: usize,
    /// Atoms spanned by the oracle prior; `None` means `2s`.
    pub oracle_width: Option<usize>,
    pub transform: TransformKind,
    /// Accuracies `ε` for the iteration-count fit.
    pub epsilons: Vec<f64>,
    /// The inequality is audited while `‖y − A x_t‖² > floor · ‖y‖²`.
    pub residual_floor: f64,
    pub seed: u64,
}

impl Default for ContractionConfig {
    fn default() -> Self {
        Self {
            d: 32,
            s: 4,
            gamma: 0.25,
            bound_iterations: 10,
            tau: 0.1,
            m: None,
            alpha: None,
            seeds: 50,
            max_iterations: 60,
            oracle_width: None,
            transform: TransformKind::Haar,
            epsilons: (1..=30).map(|k| 0.5f64.powi(k)).collect(),
            residual_floor: 1e-20,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: usize,
    pub rip_pass: bool,
    pub worst_deviation: f64,
    pub family_size: usize,
    pub contraction_holds: bool,
    /// Iterations `t` where `f(x_{t+1}) > c · f(x_t)`.
    pub violations: Vec<usize>,
    /// First `t` with `‖x_t − x_te‖ ≤ ε`, per configured `ε`.
    pub iterations_to_eps: Vec<Option<usize>>,
    pub final_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub m: usize,
    pub d: usize,
    pub s: usize,
    pub gamma: f64,
    pub alpha: f64,
    pub factor: f64,
    pub overdetermined: bool,
    pub seeds: Vec<SeedOutcome>,
    pub rip_passes: usize,
    /// Seeds that pass the isometry check and satisfy the inequality throughout.
    pub contraction_passes: usize,
    pub epsilons: Vec<f64>,
    /// Mean iterations to reach each `ε` over isometry-passing seeds that reach all of them.
    pub mean_iterations: Vec<f64>,
    /// Mean iterations against `ln(1/ε)`.
    pub fit: Option<LinearFit>,
    pub pass: bool,
}

impl ContractionReport {
    /// Fraction of seeds reaching `epsilons[k]` within the iteration budget.
    pub fn converged_fraction(&self, k: usize) -> f64 {
        let hit = self
            .seeds
            .iter()
            .filter(|s| s.iterations_to_eps.get(k).copied().flatten().is_some())
            .count();
        hit as f64 / self.seeds.len().max(1) as f64
    }
}

/// Ordinary least squares `y ≈ slope·x + intercept` with coefficient of determination.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LinearFit { slope, intercept, r2 })
}

/// Builds a target that is `s`-sparse in `U` and an oracle prior whose range
/// contains it, runs sparse projected descent at the window midpoint, and
/// audits the per-iteration fidelity contraction on seeds whose realized
/// support family passes the squared isometry check.
pub fn theorem1_verification(cfg: &ContractionConfig) -> Result<ContractionReport> {
    let (d, s) = (cfg.d, cfg.s);
    if s == 0 || 2 * s > d {
        return Err(Error::param(format!("sparsity {s} must satisfy 1 ≤ 2s ≤ d = {d}")));
    }
    let (lo, hi) = step_size_window(cfg.gamma)?;
    let alpha = cfg.alpha.unwrap_or(0.5 * (lo + hi));
    let factor = contraction_factor(alpha, cfg.gamma);
    let m = match cfg.m {
        Some(m) => m,
        None => theorem2_min_m(s, cfg.bound_iterations, cfg.tau, cfg.gamma)?,
    };
    let u = UnitaryTransform::from_kind(cfg.transform, d)?;
    let width = cfg.oracle_width.unwrap_or(2 * s);
    let rcfg = RecoveryConfig {
        method: Method::Spgdgan,
        iterations: cfg.max_iterations,
        step: alpha,
        sparsity: Some(s),
        keep_iterates: true,
        ..RecoveryConfig::default()
    };
    let mut seeds = Vec::with_capacity(cfg.seeds);
    for seed in 0..cfg.seeds {
        let mut rng = RngStream::new(cfg.seed, stable_hash(&["contraction", &seed.to_string()]));
        let support = rng.subset(d, s);
        let mut c = vec![0.0; d];
        for &i in &support {
            c[i] = rng.normal();
        }
        let x = u.inverse(&c)?;
        let a = sample_sensing(m, d, &mut rng)?;
        let y = measure(&a, &x, NoiseModel::None, &mut rng)?;
        let prior = SubspacePrior::oracle(&u, &x, s, width, &mut rng)?;
        let problem = Problem::new(&a, &y).with_target(&x);
        let trace = spgdgan_recover(&prior, &problem, &u, &rcfg, &mut rng)?;

        let family = support_family_from_trace(&trace, &u, s)?;
        let rotated = a.right_multiply(&u.matrix())?;
        // A support wider than m has σ_min = 0, so the isometry cannot hold on it.
        let (rip_pass, worst_deviation) = if family.iter().any(|sup| sup.len() > m) {
            (false, 1.0)
        } else {
            let rip = check_rip(&rotated, &family, cfg.gamma, RipConvention::Squared)?;
            (rip.pass, rip.worst_deviation())
        };

        let floor = cfg.residual_floor * y.iter().map(|v| v * v).sum::<f64>();
        let violations: Vec<usize> = trace
            .fidelity
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0] > floor && w[1] > factor * w[0])
            .map(|(t, _)| t)
            .collect();
        let iterates = trace.iterates.as_ref().expect("iterates retained");
        let dist: Vec<f64> = iterates
            .iter()
            .map(|xt| norm(&xt.iter().zip(&x).map(|(p, q)| p - q).collect::<Vec<_>>()))
            .collect();
        let iterations_to_eps = cfg
            .epsilons
            .iter()
            .map(|&eps| dist.iter().position(|&e| e <= eps))
            .collect();
        seeds.push(SeedOutcome {
            seed,
            rip_pass,
            worst_deviation,
            family_size: family.len(),
            contraction_holds: violations.is_empty(),
            violations,
            iterations_to_eps,
            final_error: *dist.last().expect("non-empty trace"),
        });
    }

    let rip_passes = seeds.iter().filter(|o| o.rip_pass).count();
    let contraction_passes = seeds.iter().filter(|o| o.rip_pass && o.contraction_holds).count();
    let complete: Vec<&SeedOutcome> = seeds
        .iter()
        .filter(|o| o.rip_pass && o.iterations_to_eps.iter().all(Option::is_some))
        .collect();
    let mean_iterations: Vec<f64> = if complete.is_empty() {
        Vec::new()
    } else {
        (0..cfg.epsilons.len())
            .map(|k| {
                complete.iter().map(|o| o.iterations_to_eps[k].expect("complete") as f64).sum::<f64>()
                    / complete.len() as f64
            })
            .collect()
    };
    let log_inv: Vec<f64> = cfg.epsilons.iter().map(|e| (1.0 / e).ln()).collect();
    let fit = if mean_iterations.is_empty() {
        None
    } else {
        linear_fit(&log_inv, &mean_iterations)
    };
    let pass = rip_passes > 0
        && contraction_passes == rip_passes
        && fit.as_ref().is_some_and(|f| f.r2 >= 0.9 && f.slope > 0.0);
    Ok(ContractionReport {
        m,
        d,
        s,
        gamma: cfg.gamma,
        alpha,
        factor,
        overdetermined: m > d,
        seeds,
        rip_passes,
        contraction_passes,
        epsilons: cfg.epsilons.clone(),
        mean_iterations,
        fit,
        pass,
    })
}
