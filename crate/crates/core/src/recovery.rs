//! Test-phase recovery: latent descent, projected descent with a generator
//! projection, its sparsified variant, and the sparse-deviation variant.
//!
//! Every routine accepts marginal priors (`im = false`) and priors that also
//! read the measurement vector (`im = true`).

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::GenerativePrior;
use crate::numcore::{norm_sq, RngStream, Tape, Tensor, Var};
use crate::sensing::SensingMatrix;
use crate::transforms::{sparsify, UnitaryTransform};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Csgm,
    Pgdgan,
    Spgdgan,
    Sparsegen,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Csgm, Method::Pgdgan, Method::Spgdgan, Method::Sparsegen];

    pub fn name(self) -> &'static str {
        match self {
            Method::Csgm => "csgm",
            Method::Pgdgan => "pgdgan",
            Method::Spgdgan => "spgdgan",
            Method::Sparsegen => "sparsegen",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::param(format!("unknown recovery method '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecoveryConfig {
    pub method: Method,
    pub im: bool,
    /// Outer iterations `T`.
    pub iterations: usize,
    /// Inner projection steps `K`.
    pub inner_steps: usize,
    /// Latent (and deviation) step size `τ`.
    pub latent_lr: f64,
    /// Data-fidelity step size `α`.
    pub step: f64,
    /// Transform-domain sparsity; `None` means `d/2`.
    pub sparsity: Option<usize>,
    pub sparsegen_lambda: f64,
    /// Iterations spent on the latent alone before the deviation is released.
    pub sparsegen_phase: usize,
    pub restarts: usize,
    pub seed: u64,
    pub keep_iterates: bool,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            method: Method::Csgm,
            im: false,
            iterations: 10,
            inner_steps: 100,
            latent_lr: 0.1,
            step: 0.5,
            sparsity: None,
            sparsegen_lambda: 0.1,
            sparsegen_phase: 250,
            restarts: 1,
            seed: 0,
            keep_iterates: false,
        }
    }
}

/// Deviation penalties searched for the sparse-deviation method.
pub const SPARSEGEN_LAMBDAS: [f64; 3] = [0.1, 0.5, 1.0];

impl RecoveryConfig {
    pub fn for_method(method: Method) -> Self {
        let mut cfg = Self {
            method,
            ..Self::default()
        };
        if method == Method::Sparsegen {
            cfg.iterations = 500;
            cfg.sparsegen_phase = 250;
        }
        cfg
    }

    pub fn sparsity_for(&self, d: usize) -> usize {
        self.sparsity.unwrap_or(d / 2)
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if !(self.latent_lr > 0.0) || !self.latent_lr.is_finite() {
            return Err(Error::param(format!("latent step size must be positive, got {}", self.latent_lr)));
        }
        if !(self.step >= 0.0) || !self.step.is_finite() {
            return Err(Error::param(format!("step size must be non-negative, got {}", self.step)));
        }
        if self.sparsity_for(d) > d {
            return Err(Error::param(format!("sparsity {} exceeds dimension {d}", self.sparsity_for(d))));
        }
        if self.restarts == 0 {
            return Err(Error::param("at least one restart is required"));
        }
        if self.method == Method::Sparsegen {
            if self.sparsegen_phase > self.iterations {
                return Err(Error::param(format!(
                    "latent-only phase {} exceeds iteration count {}",
                    self.sparsegen_phase, self.iterations
                )));
            }
            if !(self.sparsegen_lambda >= 0.0) {
                return Err(Error::param("deviation penalty must be non-negative"));
            }
        }
        Ok(())
    }
}

/// A noiseless or noisy instance `y = A x + ω`, optionally with the truth.
#[derive(Clone, Copy, Debug)]
pub struct Problem<'a> {
    pub sensing: &'a SensingMatrix,
    pub y: &'a [f64],
    pub target: Option<&'a [f64]>,
}

impl<'a> Problem<'a> {
    pub fn new(sensing: &'a SensingMatrix, y: &'a [f64]) -> Self {
        Self {
            sensing,
            y,
            target: None,
        }
    }

    pub fn with_target(mut self, target: &'a [f64]) -> Self {
        self.target = Some(target);
        self
    }

    fn check(&self) -> Result<()> {
        if self.y.len() != self.sensing.m() {
            return Err(Error::dim("measurement", &[self.sensing.m()], &[self.y.len()]));
        }
        if let Some(t) = self.target {
            if t.len() != self.sensing.d() {
                return Err(Error::dim("target", &[self.sensing.d()], &[t.len()]));
            }
        }
        Ok(())
    }
}

/// Per-iteration record. Entry `t` of each series describes `x_t`, `t = 0..=T`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RecoveryTrace {
    pub iterates: Option<Vec<Vec<f64>>>,
    /// `‖y − A x_t‖²`.
    pub fidelity: Vec<f64>,
    /// `‖x_t − x_te‖² / d`, when the target is known.
    pub per_pixel_error: Option<Vec<f64>>,
    pub target: Option<Vec<f64>>,
    pub estimate: Vec<f64>,
    /// Final additive deviation `ν_T` of the sparse-deviation method.
    pub deviation: Option<Vec<f64>>,
    pub wall_ms: f64,
}

impl RecoveryTrace {
    fn start(problem: &Problem<'_>, keep_iterates: bool) -> Self {
        Self {
            iterates: keep_iterates.then(Vec::new),
            per_pixel_error: problem.target.map(|_| Vec::new()),
            target: problem.target.map(<[f64]>::to_vec),
            ..Self::default()
        }
    }

    fn push(&mut self, x: &[f64], fidelity: f64) {
        self.fidelity.push(fidelity);
        if let (Some(errs), Some(t)) = (self.per_pixel_error.as_mut(), self.target.as_ref()) {
            errs.push(pixel_error(x, t));
        }
        if let Some(it) = self.iterates.as_mut() {
            it.push(x.to_vec());
        }
    }

    pub fn iterations(&self) -> usize {
        self.fidelity.len().saturating_sub(1)
    }

    pub fn final_fidelity(&self) -> f64 {
        self.fidelity.last().copied().unwrap_or(f64::INFINITY)
    }

    /// Columns `t,fidelity,per_pixel_error`; the error column is empty when unknown.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,fidelity,per_pixel_error\n");
        for (t, f) in self.fidelity.iter().enumerate() {
            let e = self
                .per_pixel_error
                .as_ref()
                .map(|v| format!("{:e}", v[t]))
                .unwrap_or_default();
            out.push_str(&format!("{t},{f:e},{e}\n"));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn pixel_error(x: &[f64], t: &[f64]) -> f64 {
    x.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64
}

fn check_prior(prior: &dyn GenerativePrior, problem: &Problem<'_>, im: bool) -> Result<()> {
    problem.check()?;
    let m = problem.sensing.m();
    let expected = if im { m } else { 0 };
    if prior.cond_dim() != expected {
        return Err(Error::CondDimMismatch {
            expected,
            found: prior.cond_dim(),
        });
    }
    if prior.output_dim() != problem.sensing.d() {
        return Err(Error::dim("prior output", &[problem.sensing.d()], &[prior.output_dim()]));
    }
    Ok(())
}

fn conditioning<'a>(problem: &Problem<'a>, im: bool) -> Option<&'a [f64]> {
    im.then_some(problem.y)
}

fn record_inputs(tape: &mut Tape, z: &[f64], y: Option<&[f64]>) -> (Var, Option<Var>) {
    let zv = tape.leaf(Tensor::vector(z.to_vec()));
    let yv = y.map(|y| tape.constant(Tensor::vector(y.to_vec())));
    (zv, yv)
}

/// Value, gradient in `z`, and `G(z[, y])` for `‖y − A G(z[, y])‖²`.
pub fn measurement_loss(
    prior: &dyn GenerativePrior,
    sensing: &SensingMatrix,
    y: &[f64],
    z: &[f64],
    cond: Option<&[f64]>,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let mut tape = Tape::new();
    let (zv, cv) = record_inputs(&mut tape, z, cond);
    let g = prior.record(&mut tape, zv, cv)?;
    let a = tape.constant(sensing.matrix().clone());
    let yv = tape.constant(Tensor::vector(y.to_vec()));
    let ag = tape.matmul(a, g)?;
    let r = tape.sub(ag, yv)?;
    let loss = tape.sum_sq(r)?;
    let mut grads = tape.grad(loss, &[zv])?;
    let gz = grads.take(zv).expect("requested leaf").into_data();
    Ok((tape.value(loss).item()?, gz, tape.value(g).data().to_vec()))
}

/// Value and gradient in `z` of `‖w − G(z[, y])‖²`.
pub fn projection_loss(
    prior: &dyn GenerativePrior,
    w: &[f64],
    z: &[f64],
    cond: Option<&[f64]>,
) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::new();
    let (zv, cv) = record_inputs(&mut tape, z, cond);
    let g = prior.record(&mut tape, zv, cv)?;
    let wv = tape.constant(Tensor::vector(w.to_vec()));
    let r = tape.sub(wv, g)?;
    let loss = tape.sum_sq(r)?;
    let mut grads = tape.grad(loss, &[zv])?;
    Ok((tape.value(loss).item()?, grads.take(zv).expect("requested leaf").into_data()))
}

/// Output of [`deviation_loss`].
#[derive(Clone, Debug)]
pub struct DeviationLoss {
    pub value: f64,
    /// `‖A(G + ν) − y‖²` alone.
    pub fidelity: f64,
    pub grad_z: Vec<f64>,
    /// `None` when `ν` was held fixed.
    pub grad_nu: Option<Vec<f64>>,
    pub estimate: Vec<f64>,
}

/// `‖A(G(z[, y]) + ν) − y‖² + λ‖Bν‖₁` with `B` the analysis operator of `b`.
#[allow(clippy::too_many_arguments)]
pub fn deviation_loss(
    prior: &dyn GenerativePrior,
    sensing: &SensingMatrix,
    y: &[f64],
    b: &Tensor,
    lambda: f64,
    z: &[f64],
    nu: &[f64],
    nu_free: bool,
    cond: Option<&[f64]>,
) -> Result<DeviationLoss> {
    let mut tape = Tape::new();
    let (zv, cv) = record_inputs(&mut tape, z, cond);
    let nuv = if nu_free {
        tape.leaf(Tensor::vector(nu.to_vec()))
    } else {
        tape.constant(Tensor::vector(nu.to_vec()))
    };
    let g = prior.record(&mut tape, zv, cv)?;
    let x = tape.add(g, nuv)?;
    let a = tape.constant(sensing.matrix().clone());
    let yv = tape.constant(Tensor::vector(y.to_vec()));
    let ax = tape.matmul(a, x)?;
    let r = tape.sub(ax, yv)?;
    let fid = tape.sum_sq(r)?;
    let bm = tape.constant(b.clone());
    let bnu = tape.matmul(bm, nuv)?;
    let l1 = tape.l1_norm(bnu)?;
    let pen = tape.scale(l1, lambda)?;
    let loss = tape.add(fid, pen)?;
    let leaves: Vec<Var> = if nu_free { vec![zv, nuv] } else { vec![zv] };
    let mut grads = tape.grad(loss, &leaves)?;
    Ok(DeviationLoss {
        value: tape.value(loss).item()?,
        fidelity: tape.value(fid).item()?,
        grad_z: grads.take(zv).expect("requested leaf").into_data(),
        grad_nu: nu_free.then(|| grads.take(nuv).expect("requested leaf").into_data()),
        estimate: tape.value(x).data().to_vec(),
    })
}

fn descend(z: &mut [f64], g: &[f64], lr: f64) {
    for (a, b) in z.iter_mut().zip(g) {
        *a -= lr * b;
    }
}

fn check_finite(v: f64, what: &'static str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Runs `run` once per restart on forked streams and keeps the lowest final fidelity.
fn best_of<F>(cfg: &RecoveryConfig, rng: &mut RngStream, mut run: F) -> Result<RecoveryTrace>
where
    F: FnMut(&mut RngStream) -> Result<RecoveryTrace>,
{
    let started = Instant::now();
    let mut best: Option<RecoveryTrace> = None;
    for r in 0..cfg.restarts {
        let trace = if cfg.restarts == 1 {
            run(rng)?
        } else {
            run(&mut rng.fork(r as u64))?
        };
        if best.as_ref().is_none_or(|b| trace.final_fidelity() < b.final_fidelity()) {
            best = Some(trace);
        }
    }
    let mut best = best.expect("at least one restart");
    best.wall_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(best)
}

/// Gradient descent on `‖y − A G(z[, y])‖²` from `z₀ ~ N(0, I)`.
pub fn csgm_recover(
    prior: &dyn GenerativePrior,
    problem: &Problem<'_>,
    cfg: &RecoveryConfig,
    rng: &mut RngStream,
) -> Result<RecoveryTrace> {
    check_prior(prior, problem, cfg.im)?;
    cfg.validate(problem.sensing.d())?;
    let cond = conditioning(problem, cfg.im);
    best_of(cfg, rng, |rng| {
        let mut trace = RecoveryTrace::start(problem, cfg.keep_iterates);
        let mut z = rng.normal_vec(prior.latent_dim());
        for _ in 0..cfg.iterations {
            let (f, gz, x) = measurement_loss(prior, problem.sensing, problem.y, &z, cond)?;
            check_finite(f, "latent descent")?;
            trace.push(&x, f);
            descend(&mut z, &gz, cfg.latent_lr);
        }
        let x = prior.generate(&z, cond)?;
        let f = problem.sensing.fidelity(problem.y, &x)?;
        check_finite(f, "latent descent")?;
        trace.push(&x, f);
        trace.estimate = x;
        Ok(trace)
    })
}

/// `argmin_z ‖w − G(z[, y])‖²` by `K` gradient steps from a fresh `z₀`, or exactly
/// when the prior admits it. Returns `G(z*)`.
pub fn project_onto_range(
    prior: &dyn GenerativePrior,
    w: &[f64],
    cond: Option<&[f64]>,
    cfg: &RecoveryConfig,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if let Some(z) = prior.project_exact(w, cond) {
        return prior.generate(&z, cond);
    }
    let mut z = rng.normal_vec(prior.latent_dim());
    for _ in 0..cfg.inner_steps {
        let (f, gz) = projection_loss(prior, w, &z, cond)?;
        check_finite(f, "range projection")?;
        descend(&mut z, &gz, cfg.latent_lr);
    }
    prior.generate(&z, cond)
}

fn projected_descent(
    prior: &dyn GenerativePrior,
    problem: &Problem<'_>,
    cfg: &RecoveryConfig,
    rng: &mut RngStream,
    sparsifier: Option<(&UnitaryTransform, usize)>,
) -> Result<RecoveryTrace> {
    check_prior(prior, problem, cfg.im)?;
    cfg.validate(problem.sensing.d())?;
    let cond = conditioning(problem, cfg.im);
    let s = problem.sensing;
    best_of(cfg, rng, |rng| {
        let mut trace = RecoveryTrace::start(problem, cfg.keep_iterates);
        let mut x = vec![0.0; s.d()];
        trace.push(&x, s.fidelity(problem.y, &x)?);
        for _ in 0..cfg.iterations {
            let ax = s.apply(&x)?;
            let r: Vec<f64> = ax.iter().zip(problem.y).map(|(a, b)| a - b).collect();
            let g = s.adjoint(&r)?;
            let w: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - cfg.step * b).collect();
            let p = project_onto_range(prior, &w, cond, cfg, rng)?;
            x = match sparsifier {
                Some((u, k)) if k < s.d() => sparsify(u, &p, k)?,
                _ => p,
            };
            let f = s.fidelity(problem.y, &x)?;
            check_finite(f, "projected descent")?;
            trace.push(&x, f);
        }
        trace.estimate = x;
        Ok(trace)
    })
}

/// `x_{t+1} = P_G(x_t − α Aᵀ(A x_t − y))` from `x₀ = 0`.
pub fn pgdgan_recover(
    prior: &dyn GenerativePrior,
    problem: &Problem<'_>,
    cfg: &RecoveryConfig,
    rng: &mut RngStream,
) -> Result<RecoveryTrace> {
    projected_descent(prior, problem, cfg, rng, None)
}

/// As [`pgdgan_recover`], followed by `U h_s(Uᵀ ·)` every iteration.
/// With `s = d` the sparsification is the identity and is skipped.
pub fn spgdgan_recover(
    prior: &dyn GenerativePrior,
    problem: &Problem<'_>,
    u: &UnitaryTransform,
    cfg: &RecoveryConfig,
    rng: &mut RngStream,
) -> Result<RecoveryTrace> {
    let d = problem.sensing.d();
    if u.dim() != d {
        return Err(Error::dim("sparsifying transform", &[d], &[u.dim()]));
    }
    let k = cfg.sparsity_for(d);
    projected_descent(prior, problem, cfg, rng, Some((u, k)))
}

/// Latent descent for the first `L` iterations, then joint descent on the
/// latent and an additive deviation `ν` penalized by `λ‖Bν‖₁`.
/// The estimate is `G(z_T[, y]) + ν_T`.
pub fn sparsegen_recover(
    prior: &dyn GenerativePrior,
    problem: &Problem<'_>,
    b: &UnitaryTransform,
    cfg: &RecoveryConfig,
    rng: &mut RngStream,
) -> Result<RecoveryTrace> {
    check_prior(prior, problem, cfg.im)?;
    cfg.validate(problem.sensing.d())?;
    let d = problem.sensing.d();
    if b.dim() != d {
        return Err(Error::dim("deviation transform", &[d], &[b.dim()]));
    }
    let analysis = b.matrix().transpose()?;
    let cond = conditioning(problem, cfg.im);
    best_of(cfg, rng, |rng| {
        let mut trace = RecoveryTrace::start(problem, cfg.keep_iterates);
        let mut z = rng.normal_vec(prior.latent_dim());
        let mut nu = vec![0.0; d];
        for t in 0..cfg.iterations {
            let free = t >= cfg.sparsegen_phase;
            let l = deviation_loss(
                prior,
                problem.sensing,
                problem.y,
                &analysis,
                cfg.sparsegen_lambda,
                &z,
                &nu,
                free,
                cond,
            )?;
            check_finite(l.value, "sparse deviation")?;
            trace.push(&l.estimate, l.fidelity);
            descend(&mut z, &l.grad_z, cfg.latent_lr);
            if let Some(gn) = &l.grad_nu {
                descend(&mut nu, gn, cfg.latent_lr);
            }
        }
        let g = prior.generate(&z, cond)?;
        let x: Vec<f64> = g.iter().zip(&nu).map(|(a, b)| a + b).collect();
        let f = problem.sensing.fidelity(problem.y, &x)?;
        check_finite(f, "sparse deviation")?;
        trace.push(&x, f);
        trace.estimate = x;
        trace.deviation = Some(nu);
        Ok(trace)
    })
}

/// Dispatches on `cfg.method`. `u` is the sparsifying transform for the
/// sparsified method and the deviation transform for the sparse-deviation method.
pub fn recover(
    prior: &dyn GenerativePrior,
    problem: &Problem<'_>,
    u: &UnitaryTransform,
    cfg: &RecoveryConfig,
    rng: &mut RngStream,
) -> Result<RecoveryTrace> {
    match cfg.method {
        Method::Csgm => csgm_recover(prior, problem, cfg, rng),
        Method::Pgdgan => pgdgan_recover(prior, problem, cfg, rng),
        Method::Spgdgan => spgdgan_recover(prior, problem, u, cfg, rng),
        Method::Sparsegen => sparsegen_recover(prior, problem, u, cfg, rng),
    }
}

/// Step sizes `α` with guaranteed contraction under squared RIP constant `γ`:
/// `(1/(2(1−γ)), 1/(1+γ))`, nonempty only for `γ < 1/3`.
pub fn step_size_window(gamma: f64) -> Result<(f64, f64)> {
    if !(gamma >= 0.0) {
        return Err(Error::param(format!("gamma must be non-negative, got {gamma}")));
    }
    let lo = 1.0 / (2.0 * (1.0 - gamma));
    let hi = 1.0 / (1.0 + gamma);
    if gamma >= 1.0 / 3.0 || lo >= hi {
        return Err(Error::EmptyWindow { gamma });
    }
    Ok((lo, hi))
}

/// Per-iteration fidelity ratio bound `1/(α(1−γ)) − 1`.
pub fn contraction_factor(alpha: f64, gamma: f64) -> f64 {
    1.0 / (alpha * (1.0 - gamma)) - 1.0
}

/// `‖x‖²` of the residual `y − A x`, relative to `‖y‖²`.
pub fn relative_fidelity(trace: &RecoveryTrace, y: &[f64]) -> Vec<f64> {
    let n = norm_sq(y).max(f64::MIN_POSITIVE);
    trace.fidelity.iter().map(|f| f / n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Activation, FixedConditioning, GeneratorNet, IdentityPrior, MlpSpec, SubspacePrior};
    use crate::sensing::{measure, sample_sensing, NoiseModel};

    fn eye(d: usize) -> SensingMatrix {
        SensingMatrix::from_tensor(Tensor::identity(d)).unwrap()
    }

    #[test]
    fn window_examples() {
        assert_eq!(step_size_window(0.0).unwrap(), (0.5, 1.0));
        let (lo, hi) = step_size_window(0.2).unwrap();
        assert!((lo - 0.625).abs() < 1e-15 && (hi - 1.0 / 1.2).abs() < 1e-15);
        assert!(matches!(step_size_window(1.0 / 3.0), Err(Error::EmptyWindow { .. })));
        assert!(matches!(step_size_window(0.5), Err(Error::EmptyWindow { .. })));
        assert!(step_size_window(-0.1).is_err());
    }

    #[test]
    fn midpoint_contracts_below_one() {
        let (lo, hi) = step_size_window(0.25).unwrap();
        let a = 0.5 * (lo + hi);
        let c = contraction_factor(a, 0.25);
        assert!(c > 0.0 && c < 1.0, "{c}");
    }

    #[test]
    fn csgm_identity_solves_least_squares() {
        let d = 6;
        let s = eye(d);
        let x: Vec<f64> = (0..d).map(|i| (i as f64 - 2.5) * 0.3).collect();
        let y = s.apply(&x).unwrap();
        let cfg = RecoveryConfig {
            iterations: 500,
            latent_lr: 0.25,
            ..RecoveryConfig::default()
        };
        let p = Problem::new(&s, &y).with_target(&x);
        let tr = csgm_recover(&IdentityPrior::new(d), &p, &cfg, &mut RngStream::new(1, 1)).unwrap();
        assert!(tr.final_fidelity() < 1e-8);
        assert_eq!(tr.fidelity.len(), 501);
    }

    #[test]
    fn csgm_zero_iterations_returns_initial_output() {
        let d = 4;
        let s = eye(d);
        let y = vec![1.0; d];
        let cfg = RecoveryConfig {
            iterations: 0,
            ..RecoveryConfig::default()
        };
        let tr = csgm_recover(&IdentityPrior::new(d), &Problem::new(&s, &y), &cfg, &mut RngStream::new(5, 0)).unwrap();
        let z0 = RngStream::new(5, 0).normal_vec(d);
        assert_eq!(tr.estimate, z0);
    }

    #[test]
    fn conditioning_mismatch_is_reported() {
        let d = 4;
        let s = eye(d);
        let y = vec![0.0; d];
        let cfg = RecoveryConfig {
            im: true,
            ..RecoveryConfig::default()
        };
        let err = csgm_recover(&IdentityPrior::new(d), &Problem::new(&s, &y), &cfg, &mut RngStream::new(0, 0));
        assert!(matches!(err, Err(Error::CondDimMismatch { expected: 4, found: 0 })));
    }

    #[test]
    fn pgd_identity_is_gradient_descent() {
        let mut rng = RngStream::new(3, 0);
        let s = sample_sensing(4, 8, &mut rng).unwrap();
        let x = rng.normal_vec(8);
        let y = measure(&s, &x, NoiseModel::None, &mut rng).unwrap();
        let cfg = RecoveryConfig {
            iterations: 30,
            step: 0.2,
            ..RecoveryConfig::default()
        };
        let tr = pgdgan_recover(&IdentityPrior::new(8), &Problem::new(&s, &y), &cfg, &mut rng).unwrap();
        let mut xr = vec![0.0; 8];
        for _ in 0..30 {
            let r: Vec<f64> = s.apply(&xr).unwrap().iter().zip(&y).map(|(a, b)| a - b).collect();
            let g = s.adjoint(&r).unwrap();
            xr = xr.iter().zip(&g).map(|(a, b)| a - 0.2 * b).collect();
        }
        assert_eq!(tr.estimate, xr);
    }

    #[test]
    fn pgd_zero_step_stays_at_origin_projection() {
        let s = eye(4);
        let y = vec![1.0, 2.0, 3.0, 4.0];
        let cfg = RecoveryConfig {
            step: 0.0,
            ..RecoveryConfig::default()
        };
        let tr = pgdgan_recover(&IdentityPrior::new(4), &Problem::new(&s, &y), &cfg, &mut RngStream::new(0, 0)).unwrap();
        assert_eq!(tr.estimate, vec![0.0; 4]);
    }

    #[test]
    fn spgd_full_sparsity_matches_pgd() {
        let mut rng = RngStream::new(9, 0);
        let s = sample_sensing(6, 8, &mut rng).unwrap();
        let y = rng.normal_vec(6);
        let spec = MlpSpec::uniform(3, &[5], 8, Activation::Tanh, Activation::Linear, 0).unwrap();
        let g = GeneratorNet::initialized(spec, 3, 0, &mut rng).unwrap();
        let cfg = RecoveryConfig {
            iterations: 3,
            inner_steps: 5,
            sparsity: Some(8),
            ..RecoveryConfig::default()
        };
        let u = UnitaryTransform::haar(8).unwrap();
        let p = Problem::new(&s, &y);
        let a = spgdgan_recover(&g, &p, &u, &cfg, &mut RngStream::new(1, 1)).unwrap();
        let b = pgdgan_recover(&g, &p, &cfg, &mut RngStream::new(1, 1)).unwrap();
        assert_eq!(a.fidelity, b.fidelity);
        assert_eq!(a.estimate, b.estimate);
    }

    #[test]
    fn spgd_iterates_are_sparse() {
        let mut rng = RngStream::new(2, 0);
        let s = sample_sensing(8, 16, &mut rng).unwrap();
        let y = rng.normal_vec(8);
        let u = UnitaryTransform::haar(16).unwrap();
        let cfg = RecoveryConfig {
            iterations: 5,
            sparsity: Some(3),
            keep_iterates: true,
            ..RecoveryConfig::default()
        };
        let tr = spgdgan_recover(&IdentityPrior::new(16), &Problem::new(&s, &y), &u, &cfg, &mut rng).unwrap();
        for x in &tr.iterates.unwrap()[1..] {
            let c = u.forward(x).unwrap();
            assert!(c.iter().filter(|v| v.abs() > 1e-12).count() <= 3);
        }
    }

    #[test]
    fn sparsegen_without_release_matches_csgm() {
        let mut rng = RngStream::new(4, 0);
        let s = sample_sensing(5, 8, &mut rng).unwrap();
        let y = rng.normal_vec(5);
        let spec = MlpSpec::uniform(3, &[6], 8, Activation::Tanh, Activation::Linear, 0).unwrap();
        let g = GeneratorNet::initialized(spec, 3, 0, &mut rng).unwrap();
        let cfg = RecoveryConfig {
            method: Method::Sparsegen,
            iterations: 20,
            sparsegen_phase: 20,
            ..RecoveryConfig::default()
        };
        let u = UnitaryTransform::haar(8).unwrap();
        let p = Problem::new(&s, &y);
        let a = sparsegen_recover(&g, &p, &u, &cfg, &mut RngStream::new(7, 7)).unwrap();
        let b = csgm_recover(&g, &p, &cfg, &mut RngStream::new(7, 7)).unwrap();
        assert_eq!(a.estimate, b.estimate);
        assert_eq!(a.fidelity, b.fidelity);
    }

    #[test]
    fn sparsegen_heavy_penalty_suppresses_deviation() {
        let mut rng = RngStream::new(6, 0);
        let s = sample_sensing(6, 8, &mut rng).unwrap();
        let y = rng.normal_vec(6);
        let prior = SubspacePrior::from_atoms(&UnitaryTransform::identity(8), &[0, 1]).unwrap();
        let cfg = RecoveryConfig {
            method: Method::Sparsegen,
            iterations: 40,
            sparsegen_phase: 10,
            sparsegen_lambda: 1e6,
            latent_lr: 1e-10,
            ..RecoveryConfig::default()
        };
        let u = UnitaryTransform::haar(8).unwrap();
        let tr = sparsegen_recover(&prior, &Problem::new(&s, &y), &u, &cfg, &mut rng).unwrap();
        let nu = tr.deviation.unwrap();
        assert!(norm_sq(&nu).sqrt() <= 1e-3);
    }

    #[test]
    fn fixed_conditioning_composes() {
        let mut rng = RngStream::new(11, 0);
        let s = sample_sensing(3, 6, &mut rng).unwrap();
        let y = rng.normal_vec(3);
        let spec = MlpSpec::uniform(2 + 3, &[7], 6, Activation::Tanh, Activation::Linear, 0).unwrap();
        let g = GeneratorNet::initialized(spec, 2, 3, &mut rng).unwrap();
        let fixed = FixedConditioning { inner: &g, y: y.clone() };
        let p = Problem::new(&s, &y);
        let im = RecoveryConfig {
            im: true,
            iterations: 15,
            ..RecoveryConfig::default()
        };
        let marg = RecoveryConfig { im: false, ..im.clone() };
        let a = csgm_recover(&g, &p, &im, &mut RngStream::new(2, 2)).unwrap();
        let b = csgm_recover(&fixed, &p, &marg, &mut RngStream::new(2, 2)).unwrap();
        assert_eq!(a.fidelity, b.fidelity);
        assert_eq!(a.estimate, b.estimate);
    }

    #[test]
    fn restarts_keep_best() {
        let mut rng = RngStream::new(12, 0);
        let s = sample_sensing(4, 8, &mut rng).unwrap();
        let y = rng.normal_vec(4);
        let spec = MlpSpec::uniform(2, &[4], 8, Activation::Tanh, Activation::Linear, 0).unwrap();
        let g = GeneratorNet::initialized(spec, 2, 0, &mut rng).unwrap();
        let p = Problem::new(&s, &y);
        let cfg = RecoveryConfig {
            restarts: 4,
            iterations: 5,
            ..RecoveryConfig::default()
        };
        let best = csgm_recover(&g, &p, &cfg, &mut RngStream::new(3, 3)).unwrap();
        let base = RngStream::new(3, 3);
        for r in 0..4 {
            let single = RecoveryConfig { restarts: 1, ..cfg.clone() };
            let t = csgm_recover(&g, &p, &single, &mut base.fork(r)).unwrap();
            assert!(best.final_fidelity() <= t.final_fidelity());
        }
    }

    #[test]
    fn trace_csv_shape() {
        let s = eye(2);
        let y = vec![1.0, 1.0];
        let x = vec![1.0, 1.0];
        let cfg = RecoveryConfig {
            iterations: 2,
            ..RecoveryConfig::default()
        };
        let tr = csgm_recover(&IdentityPrior::new(2), &Problem::new(&s, &y).with_target(&x), &cfg, &mut RngStream::new(0, 0))
            .unwrap();
        let csv = tr.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,fidelity,per_pixel_error");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].split(',').all(|c| !c.is_empty()));
        let back: RecoveryTrace = serde_json::from_str(&tr.to_json().unwrap()).unwrap();
        assert_eq!(back, tr);
    }

    #[test]
    fn sparsegen_phase_longer_than_budget_rejected() {
        let cfg = RecoveryConfig {
            method: Method::Sparsegen,
            iterations: 10,
            sparsegen_phase: 11,
            ..RecoveryConfig::default()
        };
        assert!(cfg.validate(4).is_err());
    }
}
