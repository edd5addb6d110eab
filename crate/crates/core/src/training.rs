//! Generator training: adversarial with a probability head, adversarial with an
//! autoencoder discriminator and a balance controller, and meta-learned latent
//! adaptation without a discriminator. Plus JSON checkpoints.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{DiscriminatorNet, DiscriminatorShape, GeneratorNet, MlpSpec, NormOrder, ParamVec};
use crate::numcore::{RngStream, Tape, Tensor, Var};
use crate::sensing::SensingMatrix;

/// Clamp floor inside every logarithm.
pub const LOG_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    Dcgan,
    Began,
    Dcs,
}

/// Generator side of the probability-head game.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorLoss {
    /// Descend `mean ln(1 − D(G(z)))`.
    #[default]
    Minimax,
    /// Descend `−mean ln D(G(z))`.
    NonSaturating,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub objective: Objective,
    pub conditional: bool,
    pub batch: usize,
    /// Outer steps `K`.
    pub steps: usize,
    /// Parameter step size `η`.
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub generator_loss: GeneratorLoss,
    /// Balance-controller rate `λ_k`.
    pub began_lambda: f64,
    /// Diversity ratio `γ_div ∈ [0, 1]`.
    pub began_gamma: f64,
    pub began_norm: NormOrder,
    /// Weight of the isometry regularizer.
    pub dcs_lambda: f64,
    pub dcs_inner_steps: usize,
    pub dcs_inner_lr: f64,
    /// Standard deviation of the latent prior.
    pub latent_std: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Dcgan,
            conditional: false,
            batch: 32,
            steps: 1000,
            lr: 1e-3,
            optimizer: OptimizerKind::Sgd,
            generator_loss: GeneratorLoss::Minimax,
            began_lambda: 1e-3,
            began_gamma: 0.5,
            began_norm: NormOrder::L1,
            dcs_lambda: 1.0,
            dcs_inner_steps: 3,
            dcs_inner_lr: 0.01,
            latent_std: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::param(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(0.0..=1.0).contains(&self.began_gamma) {
            return Err(Error::param(format!("diversity ratio must lie in [0, 1], got {}", self.began_gamma)));
        }
        if self.batch == 0 {
            return Err(Error::param("batch size must be positive"));
        }
        if !(self.began_lambda >= 0.0) || !(self.dcs_lambda >= 0.0) || !(self.dcs_inner_lr >= 0.0) {
            return Err(Error::param("controller rate, regularizer weight and inner step must be non-negative"));
        }
        if !(self.latent_std >= 0.0) {
            return Err(Error::param("latent standard deviation must be non-negative"));
        }
        Ok(())
    }
}

/// Losses after one outer step, evaluated before that step's update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepLoss {
    pub step: usize,
    pub discriminator: Option<f64>,
    pub generator: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub losses: Vec<StepLoss>,
    /// Balance controller `ζ(k)` for `k = 0..=K`; empty for other objectives.
    pub zeta: Vec<f64>,
}

impl TrainLog {
    pub fn last(&self) -> Option<StepLoss> {
        self.losses.last().copied()
    }
}

/// Plain gradient descent or Adam over one flat parameter vector.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, n: usize) -> Self {
        let n = if matches!(kind, OptimizerKind::Adam { .. }) { n } else { 0 };
        Self {
            kind,
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= self.lr * g;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                self.t += 1;
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                for i in 0..params.len() {
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
                    params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + eps);
                }
            }
        }
    }
}

fn diverged(step: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(_) => Error::TrainingDiverged { step },
        other => other,
    }
}

fn check_step(step: usize, loss: f64, params: &[f64]) -> Result<()> {
    if !loss.is_finite() || params.iter().any(|v| !v.is_finite()) {
        return Err(Error::TrainingDiverged { step });
    }
    Ok(())
}

fn gather(rows: &[Vec<f64>], idx: &[usize]) -> Result<Tensor> {
    let w = rows[idx[0]].len();
    let mut data = Vec::with_capacity(idx.len() * w);
    for &i in idx {
        data.extend_from_slice(&rows[i]);
    }
    Tensor::matrix(idx.len(), w, data)
}

fn latent_batch(rng: &mut RngStream, b: usize, v: usize, std: f64) -> Result<Tensor> {
    Tensor::matrix(b, v, (0..b * v).map(|_| std * rng.normal()).collect())
}

fn check_data(data: &[Vec<f64>], sensing: &SensingMatrix, batch: usize) -> Result<()> {
    if data.is_empty() {
        return Err(Error::param("training set is empty"));
    }
    if let Some(bad) = data.iter().find(|x| x.len() != sensing.d()) {
        return Err(Error::dim("training signal", &[sensing.d()], &[bad.len()]));
    }
    if batch > data.len() {
        return Err(Error::param(format!("batch {batch} exceeds dataset size {}", data.len())));
    }
    Ok(())
}

fn expected_cond(cfg: &TrainConfig, sensing: &SensingMatrix) -> usize {
    if cfg.conditional {
        sensing.m()
    } else {
        0
    }
}

fn check_cond(found: usize, expected: usize) -> Result<()> {
    if found != expected {
        return Err(Error::CondDimMismatch { expected, found });
    }
    Ok(())
}

/// `y_i = A x_i` for every training signal, when conditioning is on.
fn measurements(data: &[Vec<f64>], sensing: &SensingMatrix, conditional: bool) -> Result<Option<Vec<Vec<f64>>>> {
    if !conditional {
        return Ok(None);
    }
    data.iter().map(|x| sensing.apply(x)).collect::<Result<_>>().map(Some)
}

struct Batch {
    x: Tensor,
    y: Option<Tensor>,
}

fn draw_batch(data: &[Vec<f64>], ys: &Option<Vec<Vec<f64>>>, b: usize, rng: &mut RngStream) -> Result<Batch> {
    let idx = rng.subset(data.len(), b);
    Ok(Batch {
        x: gather(data, &idx)?,
        y: ys.as_ref().map(|ys| gather(ys, &idx)).transpose()?,
    })
}

fn const_opt(tape: &mut Tape, t: Option<&Tensor>) -> Option<Var> {
    t.map(|t| tape.constant(t.clone()))
}

/// `−[mean ln D(x, y) + mean ln(1 − D(G(z, y), y))]` and its gradient in `φ`.
pub fn dcgan_discriminator_loss(
    g: &GeneratorNet,
    d: &DiscriminatorNet,
    x: &Tensor,
    z: &Tensor,
    y: Option<&Tensor>,
) -> Result<(f64, Vec<f64>)> {
    let fake = g.forward_batch(z, y)?;
    let mut tape = Tape::new();
    let dv = d.params.register(&mut tape, true)?;
    let xv = tape.constant(x.clone());
    let fv = tape.constant(fake);
    let yv = const_opt(&mut tape, y);
    let real = d.record_with(&mut tape, &dv, xv, yv)?;
    let lr = tape.ln_clamped(real, LOG_EPS)?;
    let mr = tape.mean(lr)?;
    let df = d.record_with(&mut tape, &dv, fv, yv)?;
    let one_minus = tape.affine(df, -1.0, 1.0)?;
    let lf = tape.ln_clamped(one_minus, LOG_EPS)?;
    let mf = tape.mean(lf)?;
    let s = tape.add(mr, mf)?;
    let loss = tape.scale(s, -1.0)?;
    let grads = tape.grad(loss, &dv.leaves())?;
    Ok((tape.value(loss).item()?, d.params.flatten_grad(&dv, &grads)?))
}

/// Generator loss of the probability-head game and its gradient in `θ`.
pub fn dcgan_generator_loss(
    g: &GeneratorNet,
    d: &DiscriminatorNet,
    z: &Tensor,
    y: Option<&Tensor>,
    kind: GeneratorLoss,
) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::new();
    let gv = g.params.register(&mut tape, true)?;
    let dv = d.params.register(&mut tape, false)?;
    let zv = tape.constant(z.clone());
    let yv = const_opt(&mut tape, y);
    let fake = g.record_with(&mut tape, &gv, zv, yv)?;
    let p = d.record_with(&mut tape, &dv, fake, yv)?;
    let loss = match kind {
        GeneratorLoss::Minimax => {
            let q = tape.affine(p, -1.0, 1.0)?;
            let l = tape.ln_clamped(q, LOG_EPS)?;
            tape.mean(l)?
        }
        GeneratorLoss::NonSaturating => {
            let l = tape.ln_clamped(p, LOG_EPS)?;
            let m = tape.mean(l)?;
            tape.scale(m, -1.0)?
        }
    };
    let grads = tape.grad(loss, &gv.leaves())?;
    Ok((tape.value(loss).item()?, g.params.flatten_grad(&gv, &grads)?))
}

/// Alternating probability-head training: one `φ` step, then one `θ` step, per batch.
pub fn train_dcgan(
    data: &[Vec<f64>],
    sensing: &SensingMatrix,
    g: &mut GeneratorNet,
    d: &mut DiscriminatorNet,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<TrainLog> {
    cfg.validate()?;
    check_data(data, sensing, cfg.batch)?;
    if d.shape != DiscriminatorShape::Scalar {
        return Err(Error::contract("probability-head training needs a scalar discriminator"));
    }
    let cond = expected_cond(cfg, sensing);
    check_cond(g.cond_dim, cond)?;
    check_cond(d.cond_dim, cond)?;
    let ys = measurements(data, sensing, cfg.conditional)?;
    let mut opt_g = Optimizer::new(cfg.optimizer, cfg.lr, g.params.len());
    let mut opt_d = Optimizer::new(cfg.optimizer, cfg.lr, d.params.len());
    let mut log = TrainLog::default();
    for step in 0..cfg.steps {
        let batch = draw_batch(data, &ys, cfg.batch, rng)?;
        let z = latent_batch(rng, cfg.batch, g.latent_dim, cfg.latent_std)?;
        let (ld, gd) = dcgan_discriminator_loss(g, d, &batch.x, &z, batch.y.as_ref()).map_err(diverged(step))?;
        opt_d.step(&mut d.params.values, &gd);
        check_step(step, ld, &d.params.values)?;
        let (lg, gg) =
            dcgan_generator_loss(g, d, &z, batch.y.as_ref(), cfg.generator_loss).map_err(diverged(step))?;
        opt_g.step(&mut g.params.values, &gg);
        check_step(step, lg, &g.params.values)?;
        log.losses.push(StepLoss {
            step,
            discriminator: Some(ld),
            generator: lg,
        });
    }
    Ok(log)
}

fn reconstruction_mean(tape: &mut Tape, x: Var, rec: Var, rows: usize, p: NormOrder) -> Result<Var> {
    let diff = tape.sub(x, rec)?;
    match p {
        NormOrder::L1 => {
            let s = tape.l1_norm(diff)?;
            tape.scale(s, 1.0 / rows as f64)
        }
        NormOrder::L2 => {
            let n = tape.row_l2_norms(diff)?;
            tape.mean(n)
        }
    }
}

/// Discriminator objective of the balanced autoencoder game,
/// `mean R(x, y) − ζ mean R(G(z, y), y)`, with its `φ` gradient and `mean R(x, y)`.
pub fn began_discriminator_loss(
    g: &GeneratorNet,
    d: &DiscriminatorNet,
    x: &Tensor,
    z: &Tensor,
    y: Option<&Tensor>,
    zeta: f64,
    p: NormOrder,
) -> Result<(f64, Vec<f64>, f64)> {
    let fake = g.forward_batch(z, y)?;
    let rows = x.rows();
    let mut tape = Tape::new();
    let dv = d.params.register(&mut tape, true)?;
    let xv = tape.constant(x.clone());
    let fv = tape.constant(fake);
    let yv = const_opt(&mut tape, y);
    let rec_real = d.record_with(&mut tape, &dv, xv, yv)?;
    let r_real = reconstruction_mean(&mut tape, xv, rec_real, rows, p)?;
    let rec_fake = d.record_with(&mut tape, &dv, fv, yv)?;
    let r_fake = reconstruction_mean(&mut tape, fv, rec_fake, rows, p)?;
    let weighted = tape.scale(r_fake, -zeta)?;
    let loss = tape.add(r_real, weighted)?;
    let grads = tape.grad(loss, &dv.leaves())?;
    Ok((
        tape.value(loss).item()?,
        d.params.flatten_grad(&dv, &grads)?,
        tape.value(r_real).item()?,
    ))
}

/// Generator objective `mean R(G(z, y), y)` with its `θ` gradient.
pub fn began_generator_loss(
    g: &GeneratorNet,
    d: &DiscriminatorNet,
    z: &Tensor,
    y: Option<&Tensor>,
    p: NormOrder,
) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::new();
    let gv = g.params.register(&mut tape, true)?;
    let dv = d.params.register(&mut tape, false)?;
    let zv = tape.constant(z.clone());
    let yv = const_opt(&mut tape, y);
    let fake = g.record_with(&mut tape, &gv, zv, yv)?;
    let rec = d.record_with(&mut tape, &dv, fake, yv)?;
    let loss = reconstruction_mean(&mut tape, fake, rec, z.rows(), p)?;
    let grads = tape.grad(loss, &gv.leaves())?;
    Ok((tape.value(loss).item()?, g.params.flatten_grad(&gv, &grads)?))
}

/// `min(max(ζ + λ(γ R_real − R_fake), 0), 1)`.
pub fn zeta_update(zeta: f64, lambda: f64, gamma: f64, r_real: f64, r_fake: f64) -> f64 {
    (zeta + lambda * (gamma * r_real - r_fake)).clamp(0.0, 1.0)
}

/// Autoencoder-discriminator training with the balance controller `ζ(0) = 0`.
pub fn train_began(
    data: &[Vec<f64>],
    sensing: &SensingMatrix,
    g: &mut GeneratorNet,
    d: &mut DiscriminatorNet,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<TrainLog> {
    cfg.validate()?;
    check_data(data, sensing, cfg.batch)?;
    if d.shape != DiscriminatorShape::Autoencoder {
        return Err(Error::contract("balanced training needs an autoencoder discriminator"));
    }
    let cond = expected_cond(cfg, sensing);
    check_cond(g.cond_dim, cond)?;
    check_cond(d.cond_dim, cond)?;
    let ys = measurements(data, sensing, cfg.conditional)?;
    let mut opt_g = Optimizer::new(cfg.optimizer, cfg.lr, g.params.len());
    let mut opt_d = Optimizer::new(cfg.optimizer, cfg.lr, d.params.len());
    let mut zeta = 0.0;
    let mut log = TrainLog {
        zeta: vec![zeta],
        ..TrainLog::default()
    };
    for step in 0..cfg.steps {
        let batch = draw_batch(data, &ys, cfg.batch, rng)?;
        let zd = latent_batch(rng, cfg.batch, g.latent_dim, cfg.latent_std)?;
        let zg = latent_batch(rng, cfg.batch, g.latent_dim, cfg.latent_std)?;
        let y = batch.y.as_ref();
        let (ld, gd, r_real) =
            began_discriminator_loss(g, d, &batch.x, &zd, y, zeta, cfg.began_norm).map_err(diverged(step))?;
        let (lg, gg) = began_generator_loss(g, d, &zg, y, cfg.began_norm).map_err(diverged(step))?;
        opt_d.step(&mut d.params.values, &gd);
        check_step(step, ld, &d.params.values)?;
        opt_g.step(&mut g.params.values, &gg);
        check_step(step, lg, &g.params.values)?;
        zeta = zeta_update(zeta, cfg.began_lambda, cfg.began_gamma, r_real, lg);
        log.zeta.push(zeta);
        log.losses.push(StepLoss {
            step,
            discriminator: Some(ld),
            generator: lg,
        });
    }
    Ok(log)
}

fn measure_rows(tape: &mut Tape, at: Var, rows: Var) -> Result<Var> {
    tape.matmul(rows, at)
}

/// `T` latent steps of size `τ` on `‖y_i − A G(z_i, [y_i])‖²`, row by row.
pub fn dcs_adapt_latents(
    g: &GeneratorNet,
    sensing: &SensingMatrix,
    y: &Tensor,
    z0: &Tensor,
    steps: usize,
    lr: f64,
    conditional: bool,
) -> Result<Tensor> {
    let at = sensing.matrix().transpose()?;
    let mut z = z0.clone();
    for _ in 0..steps {
        let mut tape = Tape::new();
        let gv = g.params.register(&mut tape, false)?;
        let zv = tape.leaf(z.clone());
        let yv = tape.constant(y.clone());
        let atv = tape.constant(at.clone());
        let out = g.record_with(&mut tape, &gv, zv, conditional.then_some(yv))?;
        let ag = measure_rows(&mut tape, atv, out)?;
        let r = tape.sub(ag, yv)?;
        let loss = tape.sum_sq(r)?;
        let mut grads = tape.grad(loss, &[zv])?;
        let gz = grads.take(zv).expect("requested leaf");
        for (a, b) in z.data_mut().iter_mut().zip(gz.data()) {
            *a -= lr * b;
        }
    }
    Ok(z)
}

/// `M(θ) + λ R(θ)` with the adapted latents held fixed, and its `θ` gradient.
///
/// `M` averages `‖y_i − A G(z_{i,T}, [y_i])‖²`; `R` averages
/// `(‖A(x₁ − x₂)‖ − ‖x₁ − x₂‖)²` over the three pairs drawn from
/// `{x_i, G(z_{i,0}, [y_i]), G(z_{i,T}, [y_i])}` and over the batch.
#[allow(clippy::too_many_arguments)]
pub fn dcs_loss(
    g: &GeneratorNet,
    sensing: &SensingMatrix,
    x: &Tensor,
    y: &Tensor,
    z0: &Tensor,
    zt: &Tensor,
    lambda: f64,
    conditional: bool,
) -> Result<(f64, Vec<f64>)> {
    let rows = x.rows() as f64;
    let at = sensing.matrix().transpose()?;
    let mut tape = Tape::new();
    let gv = g.params.register(&mut tape, true)?;
    let xv = tape.constant(x.clone());
    let yv = tape.constant(y.clone());
    let atv = tape.constant(at);
    let z0v = tape.constant(z0.clone());
    let ztv = tape.constant(zt.clone());
    let c = conditional.then_some(yv);
    let g0 = g.record_with(&mut tape, &gv, z0v, c)?;
    let gt = g.record_with(&mut tape, &gv, ztv, c)?;
    let agt = measure_rows(&mut tape, atv, gt)?;
    let res = tape.sub(agt, yv)?;
    let ss = tape.sum_sq(res)?;
    let mut loss = tape.scale(ss, 1.0 / rows)?;
    if lambda != 0.0 {
        let mut terms = Vec::with_capacity(3);
        for (a, b) in [(xv, g0), (xv, gt), (g0, gt)] {
            let diff = tape.sub(a, b)?;
            let adiff = measure_rows(&mut tape, atv, diff)?;
            let na = tape.row_l2_norms(adiff)?;
            let nd = tape.row_l2_norms(diff)?;
            let gap = tape.sub(na, nd)?;
            terms.push(tape.sum_sq(gap)?);
        }
        let t01 = tape.add(terms[0], terms[1])?;
        let total = tape.add(t01, terms[2])?;
        let reg = tape.scale(total, lambda / (3.0 * rows))?;
        loss = tape.add(loss, reg)?;
    }
    let grads = tape.grad(loss, &gv.leaves())?;
    Ok((tape.value(loss).item()?, g.params.flatten_grad(&gv, &grads)?))
}

/// Meta-learned latent adaptation. The adapted latents are treated as
/// constants when differentiating in `θ` (first-order).
pub fn train_dcs(
    data: &[Vec<f64>],
    sensing: &SensingMatrix,
    g: &mut GeneratorNet,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<TrainLog> {
    cfg.validate()?;
    check_data(data, sensing, cfg.batch)?;
    check_cond(g.cond_dim, expected_cond(cfg, sensing))?;
    let ys: Vec<Vec<f64>> = data.iter().map(|x| sensing.apply(x)).collect::<Result<_>>()?;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr, g.params.len());
    let mut log = TrainLog::default();
    for step in 0..cfg.steps {
        let idx = rng.subset(data.len(), cfg.batch);
        let x = gather(data, &idx)?;
        let y = gather(&ys, &idx)?;
        let z0 = latent_batch(rng, cfg.batch, g.latent_dim, cfg.latent_std)?;
        let zt = dcs_adapt_latents(g, sensing, &y, &z0, cfg.dcs_inner_steps, cfg.dcs_inner_lr, cfg.conditional)
            .map_err(diverged(step))?;
        let (l, grad) =
            dcs_loss(g, sensing, &x, &y, &z0, &zt, cfg.dcs_lambda, cfg.conditional).map_err(diverged(step))?;
        opt.step(&mut g.params.values, &grad);
        check_step(step, l, &g.params.values)?;
        log.losses.push(StepLoss {
            step,
            discriminator: None,
            generator: l,
        });
    }
    Ok(log)
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorState {
    pub spec: MlpSpec,
    pub params: Vec<f64>,
    pub shape: DiscriminatorShape,
    pub signal_dim: usize,
    pub cond_dim: usize,
}

/// Trained generator plus enough provenance to rebuild its sensing matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub spec: MlpSpec,
    pub params: Vec<f64>,
    pub latent_dim: usize,
    pub cond_dim: usize,
    pub output_dim: usize,
    pub sensing_seed: u64,
    pub sensing_stream: u64,
    pub sensing_m: usize,
    pub discriminator: Option<DiscriminatorState>,
    pub config: TrainConfig,
    pub final_losses: Option<StepLoss>,
}

impl Checkpoint {
    pub fn new(
        g: &GeneratorNet,
        d: Option<&DiscriminatorNet>,
        sensing: &SensingMatrix,
        config: &TrainConfig,
        log: &TrainLog,
    ) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            spec: g.spec.clone(),
            params: g.params.values.clone(),
            latent_dim: g.latent_dim,
            cond_dim: g.cond_dim,
            output_dim: g.output_dim(),
            sensing_seed: sensing.seed(),
            sensing_stream: sensing.stream(),
            sensing_m: sensing.m(),
            discriminator: d.map(|d| DiscriminatorState {
                spec: d.spec.clone(),
                params: d.params.values.clone(),
                shape: d.shape,
                signal_dim: d.signal_dim,
                cond_dim: d.cond_dim,
            }),
            config: config.clone(),
            final_losses: log.last(),
        }
    }

    pub fn generator(&self) -> Result<GeneratorNet> {
        let mut p = ParamVec::zeros(&self.spec)?;
        if p.len() != self.params.len() {
            return Err(Error::CorruptCheckpoint(format!(
                "generator has {} parameters, spec needs {}",
                self.params.len(),
                p.len()
            )));
        }
        p.values.clone_from(&self.params);
        GeneratorNet::new(self.spec.clone(), p, self.latent_dim, self.cond_dim)
    }

    pub fn discriminator(&self) -> Result<Option<DiscriminatorNet>> {
        let Some(ds) = &self.discriminator else {
            return Ok(None);
        };
        let mut p = ParamVec::zeros(&ds.spec)?;
        if p.len() != ds.params.len() {
            return Err(Error::CorruptCheckpoint("discriminator parameter count mismatch".into()));
        }
        p.values.clone_from(&ds.params);
        DiscriminatorNet::new(ds.spec.clone(), p, ds.shape, ds.signal_dim, ds.cond_dim).map(Some)
    }

    /// Generator for recovery with (`im = true`) or without the measurement input.
    pub fn generator_for(&self, im: bool, m: usize) -> Result<GeneratorNet> {
        let expected = if im { m } else { 0 };
        check_cond(self.cond_dim, expected)?;
        self.generator()
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(ckpt)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
    let version = value
        .get("version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::CorruptCheckpoint("missing version".into()))?;
    if version != u64::from(CHECKPOINT_VERSION) {
        return Err(Error::VersionMismatch {
            expected: CHECKPOINT_VERSION,
            found: u32::try_from(version).unwrap_or(u32::MAX),
        });
    }
    let ckpt: Checkpoint = serde_json::from_value(value).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
    ckpt.generator()?;
    ckpt.discriminator()?;
    Ok(ckpt)
}
