//! Experiment orchestration: synthetic data, generator training per
//! measurement count, paired recovery trials, presence probability and report
//! emission.
//!
//! Every random quantity is drawn from a stream keyed by a stable hash of its
//! role, so results depend only on the configuration and master seed and never
//! on scheduling.

pub mod data;
pub mod metrics;
pub mod theory;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Activation, DiscriminatorNet, DiscriminatorShape, GenerativePrior, GeneratorNet, MlpSpec};
use crate::numcore::{stable_hash, RngStream};
use crate::recovery::{csgm_recover, recover, Method, Problem, RecoveryConfig, SPARSEGEN_LAMBDAS};
use crate::sensing::{measure, regenerate_sensing, NoiseModel, SensingMatrix};
use crate::training::{
    load_checkpoint, save_checkpoint, train_began, train_dcgan, train_dcs, Checkpoint, Objective, TrainConfig,
};
use crate::transforms::{TransformKind, UnitaryTransform};

pub use data::{SparsifySpec, SyntheticSource, SyntheticSpec};
pub use metrics::{
    binomial_upper_tail, confidence_interval, per_pixel_error, presence_probability, sign_test, PresenceResult,
    SignTest, ThresholdMode,
};
pub use theory::{
    linear_fit, rip_pass_rate, theorem1_verification, ContractionConfig, ContractionReport, LinearFit,
    RipTrialConfig, RipTrialReport, SeedOutcome,
};

pub const RESULTS_HEADER: &str = "method,im,m,trial,per_pixel_error,ci_halfwidth,iters,wall_ms";

/// Recovery procedures compared by the harness. `Dcs` recovers with a few
/// latent steps through a generator trained by latent meta-learning.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentMethod {
    Csgm,
    Pgdgan,
    Spgdgan,
    Dcs,
    Sparsegen,
}

impl ExperimentMethod {
    pub const ALL: [ExperimentMethod; 5] = [
        ExperimentMethod::Csgm,
        ExperimentMethod::Pgdgan,
        ExperimentMethod::Spgdgan,
        ExperimentMethod::Dcs,
        ExperimentMethod::Sparsegen,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentMethod::Csgm => "csgm",
            ExperimentMethod::Pgdgan => "pgdgan",
            ExperimentMethod::Spgdgan => "spgdgan",
            ExperimentMethod::Dcs => "dcs",
            ExperimentMethod::Sparsegen => "sparsegen",
        }
    }

    fn model(self) -> ModelKind {
        match self {
            ExperimentMethod::Dcs => ModelKind::Dcs,
            _ => ModelKind::Gan,
        }
    }
}

impl fmt::Display for ExperimentMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::param(format!("unknown method '{s}'")))
    }
}

/// Which training procedure produced a generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Gan,
    Dcs,
}

impl ModelKind {
    fn name(self) -> &'static str {
        match self {
            ModelKind::Gan => "gan",
            ModelKind::Dcs => "dcs",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64],
            activation: Activation::Relu,
        }
    }
}

/// Per-method recovery settings; `method` and `im` are overwritten per cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecoverySettings {
    pub csgm: RecoveryConfig,
    pub pgdgan: RecoveryConfig,
    pub spgdgan: RecoveryConfig,
    pub sparsegen: RecoveryConfig,
}

impl Default for RecoverySettings {
    fn default() -> Self {
        Self {
            csgm: RecoveryConfig::for_method(Method::Csgm),
            pgdgan: RecoveryConfig::for_method(Method::Pgdgan),
            spgdgan: RecoveryConfig::for_method(Method::Spgdgan),
            sparsegen: RecoveryConfig::for_method(Method::Sparsegen),
        }
    }
}

impl RecoverySettings {
    /// Method defaults with a latent step small enough for the synthetic
    /// generators and a longer latent descent for the plain method.
    pub fn for_experiments() -> Self {
        let mut s = Self::default();
        for rc in [&mut s.csgm, &mut s.pgdgan, &mut s.spgdgan, &mut s.sparsegen] {
            rc.latent_lr = 0.02;
        }
        s.csgm.iterations = 50;
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PresenceSettings {
    pub m: usize,
    pub epsilon: f64,
    pub n_z: usize,
    pub n_test: usize,
    pub mode: ThresholdMode,
}

impl Default for PresenceSettings {
    fn default() -> Self {
        Self {
            m: 32,
            epsilon: 0.125,
            n_z: 1000,
            n_test: 64,
            mode: ThresholdMode::PerPixel,
        }
    }
}

/// Full experiment description. Every field has a default, so a JSON document
/// only needs the keys it changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub data: SyntheticSpec,
    pub ms: Vec<usize>,
    /// Latent width of marginal generators.
    pub latent_dim: usize,
    /// Latent width of measurement-conditioned generators.
    pub latent_dim_im: usize,
    /// Sets the marginal latent width to `m + latent_dim_im`.
    pub ablation: bool,
    pub generator: NetConfig,
    pub discriminator: NetConfig,
    pub n_train: usize,
    /// Test signals per trial.
    pub n_test: usize,
    pub trials: usize,
    pub methods: Vec<ExperimentMethod>,
    pub im: Vec<bool>,
    /// Adversarial training for every method except `dcs`.
    pub gan: TrainConfig,
    pub dcs: TrainConfig,
    pub recovery: RecoverySettings,
    /// Candidate deviation penalties; the best on validation signals is used.
    pub sparsegen_lambdas: Vec<f64>,
    pub n_validation: usize,
    /// Sparsifying transform for `spgdgan` and deviation transform for `sparsegen`.
    pub transform: TransformKind,
    pub noise: NoiseModel,
    pub presence: PresenceSettings,
    /// Records wall-clock milliseconds; otherwise `wall_ms` is 0 for reproducible output.
    pub timing: bool,
    pub seed: u64,
    /// Trained generators are read from here when present and written otherwise.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let gan = TrainConfig {
            objective: Objective::Dcgan,
            batch: 32,
            steps: 2000,
            lr: 1e-3,
            optimizer: crate::training::OptimizerKind::adam(),
            ..TrainConfig::default()
        };
        let dcs = TrainConfig {
            objective: Objective::Dcs,
            steps: 500,
            optimizer: crate::training::OptimizerKind::adam(),
            ..TrainConfig::default()
        };
        Self {
            data: SyntheticSpec::default(),
            ms: vec![8, 16, 32],
            latent_dim: 8,
            latent_dim_im: 8,
            ablation: false,
            generator: NetConfig::default(),
            discriminator: NetConfig::default(),
            n_train: 1024,
            n_test: 8,
            trials: 5,
            methods: ExperimentMethod::ALL.to_vec(),
            im: vec![false, true],
            gan,
            dcs,
            recovery: RecoverySettings::for_experiments(),
            sparsegen_lambdas: SPARSEGEN_LAMBDAS.to_vec(),
            n_validation: 8,
            transform: TransformKind::Haar,
            noise: NoiseModel::None,
            presence: PresenceSettings::default(),
            timing: false,
            seed: 0,
            checkpoint_dir: None,
        }
    }
}

/// Recursively overlays `patch` onto `base`; objects merge key by key, anything else replaces.
pub fn merge_json(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, p) => *slot = p,
    }
}

/// Parses `text` as a partial document over `T::default()`, so nested blocks
/// keep the defaults of the enclosing configuration.
pub fn from_partial_json<T>(text: &str) -> Result<T>
where
    T: Default + Serialize + serde::de::DeserializeOwned,
{
    let mut base = serde_json::to_value(T::default())?;
    merge_json(&mut base, serde_json::from_str(text)?);
    Ok(serde_json::from_value(base)?)
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        from_partial_json(text)
    }

    pub fn d(&self) -> usize {
        self.data.d
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d();
        if d == 0 {
            return Err(Error::param("signal dimension must be positive"));
        }
        if self.n_test == 0 || self.trials == 0 {
            return Err(Error::param("n_test and trials must be at least 1"));
        }
        if self.ms.is_empty() || self.ms.contains(&0) {
            return Err(Error::param("measurement counts must be a non-empty list of positive values"));
        }
        if self.methods.is_empty() || self.im.is_empty() {
            return Err(Error::param("methods and im flags must be non-empty"));
        }
        if self.latent_dim == 0 || self.latent_dim_im == 0 {
            return Err(Error::param("latent dimensions must be positive"));
        }
        if self.sparsegen_lambdas.is_empty() || self.sparsegen_lambdas.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::param("deviation penalties must be a non-empty list of non-negative values"));
        }
        if self.sparsegen_lambdas.len() > 1 && self.n_validation == 0 {
            return Err(Error::param("penalty selection needs at least one validation signal"));
        }
        for tc in [&self.gan, &self.dcs] {
            tc.validate()?;
            if self.n_train < tc.batch {
                return Err(Error::param(format!("n_train {} is smaller than batch {}", self.n_train, tc.batch)));
            }
        }
        if self.gan.objective == Objective::Dcs {
            return Err(Error::param("the adversarial training block must use an adversarial objective"));
        }
        for rc in [&self.recovery.csgm, &self.recovery.pgdgan, &self.recovery.spgdgan, &self.recovery.sparsegen] {
            rc.validate(d)?;
        }
        UnitaryTransform::from_kind(self.transform, d)?;
        if let NoiseModel::Gaussian { std } = self.noise {
            if !(std >= 0.0) {
                return Err(Error::param("noise standard deviation must be non-negative"));
            }
        }
        Ok(())
    }

    /// Latent width of the generator used with (`im`) or without measurement input.
    pub fn latent_for(&self, im: bool, m: usize) -> usize {
        match (im, self.ablation) {
            (true, _) => self.latent_dim_im,
            (false, true) => m + self.latent_dim_im,
            (false, false) => self.latent_dim,
        }
    }

    fn recovery_for(&self, method: ExperimentMethod, im: bool) -> RecoveryConfig {
        let mut rc = match method {
            ExperimentMethod::Csgm => self.recovery.csgm.clone(),
            ExperimentMethod::Pgdgan => self.recovery.pgdgan.clone(),
            ExperimentMethod::Spgdgan => self.recovery.spgdgan.clone(),
            ExperimentMethod::Sparsegen => self.recovery.sparsegen.clone(),
            ExperimentMethod::Dcs => RecoveryConfig {
                iterations: self.dcs.dcs_inner_steps,
                latent_lr: self.dcs.dcs_inner_lr,
                ..RecoveryConfig::for_method(Method::Csgm)
            },
        };
        rc.method = match method {
            ExperimentMethod::Csgm | ExperimentMethod::Dcs => Method::Csgm,
            ExperimentMethod::Pgdgan => Method::Pgdgan,
            ExperimentMethod::Spgdgan => Method::Spgdgan,
            ExperimentMethod::Sparsegen => Method::Sparsegen,
        };
        rc.im = im;
        rc.keep_iterates = false;
        rc
    }
}

/// One `(method, im, m, trial)` cell. Failed cells carry `error` and a NaN error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub method: ExperimentMethod,
    pub im: bool,
    pub m: usize,
    pub trial: usize,
    /// Mean per-pixel error over the trial's test signals.
    pub per_pixel_error: f64,
    /// Half-width of the 95% interval over the trial's test signals; 0 for one signal.
    pub ci_halfwidth: f64,
    pub iters: usize,
    pub wall_ms: f64,
    pub error: Option<String>,
}

impl TrialReport {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }

    fn key(&self) -> (ExperimentMethod, bool, usize, usize) {
        (self.method, self.im, self.m, self.trial)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: ExperimentMethod,
    pub im: bool,
    pub m: usize,
    pub trials: usize,
    pub failed: usize,
    pub mean: f64,
    /// Half-width of the 95% interval across trials; 0 with fewer than two.
    pub ci_halfwidth: f64,
}

/// Paired comparison of the conditioned variant against the marginal one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub method: ExperimentMethod,
    pub m: usize,
    pub im_mean: f64,
    pub marginal_mean: f64,
    /// Wins count trials where the conditioned error is smaller.
    pub sign: SignTest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub kind: ModelKind,
    pub im: bool,
    pub m: usize,
    pub latent_dim: usize,
    pub cond_dim: usize,
    pub generator_params: usize,
    pub discriminator_params: Option<usize>,
    pub final_generator_loss: Option<f64>,
    pub final_discriminator_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaChoice {
    pub m: usize,
    pub im: bool,
    pub lambda: f64,
    pub validation_errors: Vec<f64>,
}

/// Matched-size comparison row: marginal latent `m + v_im` against conditioned latent `v_im`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub method: ExperimentMethod,
    pub m: usize,
    pub marginal_latent: usize,
    pub im_latent: usize,
    pub marginal_params: usize,
    pub im_params: usize,
    pub marginal_error: f64,
    pub im_error: f64,
    pub p_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub rows: Vec<TrialReport>,
    pub cells: Vec<CellSummary>,
    pub comparisons: Vec<Comparison>,
    pub models: Vec<ModelSummary>,
    pub lambdas: Vec<LambdaChoice>,
    pub ablation: Option<Vec<AblationRow>>,
}

impl ExperimentReport {
    pub fn to_csv(&self) -> String {
        results_csv(&self.rows)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn comparison(&self, method: ExperimentMethod, m: usize) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.method == method && c.m == m)
    }
}

/// Rows in the order given, one per line, floats in shortest round-trip form.
pub fn results_csv(rows: &[TrialReport]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.method, r.im, r.m, r.trial, r.per_pixel_error, r.ci_halfwidth, r.iters, r.wall_ms
        ));
    }
    out
}

pub fn stream(parts: &[&str]) -> u64 {
    stable_hash(parts)
}

/// The synthetic source shared by every part of an experiment.
pub fn data_source(cfg: &ExperimentConfig) -> Result<SyntheticSource> {
    SyntheticSource::new(cfg.data.clone(), &mut RngStream::new(cfg.seed, stream(&["data-generator"])))
}

pub fn training_set(cfg: &ExperimentConfig, source: &SyntheticSource) -> Result<Vec<Vec<f64>>> {
    source.sample_n(cfg.n_train, &mut RngStream::new(cfg.seed, stream(&["train-set"])))
}

/// Test signal `j` of trial `trial`; independent of method, flag and `m`.
pub fn test_signal(cfg: &ExperimentConfig, source: &SyntheticSource, trial: usize, j: usize) -> Result<Vec<f64>> {
    source.sample(&mut RngStream::new(
        cfg.seed,
        stream(&["test", &trial.to_string(), &j.to_string()]),
    ))
}

fn validation_signal(cfg: &ExperimentConfig, source: &SyntheticSource, j: usize) -> Result<Vec<f64>> {
    source.sample(&mut RngStream::new(cfg.seed, stream(&["validation", &j.to_string()])))
}

/// The sensing matrix for `m` measurements, shared by training and recovery.
pub fn sensing_for(cfg: &ExperimentConfig, m: usize) -> Result<SensingMatrix> {
    regenerate_sensing(m, cfg.d(), cfg.seed, stream(&["sensing", &m.to_string()]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub train: Vec<Vec<f64>>,
    /// Trial-major: `test[t][j]`.
    pub test: Vec<Vec<Vec<f64>>>,
}

pub fn generate_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let source = data_source(cfg)?;
    let train = training_set(cfg, &source)?;
    let test = (0..cfg.trials)
        .map(|t| (0..cfg.n_test).map(|j| test_signal(cfg, &source, t, j)).collect())
        .collect::<Result<_>>()?;
    Ok(Dataset { train, test })
}

/// A trained generator and the losses that produced it.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub im: bool,
    pub m: usize,
    pub checkpoint: Checkpoint,
    pub generator: GeneratorNet,
}

impl TrainedModel {
    fn summary(&self) -> ModelSummary {
        let ck = &self.checkpoint;
        ModelSummary {
            kind: self.kind,
            im: self.im,
            m: self.m,
            latent_dim: ck.latent_dim,
            cond_dim: ck.cond_dim,
            generator_params: ck.params.len(),
            discriminator_params: ck.discriminator.as_ref().map(|d| d.params.len()),
            final_generator_loss: ck.final_losses.map(|l| l.generator),
            final_discriminator_loss: ck.final_losses.and_then(|l| l.discriminator),
        }
    }
}

fn checkpoint_name(kind: ModelKind, im: bool, m: usize) -> String {
    format!("{}-{}-m{m}.json", kind.name(), if im { "im" } else { "marginal" })
}

/// Trains (or loads) the generator for one `(kind, im, m)` combination.
pub fn train_model(
    cfg: &ExperimentConfig,
    kind: ModelKind,
    im: bool,
    m: usize,
    data: &[Vec<f64>],
) -> Result<TrainedModel> {
    if let Some(dir) = &cfg.checkpoint_dir {
        let path = dir.join(checkpoint_name(kind, im, m));
        if path.exists() {
            let checkpoint = load_checkpoint(&path)?;
            let generator = checkpoint.generator_for(im, m)?;
            if generator.latent_dim != cfg.latent_for(im, m) || checkpoint.sensing_m != m {
                return Err(Error::CorruptCheckpoint(format!(
                    "{} does not match the configured model",
                    path.display()
                )));
            }
            return Ok(TrainedModel {
                kind,
                im,
                m,
                checkpoint,
                generator,
            });
        }
    }
    let d = cfg.d();
    let sensing = sensing_for(cfg, m)?;
    let cond = if im { m } else { 0 };
    let latent = cfg.latent_for(im, m);
    let tag = [kind.name(), if im { "im" } else { "marginal" }, &m.to_string()];
    let mut rng = RngStream::new(cfg.seed, stream(&["train", tag[0], tag[1], tag[2]]));
    let mut init = rng.fork(0);
    let mut tc = match kind {
        ModelKind::Gan => cfg.gan.clone(),
        ModelKind::Dcs => cfg.dcs.clone(),
    };
    tc.conditional = im;
    let gspec = MlpSpec::uniform(
        latent + cond,
        &cfg.generator.hidden,
        d,
        cfg.generator.activation,
        Activation::Linear,
        cfg.seed,
    )?;
    let mut g = GeneratorNet::initialized(gspec, latent, cond, &mut init)?;
    let (log, disc) = match (kind, tc.objective) {
        (ModelKind::Dcs, _) | (_, Objective::Dcs) => {
            tc.objective = Objective::Dcs;
            (train_dcs(data, &sensing, &mut g, &tc, &mut rng)?, None)
        }
        (ModelKind::Gan, objective) => {
            let (shape, out, out_act) = match objective {
                Objective::Dcgan => (DiscriminatorShape::Scalar, 1, Activation::Sigmoid),
                _ => (DiscriminatorShape::Autoencoder, d, Activation::Linear),
            };
            let dspec = MlpSpec::uniform(
                d + cond,
                &cfg.discriminator.hidden,
                out,
                cfg.discriminator.activation,
                out_act,
                cfg.seed,
            )?;
            let mut dnet = DiscriminatorNet::initialized(dspec, shape, d, cond, &mut init)?;
            let log = if objective == Objective::Dcgan {
                train_dcgan(data, &sensing, &mut g, &mut dnet, &tc, &mut rng)?
            } else {
                train_began(data, &sensing, &mut g, &mut dnet, &tc, &mut rng)?
            };
            (log, Some(dnet))
        }
    };
    let checkpoint = Checkpoint::new(&g, disc.as_ref(), &sensing, &tc, &log);
    if let Some(dir) = &cfg.checkpoint_dir {
        std::fs::create_dir_all(dir)?;
        save_checkpoint(&dir.join(checkpoint_name(kind, im, m)), &checkpoint)?;
    }
    Ok(TrainedModel {
        kind,
        im,
        m,
        checkpoint,
        generator: g,
    })
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::param(format!("cannot build worker pool: {e}")))
}

/// Trains every generator the configured methods need, in a fixed order.
pub fn train_models(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<TrainedModel>> {
    cfg.validate()?;
    let source = data_source(cfg)?;
    let data = training_set(cfg, &source)?;
    let mut kinds: Vec<ModelKind> = cfg.methods.iter().map(|m| m.model()).collect();
    kinds.sort();
    kinds.dedup();
    let mut ims = cfg.im.clone();
    ims.sort();
    ims.dedup();
    let mut ms = cfg.ms.clone();
    ms.sort();
    ms.dedup();
    let mut keys = Vec::new();
    for &k in &kinds {
        for &im in &ims {
            for &m in &ms {
                keys.push((k, im, m));
            }
        }
    }
    pool(jobs)?.install(|| {
        keys.par_iter()
            .map(|&(k, im, m)| train_model(cfg, k, im, m, &data))
            .collect()
    })
}

struct Instance {
    x: Vec<f64>,
    y: Vec<f64>,
}

fn instance(cfg: &ExperimentConfig, sensing: &SensingMatrix, x: Vec<f64>, tag: &[&str]) -> Result<Instance> {
    let mut nrng = RngStream::new(cfg.seed, stream(tag));
    let y = measure(sensing, &x, cfg.noise, &mut nrng)?;
    Ok(Instance { x, y })
}

fn recover_one(
    prior: &dyn GenerativePrior,
    sensing: &SensingMatrix,
    u: &UnitaryTransform,
    inst: &Instance,
    rc: &RecoveryConfig,
    rng: &mut RngStream,
) -> Result<(f64, usize)> {
    let problem = Problem::new(sensing, &inst.y).with_target(&inst.x);
    let trace = if rc.method == Method::Csgm {
        csgm_recover(prior, &problem, rc, rng)?
    } else {
        recover(prior, &problem, u, rc, rng)?
    };
    Ok((per_pixel_error(&trace.estimate, &inst.x)?, trace.iterations()))
}

/// Picks the deviation penalty with the lowest mean validation error; ties go to the earlier candidate.
fn choose_lambda(
    cfg: &ExperimentConfig,
    source: &SyntheticSource,
    model: &TrainedModel,
    sensing: &SensingMatrix,
    u: &UnitaryTransform,
) -> Result<LambdaChoice> {
    let base = cfg.recovery_for(ExperimentMethod::Sparsegen, model.im);
    if cfg.sparsegen_lambdas.len() == 1 {
        return Ok(LambdaChoice {
            m: model.m,
            im: model.im,
            lambda: cfg.sparsegen_lambdas[0],
            validation_errors: Vec::new(),
        });
    }
    let m = model.m.to_string();
    let mut errors = Vec::with_capacity(cfg.sparsegen_lambdas.len());
    for &lambda in &cfg.sparsegen_lambdas {
        let rc = RecoveryConfig {
            sparsegen_lambda: lambda,
            ..base.clone()
        };
        let mut total = 0.0;
        for j in 0..cfg.n_validation {
            let js = j.to_string();
            let x = validation_signal(cfg, source, j)?;
            let inst = instance(cfg, sensing, x, &["validation-noise", &m, &js])?;
            let mut rng = RngStream::new(cfg.seed, stream(&["validation-recovery", &m, &js]));
            // A diverging candidate scores as infinitely bad.
            total += recover_one(&model.generator, sensing, u, &inst, &rc, &mut rng).map_or(f64::INFINITY, |r| r.0);
        }
        errors.push(total / cfg.n_validation as f64);
    }
    let best = errors
        .iter()
        .enumerate()
        .fold(0, |b, (i, e)| if *e < errors[b] { i } else { b });
    Ok(LambdaChoice {
        m: model.m,
        im: model.im,
        lambda: cfg.sparsegen_lambdas[best],
        validation_errors: errors,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    cfg: &ExperimentConfig,
    source: &SyntheticSource,
    model: &TrainedModel,
    sensing: &SensingMatrix,
    u: &UnitaryTransform,
    method: ExperimentMethod,
    trial: usize,
    lambda: f64,
) -> TrialReport {
    let started = Instant::now();
    let mut report = TrialReport {
        method,
        im: model.im,
        m: model.m,
        trial,
        per_pixel_error: f64::NAN,
        ci_halfwidth: f64::NAN,
        iters: 0,
        wall_ms: 0.0,
        error: None,
    };
    let outcome = (|| -> Result<(f64, f64, usize)> {
        let mut rc = cfg.recovery_for(method, model.im);
        rc.sparsegen_lambda = lambda;
        let (m, t) = (model.m.to_string(), trial.to_string());
        let mut errors = Vec::with_capacity(cfg.n_test);
        let mut iters = 0;
        for j in 0..cfg.n_test {
            let js = j.to_string();
            let x = test_signal(cfg, source, trial, j)?;
            let inst = instance(cfg, sensing, x, &["noise", &m, &t, &js])?;
            let mut rng = RngStream::new(cfg.seed, stream(&[method.name(), &m, &t, &js]));
            let (e, it) = recover_one(&model.generator, sensing, u, &inst, &rc, &mut rng)?;
            errors.push(e);
            iters = it;
        }
        let (mean, half) = if errors.len() > 1 {
            confidence_interval(&errors)?
        } else {
            (errors[0], 0.0)
        };
        Ok((mean, half, iters))
    })();
    match outcome {
        Ok((mean, half, iters)) => {
            report.per_pixel_error = mean;
            report.ci_halfwidth = half;
            report.iters = iters;
        }
        Err(e) => report.error = Some(e.to_string()),
    }
    if cfg.timing {
        report.wall_ms = started.elapsed().as_secs_f64() * 1e3;
    }
    report
}

/// Trains the needed generators, then runs one trial report per
/// `(method, im, m, trial)`. Cell failures are recorded, not propagated.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentReport> {
    let models = train_models(cfg, jobs)?;
    run_with_models(cfg, &models, jobs)
}

/// Recovery trials against already trained generators.
pub fn run_with_models(cfg: &ExperimentConfig, models: &[TrainedModel], jobs: usize) -> Result<ExperimentReport> {
    cfg.validate()?;
    let source = data_source(cfg)?;
    let u = UnitaryTransform::from_kind(cfg.transform, cfg.d())?;
    let mut ms = cfg.ms.clone();
    ms.sort();
    ms.dedup();
    let sensings: Vec<(usize, SensingMatrix)> =
        ms.iter().map(|&m| Ok((m, sensing_for(cfg, m)?))).collect::<Result<_>>()?;
    let sensing = |m: usize| &sensings.iter().find(|(k, _)| *k == m).expect("sensing per m").1;
    let find = |kind: ModelKind, im: bool, m: usize| {
        models
            .iter()
            .find(|t| t.kind == kind && t.im == im && t.m == m)
            .ok_or_else(|| Error::param(format!("no {} generator for im={im}, m={m}", kind.name())))
    };
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    let mut ims = cfg.im.clone();
    ims.sort();
    ims.dedup();

    let workers = pool(jobs)?;
    let lambdas: Vec<LambdaChoice> = if methods.contains(&ExperimentMethod::Sparsegen) {
        let keys: Vec<(bool, usize)> = ims.iter().flat_map(|&im| ms.iter().map(move |&m| (im, m))).collect();
        workers.install(|| {
            keys.par_iter()
                .map(|&(im, m)| choose_lambda(cfg, &source, find(ModelKind::Gan, im, m)?, sensing(m), &u))
                .collect::<Result<Vec<_>>>()
        })?
    } else {
        Vec::new()
    };
    let lambda_for = |im: bool, m: usize| {
        lambdas
            .iter()
            .find(|l| l.im == im && l.m == m)
            .map_or(cfg.sparsegen_lambdas[0], |l| l.lambda)
    };

    let mut cells = Vec::new();
    for &method in &methods {
        for &im in &ims {
            for &m in &ms {
                for trial in 0..cfg.trials {
                    cells.push((method, im, m, trial));
                }
            }
        }
    }
    let mut rows: Vec<TrialReport> = workers.install(|| {
        cells
            .par_iter()
            .map(|&(method, im, m, trial)| match find(method.model(), im, m) {
                Ok(model) => run_cell(cfg, &source, model, sensing(m), &u, method, trial, lambda_for(im, m)),
                Err(e) => TrialReport {
                    method,
                    im,
                    m,
                    trial,
                    per_pixel_error: f64::NAN,
                    ci_halfwidth: f64::NAN,
                    iters: 0,
                    wall_ms: 0.0,
                    error: Some(e.to_string()),
                },
            })
            .collect()
    });
    rows.sort_by_key(TrialReport::key);

    let summaries = summarize(&rows, &methods, &ims, &ms);
    let comparisons = compare(&rows, &methods, &ms);
    let mut model_summaries: Vec<ModelSummary> = models.iter().map(TrainedModel::summary).collect();
    model_summaries.sort_by_key(|s| (s.kind, s.im, s.m));
    let ablation = cfg.ablation.then(|| ablation_table(&comparisons, &model_summaries));
    Ok(ExperimentReport {
        config: cfg.clone(),
        rows,
        cells: summaries,
        comparisons,
        models: model_summaries,
        lambdas,
        ablation,
    })
}

fn summarize(rows: &[TrialReport], methods: &[ExperimentMethod], ims: &[bool], ms: &[usize]) -> Vec<CellSummary> {
    let mut out = Vec::new();
    for &method in methods {
        for &im in ims {
            for &m in ms {
                let group: Vec<&TrialReport> =
                    rows.iter().filter(|r| r.method == method && r.im == im && r.m == m).collect();
                let ok: Vec<f64> = group.iter().filter(|r| r.ok()).map(|r| r.per_pixel_error).collect();
                let (mean, ci_halfwidth) = match ok.len() {
                    0 => (f64::NAN, f64::NAN),
                    1 => (ok[0], 0.0),
                    _ => confidence_interval(&ok).unwrap_or((f64::NAN, f64::NAN)),
                };
                out.push(CellSummary {
                    method,
                    im,
                    m,
                    trials: group.len(),
                    failed: group.len() - ok.len(),
                    mean,
                    ci_halfwidth,
                });
            }
        }
    }
    out
}

/// Sign test over trials where both variants succeeded.
fn compare(rows: &[TrialReport], methods: &[ExperimentMethod], ms: &[usize]) -> Vec<Comparison> {
    let mut out = Vec::new();
    for &method in methods {
        for &m in ms {
            let pick = |im: bool| -> Vec<&TrialReport> {
                rows.iter().filter(|r| r.method == method && r.m == m && r.im == im).collect()
            };
            let (with, without) = (pick(true), pick(false));
            if with.is_empty() || without.is_empty() {
                continue;
            }
            let (mut a, mut b) = (Vec::new(), Vec::new());
            for w in &with {
                if let Some(o) = without.iter().find(|o| o.trial == w.trial) {
                    if w.ok() && o.ok() {
                        a.push(w.per_pixel_error);
                        b.push(o.per_pixel_error);
                    }
                }
            }
            let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
            out.push(Comparison {
                method,
                m,
                im_mean: mean(&a),
                marginal_mean: mean(&b),
                sign: sign_test(&a, &b).expect("paired lengths"),
            });
        }
    }
    out
}

fn ablation_table(comparisons: &[Comparison], models: &[ModelSummary]) -> Vec<AblationRow> {
    comparisons
        .iter()
        .filter_map(|c| {
            let kind = c.method.model();
            let get = |im: bool| models.iter().find(|s| s.kind == kind && s.im == im && s.m == c.m);
            let (marg, im) = (get(false)?, get(true)?);
            Some(AblationRow {
                method: c.method,
                m: c.m,
                marginal_latent: marg.latent_dim,
                im_latent: im.latent_dim,
                marginal_params: marg.generator_params,
                im_params: im.generator_params,
                marginal_error: c.marginal_mean,
                im_error: c.im_mean,
                p_value: c.sign.p_value,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PresenceReport {
    pub m: usize,
    pub epsilon: f64,
    pub n_z: usize,
    pub mode: ThresholdMode,
    pub marginal: PresenceResult,
    pub conditional: PresenceResult,
    /// Wins count signals where the marginal probability is smaller.
    pub sign: SignTest,
    pub models: Vec<ModelSummary>,
}

/// Presence probability of the marginal and measurement-conditioned
/// adversarially trained generators at `presence.m`, with matched latent
/// draws per test signal.
pub fn run_presence(cfg: &ExperimentConfig, jobs: usize) -> Result<PresenceReport> {
    let p = &cfg.presence;
    let run_cfg = ExperimentConfig {
        ms: vec![p.m],
        im: vec![false, true],
        methods: vec![ExperimentMethod::Csgm],
        ..cfg.clone()
    };
    run_cfg.validate()?;
    let models = train_models(&run_cfg, jobs)?;
    let source = data_source(cfg)?;
    let tests: Vec<Vec<f64>> = (0..p.n_test)
        .map(|j| source.sample(&mut RngStream::new(cfg.seed, stream(&["presence-test", &j.to_string()]))))
        .collect::<Result<_>>()?;
    let sensing = sensing_for(cfg, p.m)?;
    let z_stream = RngStream::new(cfg.seed, stream(&["presence-latent"]));
    let get = |im: bool| models.iter().find(|t| t.im == im).expect("both variants trained");
    let (marg, cond) = (get(false), get(true));
    let marginal = presence_probability(&marg.generator, &tests, &sensing, p.epsilon, p.n_z, p.mode, &z_stream)?;
    let conditional = presence_probability(&cond.generator, &tests, &sensing, p.epsilon, p.n_z, p.mode, &z_stream)?;
    let sign = sign_test(&marginal.per_signal, &conditional.per_signal)?;
    Ok(PresenceReport {
        m: p.m,
        epsilon: p.epsilon,
        n_z: p.n_z,
        mode: p.mode,
        marginal,
        conditional,
        sign,
        models: vec![marg.summary(), cond.summary()],
    })
}
