//! Command-line front end for training, recovery and theory checks.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime failure,
//! 3 failed acceptance assertion.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use gencs::harness::{
    self, generate_dataset, rip_pass_rate, run_experiment, run_presence, theorem1_verification, train_models,
    ContractionConfig, ExperimentConfig, RipTrialConfig,
};
use gencs::models::IdentityPrior;
use gencs::numcore::RngStream;
use gencs::recovery::{recover, Method, Problem, RecoveryConfig};
use gencs::rip::theorem2_min_m;
use gencs::sensing::{measure, NoiseModel};
use gencs::transforms::{TransformKind, UnitaryTransform};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "gencs", version, about = "Compressed sensing with generative priors")]
struct Cli {
    /// JSON configuration; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the synthetic training and test signals to `dataset.json`.
    GenData,
    /// Train every generator the configured methods need into `<out>/checkpoints`.
    Train,
    /// Run the paired recovery trials and write `results.csv` and `report.json`.
    Recover,
    /// Empirical restricted-isometry pass rate for the identity and Haar transforms.
    Rip,
    /// Smallest measurement count from the sample-size bound.
    Bound {
        #[arg(long, default_value_t = 4)]
        s: usize,
        #[arg(long, default_value_t = 10)]
        iterations: usize,
        #[arg(long, default_value_t = 0.1)]
        tau: f64,
        #[arg(long, default_value_t = 3.0)]
        gamma: f64,
    },
    /// Presence probability of marginal and measurement-conditioned generators.
    Presence,
    /// Contraction audit of sparse projected descent with an oracle prior.
    VerifyThm1,
    /// Wall-clock timing of each recovery method on one random problem.
    Bench,
}

/// The configuration document: experiment keys at the top level plus
/// optional sections for the theory commands.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct Config {
    #[serde(flatten)]
    experiment: ExperimentConfig,
    rip: RipTrialConfig,
    contraction: ContractionConfig,
    bench: BenchConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
struct BenchConfig {
    d: usize,
    m: usize,
    s: usize,
    repeats: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            d: 64,
            m: 32,
            s: 8,
            repeats: 5,
        }
    }
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
    Assertion(String),
}

impl From<gencs::Error> for Failure {
    fn from(e: gencs::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn load_config(cli: &Cli) -> Result<Config, Failure> {
    let mut cfg: Config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(anyhow::anyhow!("cannot read {}: {e}", path.display())))?;
            harness::from_partial_json(&text)
                .map_err(|e| Failure::Config(anyhow::anyhow!("invalid config {}: {e}", path.display())))?
        }
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.experiment.seed = seed;
        cfg.rip.seed = seed;
        cfg.contraction.seed = seed;
    }
    Ok(cfg)
}

fn write(out: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    fs::create_dir_all(out)?;
    fs::write(out.join(name), contents)?;
    log::info!("wrote {}", out.join(name).display());
    Ok(())
}

fn validated(exp: &ExperimentConfig) -> Result<(), Failure> {
    exp.validate().map_err(|e| Failure::Config(e.into()))
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if cli.jobs == 0 {
        return Err(Failure::Config(anyhow::anyhow!("--jobs must be at least 1")));
    }
    let cfg = load_config(cli)?;
    let out = &cli.out;
    match &cli.command {
        Command::GenData => {
            validated(&cfg.experiment)?;
            let data = generate_dataset(&cfg.experiment)?;
            write(out, "dataset.json", &serde_json::to_string(&data)?)?;
            println!("train {} signals, test {}x{}", data.train.len(), cfg.experiment.trials, cfg.experiment.n_test);
        }
        Command::Train => {
            let mut exp = cfg.experiment.clone();
            exp.checkpoint_dir.get_or_insert_with(|| out.join("checkpoints"));
            validated(&exp)?;
            let models = train_models(&exp, cli.jobs)?;
            for m in &models {
                let loss = m.checkpoint.final_losses.map_or(f64::NAN, |l| l.generator);
                println!("{:?} im={} m={} generator_loss={loss}", m.kind, m.im, m.m);
            }
        }
        Command::Recover => {
            validated(&cfg.experiment)?;
            let report = run_experiment(&cfg.experiment, cli.jobs)?;
            write(out, "results.csv", &report.to_csv())?;
            write(out, "report.json", &report.to_json()?)?;
            for c in &report.comparisons {
                println!(
                    "{:<10} m={:<4} im={:.6} marginal={:.6} wins={}/{} p={:.4}",
                    c.method,
                    c.m,
                    c.im_mean,
                    c.marginal_mean,
                    c.sign.wins,
                    c.sign.wins + c.sign.losses,
                    c.sign.p_value
                );
            }
            let failed = report.rows.iter().filter(|r| !r.ok()).count();
            if failed > 0 {
                log::warn!("{failed} cells failed; see report.json");
            }
        }
        Command::Rip => {
            let mut reports = Vec::new();
            for transform in [TransformKind::Identity, TransformKind::Haar] {
                let rc = RipTrialConfig {
                    transform,
                    ..cfg.rip.clone()
                };
                let r = rip_pass_rate(&rc)?;
                println!(
                    "{transform:?}: m={} pass rate {}/{} = {:.3} (threshold {:.3}) {}",
                    r.m,
                    r.passes,
                    r.trials,
                    r.rate,
                    r.threshold,
                    if r.pass { "PASS" } else { "FAIL" }
                );
                reports.push(r);
            }
            write(out, "rip.json", &serde_json::to_string_pretty(&reports)?)?;
        }
        Command::Bound {
            s,
            iterations,
            tau,
            gamma,
        } => {
            let m = theorem2_min_m(*s, *iterations, *tau, *gamma).map_err(|e| Failure::Config(e.into()))?;
            println!("{m}");
        }
        Command::Presence => {
            validated(&cfg.experiment)?;
            let r = run_presence(&cfg.experiment, cli.jobs)?;
            write(out, "presence.json", &serde_json::to_string_pretty(&r)?)?;
            println!("marginal    {:.4} ± {:.4}", r.marginal.mean, r.marginal.std);
            println!("conditional {:.4} ± {:.4}", r.conditional.mean, r.conditional.std);
            println!("sign test wins={} losses={} p={:.3e}", r.sign.wins, r.sign.losses, r.sign.p_value);
        }
        Command::VerifyThm1 => {
            let r = theorem1_verification(&cfg.contraction)?;
            write(out, "thm1.json", &serde_json::to_string_pretty(&r)?)?;
            println!(
                "m={} alpha={:.4} factor={:.4} isometry passes {}/{} contraction holds {}/{}",
                r.m,
                r.alpha,
                r.factor,
                r.rip_passes,
                r.seeds.len(),
                r.contraction_passes,
                r.rip_passes
            );
            if let Some(f) = &r.fit {
                println!("iterations ≈ {:.3}·ln(1/ε) + {:.3}, R² = {:.4}", f.slope, f.intercept, f.r2);
            }
            if !r.pass {
                return Err(Failure::Assertion("contraction audit failed".into()));
            }
        }
        Command::Bench => bench(&cfg.bench, cfg.experiment.seed)?,
    }
    Ok(())
}

fn bench(b: &BenchConfig, seed: u64) -> Result<(), Failure> {
    let mut rng = RngStream::new(seed, harness::stream(&["bench"]));
    let u = UnitaryTransform::from_kind(TransformKind::Haar, b.d)?;
    let a = gencs::sensing::sample_sensing(b.m, b.d, &mut rng)?;
    let mut c = vec![0.0; b.d];
    for i in rng.subset(b.d, b.s) {
        c[i] = rng.normal();
    }
    let x = u.inverse(&c)?;
    let y = measure(&a, &x, NoiseModel::None, &mut rng)?;
    let prior = IdentityPrior::new(b.d);
    let problem = Problem::new(&a, &y).with_target(&x);
    println!("{:<10} {:>10} {:>14}", "method", "ms/run", "per_pixel");
    for method in Method::ALL {
        let rc = RecoveryConfig {
            sparsity: Some(b.s),
            ..RecoveryConfig::for_method(method)
        };
        let started = Instant::now();
        let mut err = 0.0;
        for r in 0..b.repeats.max(1) {
            let trace = recover(&prior, &problem, &u, &rc, &mut rng.fork(r as u64))?;
            err = harness::per_pixel_error(&trace.estimate, &x)?;
        }
        let ms = started.elapsed().as_secs_f64() * 1e3 / b.repeats.max(1) as f64;
        println!("{:<10} {:>10.3} {:>14.6e}", method.name(), ms, err);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Assertion(msg)) => {
            eprintln!("assertion failed: {msg}");
            ExitCode::from(3)
        }
    }
}
