//! Command-line entry point: dataset generation, training, evaluation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use diffcps::artifacts::{run_training, TrainedPolicy};
use diffcps::config::ExperimentConfig;
use diffcps::dataset::{make_noisy_circle, OfflineDataset};
use diffcps::error::Error;
use diffcps::eval::{export_samples, sample_conditioned, score_report};
use diffcps::rng::{stream_rng, Stream};
use diffcps::trainer::metrics_to_csv;

#[derive(Parser)]
#[command(name = "diffcps", version, about = "Diffusion-policy constrained policy search on offline data")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the noisy-circle bandit dataset.
    GenData(GenDataArgs),
    /// Train a policy (diffcps, awr or diffusion-bc) on a dataset file.
    Train(TrainArgs),
    /// Evaluate a checkpoint: score report plus a scatter-ready sample CSV.
    Eval(EvalArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Number of transitions.
    #[arg(long, default_value_t = 5000)]
    n: usize,
    /// Per-coordinate Gaussian noise scale.
    #[arg(long, default_value_t = 0.05)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output dataset file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Config file applied over the defaults; flags override both.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Algorithm: diffcps, awr or diffusion-bc.
    #[arg(long)]
    algo: Option<String>,
    /// Dataset file.
    #[arg(long)]
    data: Option<String>,
    /// Output directory (checkpoint, metrics CSV, resolved config).
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Policy evaluation interval d.
    #[arg(long)]
    eval_interval: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lambda_lr: Option<f64>,
    #[arg(long)]
    lambda_init: Option<f64>,
    /// Constraint level for the denoising loss.
    #[arg(long)]
    kappa: Option<f64>,
    /// Clip floor c in lambda_clip = max(c, lambda).
    #[arg(long)]
    lambda_clip_floor: Option<f64>,
    /// Disable multiplier updates (lambda stays at its initial value).
    #[arg(long)]
    no_dual: bool,
    #[arg(long)]
    rho: Option<f64>,
    /// Diffusion step count T.
    #[arg(long = "T")]
    t_steps: Option<usize>,
    #[arg(long)]
    beta_min: Option<f64>,
    #[arg(long)]
    beta_max: Option<f64>,
    #[arg(long)]
    max_q_backup: bool,
    #[arg(long)]
    max_q_samples: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    hidden_layers: Option<usize>,
    #[arg(long)]
    metrics_every: Option<usize>,
    #[arg(long)]
    awr_alpha: Option<f64>,
    #[arg(long)]
    awr_weight_clip: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint file written by `train`.
    #[arg(long)]
    ckpt: PathBuf,
    /// Dataset file to score against.
    #[arg(long)]
    data: PathBuf,
    /// Number of evaluation samples.
    #[arg(long, default_value_t = 5000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Score threshold (nearest-neighbor distance).
    #[arg(long, default_value_t = diffcps::eval::DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long, default_value_t = diffcps::eval::DEFAULT_ANNULUS.0)]
    annulus_lo: f64,
    #[arg(long, default_value_t = diffcps::eval::DEFAULT_ANNULUS.1)]
    annulus_hi: f64,
    /// Report JSON path.
    #[arg(long, default_value = "report.json")]
    report: PathBuf,
    /// Sample CSV path.
    #[arg(long, default_value = "samples.csv")]
    samples_out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::GenData(args) => cmd_gen_data(args),
        Cmd::Train(args) => cmd_train(args),
        Cmd::Eval(args) => cmd_eval(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err @ Error::Usage(_)) => {
            eprintln!("{err}");
            ExitCode::from(2)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_gen_data(args: GenDataArgs) -> diffcps::Result<()> {
    let ds = make_noisy_circle(args.n, args.sigma, args.seed)?;
    ds.save(&args.out)?;
    println!(
        "wrote {} ({} transitions, state_dim={}, action_dim={}, generator={}, seed={})",
        args.out.display(),
        ds.len(),
        ds.state_dim(),
        ds.action_dim(),
        ds.meta().generator,
        ds.meta().seed
    );
    Ok(())
}

fn resolve_config(args: &TrainArgs) -> diffcps::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    macro_rules! flag {
        ($field:ident, $key:literal) => {
            if let Some(v) = &args.$field {
                cfg.set($key, &v.to_string())?;
            }
        };
    }
    if let Some(algo) = &args.algo {
        cfg.algo = algo.parse()?; // usage error on unknown names
    }
    flag!(data, "data");
    flag!(out, "out");
    flag!(seed, "seed");
    flag!(steps, "steps");
    flag!(batch_size, "batch_size");
    flag!(gamma, "gamma");
    flag!(eval_interval, "eval_interval");
    flag!(lr, "lr");
    flag!(lambda_lr, "lambda_lr");
    flag!(lambda_init, "lambda_init");
    flag!(kappa, "kappa");
    flag!(lambda_clip_floor, "lambda_clip_floor");
    flag!(rho, "rho");
    flag!(t_steps, "t_steps");
    flag!(beta_min, "beta_min");
    flag!(beta_max, "beta_max");
    flag!(max_q_samples, "max_q_samples");
    flag!(hidden_dim, "hidden_dim");
    flag!(hidden_layers, "hidden_layers");
    flag!(metrics_every, "metrics_every");
    flag!(awr_alpha, "awr_alpha");
    flag!(awr_weight_clip, "awr_weight_clip");
    if args.no_dual {
        cfg.set("dual_enabled", "false")?;
    }
    if args.max_q_backup {
        cfg.set("max_q_backup", "true")?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(args: TrainArgs) -> diffcps::Result<()> {
    let cfg = resolve_config(&args)?;
    let dataset = OfflineDataset::load(std::path::Path::new(&cfg.data))?;
    let out_dir = PathBuf::from(&cfg.out);
    std::fs::create_dir_all(&out_dir)?;
    // The resolved config goes out first so an interrupted run still records
    // its provenance.
    cfg.save(&out_dir.join("config.txt"))?;

    let (trained, metrics) = run_training(&dataset, &cfg)?;

    std::fs::write(out_dir.join("metrics.csv"), metrics_to_csv(&metrics))?;
    trained.save(&out_dir.join("checkpoint.txt"), &cfg)?;

    if let Some(last) = metrics.last() {
        println!(
            "trained {} for {} steps (final: critic_loss={:.4}, l_c={:.4}, lambda={:.4})",
            cfg.algo, cfg.train.steps, last.critic_loss, last.l_c, last.lambda
        );
    } else {
        println!("trained {} for {} steps", cfg.algo, cfg.train.steps);
    }
    println!("outputs in {}", out_dir.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> diffcps::Result<()> {
    if args.samples == 0 {
        return Err(Error::Usage("--samples must be >= 1".into()));
    }
    if !(args.annulus_lo >= 0.0 && args.annulus_lo < args.annulus_hi) {
        return Err(Error::Usage("annulus bounds must satisfy 0 <= lo < hi".into()));
    }
    let trained = TrainedPolicy::load(&args.ckpt)?;
    let dataset = OfflineDataset::load(&args.data)?;
    if trained.action_dim() != dataset.action_dim() || trained.state_dim() != dataset.state_dim() {
        return Err(Error::Checkpoint(format!(
            "checkpoint dims (state {}, action {}) do not match dataset dims (state {}, action {})",
            trained.state_dim(),
            trained.action_dim(),
            dataset.state_dim(),
            dataset.action_dim()
        )));
    }

    // Samples are conditioned on the zero state (the bandit's dummy state).
    let state = vec![0.0; trained.state_dim()];
    let mut rng = stream_rng(args.seed, Stream::Eval);
    let samples = sample_conditioned(trained.sampling(), &state, args.samples, &mut rng);
    let report = score_report(
        &samples,
        &dataset,
        args.threshold,
        (args.annulus_lo, args.annulus_hi),
    )?;
    std::fs::write(&args.report, serde_json::to_string_pretty(&report).expect("serialize") + "\n")?;
    // The export re-creates the same stream, so the CSV holds exactly the
    // scored samples.
    export_samples(trained.sampling(), &state, args.samples, args.seed, &args.samples_out)?;

    println!(
        "score={:.4} (threshold {}), mean_radius={:.4}, radius_std={:.4}, annulus_fraction={:.4}",
        report.score, report.threshold, report.mean_radius, report.radius_std, report.annulus_fraction
    );
    println!(
        "report: {}, samples: {}",
        args.report.display(),
        args.samples_out.display()
    );
    Ok(())
}
