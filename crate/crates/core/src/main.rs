use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use adma::active::http::HttpOracle;
use adma::active::{
    write_outputs, AlphaMode, Lambda, LoopError, LoopState, Oracle, OracleError, Session,
    SimulatedOracle, Strategy, StrategyConfig,
};
use adma::pattern::MultiMode;
use adma::selection::UncertaintyMode;
use adma::store::{generate_synthetic_task, load_source, split_pool, EmbeddingDataset, SyntheticConfig};
use adma::trainer::TrainConfig;

#[derive(Parser)]
#[command(name = "adma", version, about = "Batch-mode active model adaptation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic source/target transfer task.
    GenSynth {
        /// JSON generator settings; missing fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the active adaptation loop.
    Run(Box<RunArgs>),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OracleKind {
    Simulated,
    Http,
}

#[derive(Args)]
struct RunArgs {
    /// Target dataset manifest.
    #[arg(long)]
    manifest: PathBuf,
    /// Source snapshot (precomputed centers or raw source embeddings).
    #[arg(long)]
    source: PathBuf,
    #[arg(long, value_enum, default_value_t = Strategy::Adma)]
    strategy: Strategy,
    #[arg(long, value_enum, default_value_t = AlphaMode::Predict)]
    alpha: AlphaMode,
    /// Start-layer indices to pair with the end layer (0 = layer_A).
    #[arg(long, value_delimiter = ',')]
    layer_pairs: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    batch_size: usize,
    #[arg(long, default_value_t = 100)]
    budget: usize,
    /// Trade-off rate, or `auto` for one over the number of iterations.
    #[arg(long, default_value = "auto")]
    lambda: Lambda,
    #[arg(long, value_enum, default_value_t = UncertaintyMode::Gini)]
    uncertainty: UncertaintyMode,
    #[arg(long, value_enum, default_value_t = MultiMode::Mean)]
    multi: MultiMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = OracleKind::Simulated)]
    oracle: OracleKind,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: String,
    /// Seconds to wait for a batch to be labeled before suspending.
    #[arg(long, default_value_t = 3600.0)]
    timeout: f64,
    #[arg(long)]
    out: PathBuf,
    /// Stop once test accuracy reaches this value.
    #[arg(long)]
    target_accuracy: Option<f64>,
    /// Continue from a checkpoint file or directory.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Separate labeled test manifest; otherwise a stratified split of `--manifest`.
    #[arg(long)]
    test_manifest: Option<PathBuf>,
    /// Fraction of a labeled manifest held out for evaluation (0 disables).
    #[arg(long, default_value_t = 0.3)]
    test_fraction: f64,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 16)]
    minibatch: usize,
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    /// Re-initialize the head before each round instead of continuing.
    #[arg(long)]
    retrain_from_init: bool,
    /// Train only on the newest batch rather than on every label so far.
    #[arg(long)]
    per_batch_only: bool,
}

impl RunArgs {
    fn config(&self) -> StrategyConfig {
        StrategyConfig {
            strategy: self.strategy,
            alpha_mode: self.alpha,
            layer_pairs: self.layer_pairs.clone(),
            batch_size: self.batch_size,
            budget: self.budget,
            lambda: self.lambda,
            uncertainty_mode: self.uncertainty,
            multi_mode: self.multi,
            seed: self.seed,
            train: TrainConfig {
                learning_rate: self.learning_rate,
                epochs: self.epochs,
                minibatch_size: self.minibatch,
                l2_penalty: self.l2,
                seed: self.seed,
            },
            warm_start: !self.retrain_from_init,
            cumulative: !self.per_batch_only,
            target_accuracy: self.target_accuracy,
            threads: self.threads,
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Loop(#[from] LoopError),
    #[error(transparent)]
    Store(#[from] adma::store::StoreError),
    #[error("{0}")]
    Usage(String),
}

enum Outcome {
    Finished,
    Suspended,
}

fn gen_synth(config: Option<&Path>, seed: u64, out: &Path) -> Result<(), CliError> {
    let cfg: SyntheticConfig = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        None => SyntheticConfig::default(),
    };
    let task = generate_synthetic_task(&cfg, seed)?;
    let manifest = task.target.write(out, "manifest")?;
    let snapshot = task.snapshot.write(out, "source")?;
    let raw = task.source.write(out, "source_raw")?;
    if let Some(holdout) = &task.source_holdout {
        holdout.write(out, "source_holdout")?;
    }
    println!("wrote {}, {} and {}", manifest.display(), snapshot.display(), raw.display());
    Ok(())
}

fn datasets(args: &RunArgs) -> Result<(EmbeddingDataset, Option<EmbeddingDataset>), CliError> {
    let data = EmbeddingDataset::load(&args.manifest)?;
    if let Some(path) = &args.test_manifest {
        return Ok((data, Some(EmbeddingDataset::load(path)?)));
    }
    if args.test_fraction == 0.0 {
        return Ok((data, None));
    }
    if data.labels.is_none() {
        warn!("manifest has no labels; running without a test set");
        return Ok((data, None));
    }
    let (pool, test) = split_pool(&data, args.test_fraction, args.seed)?;
    Ok((pool, Some(test)))
}

fn run(args: &RunArgs) -> Result<Outcome, CliError> {
    let (pool, test) = datasets(args)?;
    let source = load_source(&args.source)?;

    let config = args.config();
    let resumed = match &args.resume {
        Some(path) => {
            let (saved, state) = LoopState::load_checkpoint(path)?;
            if saved != config {
                warn!("checkpoint was written with a different configuration; continuing with the one given now");
            }
            state
                .check_invariants(pool.len())
                .map_err(|e| CliError::Usage(format!("checkpoint does not match the pool: {e}")))?;
            Some(state)
        }
        None => None,
    };
    let session = Session::new(&pool, test.as_ref(), &source, config.clone())?;
    let mut state = match resumed {
        Some(s) => s,
        None => session.initial_state()?,
    };

    let mut oracle: Box<dyn Oracle> = match args.oracle {
        OracleKind::Simulated => Box::new(SimulatedOracle::new(&pool)?),
        OracleKind::Http => {
            if !(args.timeout > 0.0 && args.timeout.is_finite()) {
                return Err(CliError::Usage("--timeout must be positive".into()));
            }
            let http = HttpOracle::serve(
                &args.bind,
                pool.class_names(),
                config.budget,
                Duration::from_secs_f64(args.timeout),
            )
            .map_err(LoopError::from)?;
            println!("labeling service at http://{}", http.local_addr());
            http.sync(&state, config.budget);
            Box::new(http)
        }
    };

    let outcome = loop {
        if let Some(reason) = session.stop_reason(&state) {
            info!("stopping: {reason:?}");
            break Outcome::Finished;
        }
        match session.run_iteration(&mut state, oracle.as_mut()) {
            Ok(report) => {
                info!(
                    "iteration {}: {} queried, accuracy {:?}",
                    report.iteration, report.metrics.queries, report.metrics.accuracy
                );
                oracle.observe(&state, config.budget);
                state.save_checkpoint(&args.out, &config)?;
            }
            Err(LoopError::Oracle(OracleError::Timeout { seconds })) => {
                warn!("no complete batch after {seconds:.0}s; suspending at iteration {}", state.t);
                break Outcome::Suspended;
            }
            Err(e) => return Err(e.into()),
        }
    };
    state.save_checkpoint(&args.out, &config)?;
    write_outputs(&args.out, &state)?;
    if let Some(m) = state.latest_metrics() {
        println!(
            "{} iterations, {} queries, accuracy {}, macro AUC {}",
            state.t,
            m.queries,
            m.accuracy.map_or("n/a".into(), |a| format!("{a:.4}")),
            m.macro_auc.map_or("n/a".into(), |a| format!("{a:.4}")),
        );
    }
    Ok(outcome)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenSynth { config, seed, out } => gen_synth(config.as_deref(), *seed, out).map(|_| Outcome::Finished),
        Command::Run(args) => run(args),
    };
    match result {
        Ok(Outcome::Finished) => ExitCode::SUCCESS,
        Ok(Outcome::Suspended) => {
            eprintln!("suspended; continue with --resume <out dir>");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
