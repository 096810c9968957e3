//! `hamlet` subcommands. Each returns the text it would print so the same
//! code paths run in-process from tests.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use hamlet_core::cohort::{build_dataset, generate_cohort, write_cohort, CohortSpec, PatientMode, SimulatedExpert};
use hamlet_core::colearn::{
    compare_strategies, format_strategy_table, predict_dataset, ArchPreset, ColearnConfig, ExpertConfig, ModelKind,
    Run, RunStatus, TrainPlan, DEFAULT_STRATEGY_BUDGET,
};
use hamlet_core::memory::{format_percentages, DEFAULT_MEMORY_SIZE};
use hamlet_core::nn::TrainConfig;
use hamlet_core::signal::io::{list_recordings, read_json, write_json, RecordingHeader};
use hamlet_core::signal::{run_pipeline, PipelineConfig};
use hamlet_core::{Error, Result, NUM_CLASSES};

pub const STRATEGIES_REPORT: &str = "strategies.json";

#[derive(Debug, Parser)]
#[command(
    name = "hamlet",
    version,
    about = "Human-and-machine co-learning for noisy EEG labels"
)]
pub struct Cli {
    /// Restore full scale: 200 Hz, 20 000 sequences, 512 references.
    #[arg(long, global = true)]
    pub paper_scale: bool,
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthetic cohort generation.
    #[command(subcommand)]
    Cohort(CohortCommand),
    /// Signal preprocessing.
    #[command(subcommand)]
    Pipeline(PipelineCommand),
    /// Train and evaluate one model without review rounds.
    Train(TrainArgs),
    /// Run co-learning rounds (or resume an interrupted run).
    Colearn(ColearnArgs),
    /// Compare suggestion strategies on a trained round.
    CompareStrategies(CompareArgs),
    /// Serve runs over HTTP for expert review.
    Serve(ServeArgs),
    /// Print a run's summary or one round's report.
    Report(ReportArgs),
}

#[derive(Debug, Subcommand)]
pub enum CohortCommand {
    /// Write raw recordings and the label manifest.
    Generate(CohortArgs),
    /// Generate and preprocess in one step into a dataset directory.
    Build(CohortArgs),
}

#[derive(Debug, Subcommand)]
pub enum PipelineCommand {
    /// Filter, montage and segment every recording in a directory.
    Run(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct CohortArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub patients: Option<usize>,
    /// Windows per class: one count for all classes, or five comma-separated counts.
    #[arg(long, value_delimiter = ',')]
    pub per_class: Vec<usize>,
    #[arg(long)]
    pub sample_rate: Option<f64>,
    #[arg(long)]
    pub window_s: Option<f64>,
    /// Label corruption probability.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Spread of per-patient idiosyncrasies.
    #[arg(long)]
    pub variation: Option<f64>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long = "in", alias = "input")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Expected sampling rate; recordings at other rates are rejected.
    #[arg(long)]
    pub sample_rate: Option<f64>,
    /// Low-pass cutoff in Hz.
    #[arg(long)]
    pub cutoff: Option<f64>,
    /// Window length in seconds.
    #[arg(long)]
    pub window: Option<f64>,
    /// Context on each side in seconds.
    #[arg(long)]
    pub context: Option<f64>,
}

#[derive(Debug, Args, Clone)]
pub struct ModelArgs {
    /// hamlet-cnn, hamlet-cae, cnn or mlp.
    #[arg(long, default_value = "hamlet-cnn")]
    pub model: String,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    /// Embedding architecture: standard or compact.
    #[arg(long, default_value = "standard")]
    pub arch: String,
    #[arg(long, default_value_t = 1024)]
    pub head_hidden: usize,
    #[arg(long, default_value_t = 0.2)]
    pub dropout: f64,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Head training epochs (defaults to the pre-training epochs).
    #[arg(long)]
    pub head_epochs: Option<usize>,
    #[arg(long)]
    pub memory_size: Option<usize>,
    #[arg(long)]
    pub normalize_embedding: bool,
    #[arg(long)]
    pub no_flip: bool,
    /// unseen or known.
    #[arg(long, default_value = "unseen")]
    pub patient_mode: String,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct ColearnArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "confidence")]
    pub strategy: String,
    #[arg(long, default_value_t = 1)]
    pub rounds: usize,
    /// Suggestions per round; defaults to a fraction of the dataset.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long, default_value_t = 0.04)]
    pub budget_fraction: f64,
    #[arg(long, default_value_t = 100)]
    pub pretrain_epochs: usize,
    #[arg(long, default_value_t = 20)]
    pub finetune_epochs: usize,
    /// Simulated expert agreement rate; without it rounds park for human review.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 7)]
    pub expert_seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub quorum: f64,
    /// Reuse the decisions of another run instead of reviewing.
    #[arg(long)]
    pub shared_decisions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Round whose model to use; defaults to the first.
    #[arg(long, default_value_t = 1)]
    pub round: usize,
    #[arg(long, default_value_t = DEFAULT_STRATEGY_BUDGET)]
    pub budget: usize,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 7)]
    pub expert_seed: u64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// A run directory or a directory of runs.
    #[arg(long)]
    pub runs: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub round: Option<usize>,
}

/// 2 usage, 3 data or schema, 4 numeric.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage(_) | Error::Config(_) | Error::Conflict(_) | Error::Pending { .. } => 2,
        Error::Numeric(_) => 4,
        _ => 3,
    }
}

pub fn run(cli: Cli) -> Result<String> {
    let paper = cli.paper_scale;
    match cli.command {
        Command::Cohort(CohortCommand::Generate(a)) => {
            let spec = cohort_spec(&a, paper)?;
            let cohort = generate_cohort(&spec)?;
            let manifest = write_cohort(&a.out, &spec, &cohort)?;
            Ok(format!(
                "wrote {} recordings, {} windows to {}\n",
                cohort.recordings.len(),
                manifest.windows.len(),
                a.out.display()
            ))
        }
        Command::Cohort(CohortCommand::Build(a)) => {
            let spec = cohort_spec(&a, paper)?;
            let manifest = build_dataset(&a.out, &spec, &pipeline_for(spec.sample_rate_hz, Some(spec.window_s)))?;
            Ok(format!(
                "wrote {} sequences to {}\n",
                manifest.windows.len(),
                a.out.display()
            ))
        }
        Command::Pipeline(PipelineCommand::Run(a)) => {
            let rate = match a.sample_rate {
                Some(r) => r,
                None => {
                    let first = list_recordings(&a.input)?
                        .into_iter()
                        .next()
                        .ok_or_else(|| Error::Input(format!("no recordings in {}", a.input.display())))?;
                    read_json::<RecordingHeader>(&first)?.sample_rate_hz
                }
            };
            let mut cfg = pipeline_for(rate, a.window);
            if let Some(c) = a.cutoff {
                cfg.cutoff_hz = c;
            }
            if let Some(c) = a.context {
                cfg.context_s = c;
            }
            let n = run_pipeline(&a.input, &a.out, &cfg)?;
            write_json(&a.out.join("pipeline.json"), &cfg)?;
            Ok(format!("wrote {n} sequences to {}\n", a.out.display()))
        }
        Command::Train(a) => {
            let mut cfg = colearn_config(&a.model, paper, a.epochs, a.epochs)?;
            cfg.rounds = 0;
            let mut run = open_or_create(&a.out, Some(&a.data), cfg)?;
            let store = run.load_store()?;
            run.drive(&store)?;
            let r = run.report(1)?;
            Ok(format!(
                "{}: train accuracy {:.2}%, test accuracy {:.2}% ({} test sequences)\n",
                r.model,
                100.0 * r.train_accuracy,
                100.0 * r.before.accuracy,
                r.before.test_count
            ))
        }
        Command::Colearn(a) => {
            let mut cfg = colearn_config(&a.model, paper, a.pretrain_epochs, a.finetune_epochs)?;
            cfg.strategy = a.strategy.parse()?;
            cfg.rounds = a.rounds;
            cfg.budget = a.budget;
            cfg.budget_fraction = a.budget_fraction;
            cfg.quorum = a.quorum;
            cfg.expert = a.alpha.map(|alpha| ExpertConfig {
                alpha,
                seed: a.expert_seed,
            });
            cfg.shared_decisions = a.shared_decisions.clone();
            let mut run = open_or_create(&a.out, a.data.as_deref(), cfg)?;
            let store = run.load_store()?;
            run.drive(&store)?;
            let mut out = run.summary()?.table();
            if run.state.status != RunStatus::Closed {
                out += &format!(
                    "round {} is {:?}: {} suggestion(s) await review\n",
                    run.state.round,
                    run.state.status,
                    run.pending()?.len()
                );
            }
            Ok(out)
        }
        Command::CompareStrategies(a) => {
            let run = Run::open(&a.run)?;
            let store = run.load_store()?;
            let model = run.load_model(a.round)?;
            let outputs = predict_dataset(&model, &store, &run.dataset, run.config.colearn.plan.train.batch_size)?;
            let expert = SimulatedExpert::new(a.alpha, a.expert_seed)?;
            let rows = compare_strategies(&run.dataset, &outputs, &expert, a.budget)?;
            write_json(&a.run.join(STRATEGIES_REPORT), &rows)?;
            Ok(format_strategy_table(&rows))
        }
        Command::Serve(a) => serve(&a),
        Command::Report(a) => {
            let run = Run::open(&a.run)?;
            match a.round {
                None => Ok(run.summary()?.table()),
                Some(t) => {
                    let r = run.report(t)?;
                    let mut s = serde_json::to_string_pretty(&r).map_err(|e| Error::json(&a.run, e))?;
                    if let Some(i) = &r.interpretability {
                        s += &format!("\ninterpretability: {}", format_percentages(i));
                    }
                    s.push('\n');
                    Ok(s)
                }
            }
        }
    }
}

fn cohort_spec(a: &CohortArgs, paper: bool) -> Result<CohortSpec> {
    let base = if paper {
        CohortSpec::paper_scale()
    } else {
        CohortSpec::default()
    };
    let spec = CohortSpec {
        patient_count: a.patients.unwrap_or(base.patient_count),
        per_class: match a.per_class.as_slice() {
            [] => base.per_class,
            [n] => [*n; NUM_CLASSES],
            v => v
                .try_into()
                .map_err(|_| Error::Usage(format!("--per-class takes 1 or {NUM_CLASSES} counts, got {}", v.len())))?,
        },
        sample_rate_hz: a.sample_rate.unwrap_or(base.sample_rate_hz),
        window_s: a.window_s.unwrap_or(base.window_s),
        rho: a.rho.unwrap_or(base.rho),
        patient_variation: a.variation.unwrap_or(base.patient_variation),
        seed: a.seed,
        ..base
    };
    spec.validate()?;
    Ok(spec)
}

fn pipeline_for(rate: f64, window_s: Option<f64>) -> PipelineConfig {
    let mut cfg = PipelineConfig::for_rate(rate);
    if let Some(w) = window_s {
        cfg.window_s = w;
    }
    cfg
}

fn colearn_config(m: &ModelArgs, paper: bool, pretrain: usize, finetune: usize) -> Result<ColearnConfig> {
    let model: ModelKind = m.model.parse()?;
    let arch = match m.arch.as_str() {
        "standard" => ArchPreset::Standard,
        "compact" => ArchPreset::Compact,
        other => {
            return Err(Error::Usage(format!(
                "unknown architecture {other:?} (choices: standard, compact)"
            )))
        }
    };
    let patient_mode: PatientMode = m.patient_mode.parse().map_err(|e: Error| Error::Usage(e.to_string()))?;
    let defaults = TrainConfig::default();
    let train = TrainConfig {
        batch_size: m.batch,
        dropout: m.dropout,
        seed: m.seed,
        head_hidden: m.head_hidden,
        flip_augment: !m.no_flip,
        adam: hamlet_core::nn::AdamConfig {
            lr: m.learning_rate.unwrap_or(defaults.adam.lr),
            ..defaults.adam
        },
        ..defaults
    };
    let cfg = ColearnConfig {
        model,
        arch,
        patient_mode,
        test_fraction: m.test_fraction,
        seed: m.seed,
        plan: TrainPlan {
            pretrain_epochs: pretrain,
            finetune_epochs: finetune,
            head_epochs: m.head_epochs.unwrap_or(pretrain),
            memory_size: m.memory_size.unwrap_or(if paper { 512 } else { DEFAULT_MEMORY_SIZE }),
            normalize_embedding: m.normalize_embedding,
            train,
        },
        ..ColearnConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn open_or_create(out: &Path, data: Option<&Path>, cfg: ColearnConfig) -> Result<Run> {
    if out.join(hamlet_core::colearn::RUN_STATE).exists() {
        tracing::info!(run = %out.display(), "resuming existing run");
        return Run::open(out);
    }
    let data = data.ok_or_else(|| Error::Usage("--data is required for a new run".into()))?;
    Ok(Run::create(out, data, cfg)?.0)
}

fn serve(a: &ServeArgs) -> Result<String> {
    if !a.runs.exists() {
        return Err(Error::NotFound(format!("{}", a.runs.display())));
    }
    let rt = tokio::runtime::Runtime::new().map_err(|e| Error::io(&a.runs, e))?;
    rt.block_on(async {
        let addr = format!("{}:{}", a.host, a.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| Error::Usage(format!("cannot listen on {addr}: {e}")))?;
        tracing::info!(%addr, "serving");
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        hamlet_service::serve(&a.runs, listener, shutdown)
            .await
            .map_err(|e| Error::io(&a.runs, e))
    })?;
    Ok(String::new())
}
