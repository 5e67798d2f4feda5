use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use faithtune::config::RunConfig;
use faithtune::datagen::{run_pipeline, PipelineRequest, QualityPolicy};
use faithtune::encoder::{evaluate_separation, train, EpochStats, SeparationReport};
use faithtune::eval::{frontier_export, load_reports, run_eval, AnswerSource};
use faithtune::model::{load_conflict_dataset, load_contrastive_dataset, write_conflict_dataset, ContrastiveSample};
use faithtune::reprspace::{centralize, project_2d, separation_stats, Method, SeparationStats};
use faithtune::sweep::{csv_sink, run_sweep, split_holdout};
use faithtune::synth::{synthetic_conflicts, write_synthetic_squad};
use faithtune::teacher::Teacher;
use faithtune::{Error, Result};

#[derive(Parser)]
#[command(name = "faithtune", version, about = "Contrastive faithfulness tuning at desk scale")]
struct Cli {
    /// Run configuration (TOML). Built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a contrastive dataset from SQuAD anchors with the teacher.
    Generate(GenerateArgs),
    /// Train the encoder on a contrastive dataset.
    Train(TrainArgs),
    /// Judge answers to conflict items and write CRR / PRR / MR.
    Eval(EvalArgs),
    /// Project anchor-centred deltas to 2D and report separation.
    Analyze(AnalyzeArgs),
    /// Collect metrics reports into a CRR / MR table.
    Frontier(FrontierArgs),
    /// Train one encoder per training-set size.
    Sweep(SweepArgs),
    /// Check a config file and report every invalid field.
    Validate,
    /// Write a synthetic SQuAD file and conflict suite.
    Synth(SynthArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    /// `mock` or a chat-completions URL.
    #[arg(long)]
    teacher: Option<String>,
    /// Quality policy TOML; replaces the config's `[policy]`.
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long)]
    max_in_flight: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Train on the first N samples only.
    #[arg(long)]
    limit: Option<usize>,
    /// Hold the last N samples out and report separation on them.
    #[arg(long, default_value_t = 0)]
    holdout: usize,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    items: PathBuf,
    /// Answers file, `mock:contextual`, `mock:parametric`, `encoder:<ckpt>` or `remote:<url>`.
    #[arg(long)]
    answers: String,
    #[arg(long)]
    label: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Pca,
    Tsne,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "pca")]
    method: MethodArg,
    #[arg(long, default_value_t = 30.0)]
    perplexity: f64,
    #[arg(long, default_value_t = 1000)]
    iterations: usize,
    /// Analyze the last N samples only.
    #[arg(long)]
    last: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FrontierArgs {
    #[arg(long)]
    reports: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "100,250,500,1000")]
    sizes: Vec<usize>,
    /// Trailing samples kept out of every training set.
    #[arg(long, default_value_t = 200)]
    holdout: usize,
    /// Synthetic conflict items for the CRR column.
    #[arg(long, default_value_t = 300)]
    conflicts: usize,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 500)]
    paragraphs: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    conflicts: usize,
    #[arg(long)]
    conflicts_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.cmd {
        Cmd::Validate => validate(&cfg),
        Cmd::Generate(a) => generate(cfg, a),
        Cmd::Train(a) => train_cmd(cfg, a),
        Cmd::Eval(a) => eval_cmd(cfg, a),
        Cmd::Analyze(a) => analyze(cfg, a),
        Cmd::Frontier(a) => frontier(cfg, a),
        Cmd::Sweep(a) => sweep(cfg, a),
        Cmd::Synth(a) => synth(cfg, a),
    }
}

/// Prints to stdout; a closed pipe (`| head`) is not an error.
fn print_json(value: &impl Serialize) -> Result<()> {
    let body = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{body}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::io("<stdout>", e)),
        _ => Ok(()),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let body = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

fn load_samples(path: &Path) -> Result<Vec<ContrastiveSample>> {
    let loaded = load_contrastive_dataset(path)?;
    if !loaded.rejected.is_empty() {
        log::warn!("{}: skipped {} invalid records", path.display(), loaded.rejected.len());
    }
    Ok(loaded.items)
}

fn validate(cfg: &RunConfig) -> Result<()> {
    let diags = cfg.diagnostics();
    if diags.is_empty() {
        println!("config is valid");
        return Ok(());
    }
    for d in &diags {
        eprintln!("invalid {d}");
    }
    Err(Error::Config(format!("{} invalid field(s)", diags.len())))
}

fn generate(mut cfg: RunConfig, a: GenerateArgs) -> Result<()> {
    if let Some(s) = a.source {
        cfg.paths.source = Some(s);
    }
    if let Some(o) = a.out {
        cfg.paths.dataset = o;
    }
    if let Some(t) = a.teacher {
        cfg.teacher.endpoint = t;
    }
    if let Some(p) = a.policy {
        cfg.policy = QualityPolicy::load(p)?;
    }
    if let Some(m) = a.max_in_flight {
        cfg.teacher.max_in_flight = m;
    }
    cfg.validate()?;
    let source = cfg
        .paths
        .source
        .clone()
        .ok_or_else(|| Error::Config("paths.source is required (or pass --source)".into()))?;
    ensure_parent(&cfg.paths.dataset)?;
    let req = PipelineRequest {
        squad_path: source,
        n_samples: a.n,
        out_path: cfg.paths.dataset.clone(),
        seed: cfg.seed,
        max_in_flight: cfg.teacher.max_in_flight,
    };
    let teacher = Teacher::new(cfg.teacher.clone())?;
    let report = run_pipeline(&req, &teacher, &cfg.policy)?;
    print_json(&report)
}

#[derive(Serialize)]
struct TrainReport {
    samples: usize,
    trajectory: Vec<EpochStats>,
    holdout: Option<HoldoutSummary>,
}

#[derive(Serialize)]
struct HoldoutSummary {
    samples: usize,
    mean_margin: f64,
    positive_margin_fraction: f64,
    untrained_margin_fraction: f64,
}

fn summary(trained: &SeparationReport, untrained: &SeparationReport) -> HoldoutSummary {
    HoldoutSummary {
        samples: trained.samples,
        mean_margin: trained.mean_margin,
        positive_margin_fraction: trained.positive_margin_fraction,
        untrained_margin_fraction: untrained.positive_margin_fraction,
    }
}

fn train_cmd(mut cfg: RunConfig, a: TrainArgs) -> Result<()> {
    if let Some(d) = a.dataset {
        cfg.paths.dataset = d;
    }
    if let Some(c) = a.checkpoint {
        cfg.paths.checkpoint = c;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(lr) = a.lr {
        cfg.train.learning_rate = lr;
    }
    if let Some(d) = a.dim {
        cfg.train.dim = d;
    }
    if let Some(t) = a.temperature {
        cfg.loss.temperature = t;
    }
    cfg.validate()?;
    let samples = load_samples(&cfg.paths.dataset)?;
    let (pool, holdout) = if a.holdout > 0 {
        split_holdout(&samples, a.holdout)?
    } else {
        (&samples[..], &samples[..0])
    };
    let pool = &pool[..a.limit.unwrap_or(pool.len()).min(pool.len())];
    let tc = cfg.train_config();
    let untrained = if holdout.is_empty() {
        None
    } else {
        let p0 = faithtune::encoder::EncoderParams::init(
            faithtune::encoder::Vocab::from_samples(pool),
            tc.dim,
            tc.max_sequence_tokens,
            tc.seed,
        )?;
        Some(evaluate_separation(&p0, holdout, &tc.loss)?)
    };
    let outcome = train(pool, &tc)?;
    let holdout_summary = match untrained {
        Some(u) => Some(summary(&evaluate_separation(&outcome.params, holdout, &tc.loss)?, &u)),
        None => None,
    };
    ensure_parent(&cfg.paths.checkpoint)?;
    outcome.params.save(&cfg.paths.checkpoint)?;
    let report = TrainReport {
        samples: pool.len(),
        trajectory: outcome.trajectory,
        holdout: holdout_summary,
    };
    write_json(&sidecar(&cfg.paths.checkpoint, ".train.json"), &report)?;
    print_json(&report)
}

fn eval_cmd(mut cfg: RunConfig, a: EvalArgs) -> Result<()> {
    if let Some(o) = a.out {
        cfg.paths.reports = o;
    }
    cfg.loss.validate()?;
    let loaded = load_conflict_dataset(&a.items)?;
    if loaded.dropped_degenerate > 0 {
        log::warn!("dropped {} items whose answers coincide", loaded.dropped_degenerate);
    }
    let items = loaded.strict()?;
    let source = AnswerSource::parse(&a.answers, cfg.loss)?;
    std::fs::create_dir_all(&cfg.paths.reports).map_err(|e| Error::io(&cfg.paths.reports, e))?;
    let report = run_eval(&items, &source, &a.label, &cfg.paths.reports)?;
    print_json(&report)
}

#[derive(Serialize)]
struct AnalyzeStats<'a> {
    method: &'a str,
    seed: u64,
    points: usize,
    explained_variance: Option<[f64; 2]>,
    axis_variance: Option<[f64; 2]>,
    separation: SeparationStats,
}

fn analyze(mut cfg: RunConfig, a: AnalyzeArgs) -> Result<()> {
    if let Some(d) = a.dataset {
        cfg.paths.dataset = d;
    }
    if let Some(c) = a.checkpoint {
        cfg.paths.checkpoint = c;
    }
    let params = faithtune::encoder::EncoderParams::load(&cfg.paths.checkpoint)?;
    let samples = load_samples(&cfg.paths.dataset)?;
    let samples = match a.last {
        Some(n) => &samples[samples.len().saturating_sub(n)..],
        None => &samples[..],
    };
    let method = match a.method {
        MethodArg::Pca => Method::Pca,
        MethodArg::Tsne => Method::Tsne {
            perplexity: a.perplexity,
            iterations: a.iterations,
        },
    };
    let points = centralize(samples, &params)?;
    let projection = project_2d(&points, method, cfg.seed)?;
    let separation = separation_stats(&points, cfg.seed)?;
    ensure_parent(&a.out)?;
    std::fs::write(&a.out, projection.to_csv()).map_err(|e| Error::io(&a.out, e))?;
    let stats = AnalyzeStats {
        method: method.name(),
        seed: cfg.seed,
        points: points.len(),
        explained_variance: projection.explained_variance,
        axis_variance: projection.axis_variance,
        separation,
    };
    write_json(&sidecar(&a.out, ".stats.json"), &stats)?;
    print_json(&stats)
}

fn frontier(mut cfg: RunConfig, a: FrontierArgs) -> Result<()> {
    if let Some(r) = a.reports {
        cfg.paths.reports = r;
    }
    let reports = load_reports(&cfg.paths.reports)?;
    ensure_parent(&a.out)?;
    let rows = frontier_export(&reports, &a.out)?;
    print_json(&rows)
}

fn sweep(mut cfg: RunConfig, a: SweepArgs) -> Result<()> {
    if let Some(d) = a.dataset {
        cfg.paths.dataset = d;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(lr) = a.lr {
        cfg.train.learning_rate = lr;
    }
    let tc = cfg.train_config();
    tc.validate()?;
    let samples = load_samples(&cfg.paths.dataset)?;
    let (pool, holdout) = split_holdout(&samples, a.holdout)?;
    faithtune::sweep::check_sizes(&a.sizes, pool.len())?;
    let conflicts = synthetic_conflicts(a.conflicts, cfg.seed);
    ensure_parent(&a.out)?;
    let file = File::create(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let sink = csv_sink(BufWriter::new(file))?;
    let outcome = run_sweep(pool, holdout, &conflicts, &a.sizes, &tc, sink)?;
    print_json(&outcome.rows)?;
    match outcome.failed {
        Some((_, e)) => Err(e),
        None => Ok(()),
    }
}

fn synth(cfg: RunConfig, a: SynthArgs) -> Result<()> {
    ensure_parent(&a.out)?;
    write_synthetic_squad(&a.out, a.paragraphs, cfg.seed)?;
    if a.conflicts > 0 {
        let path = a
            .conflicts_out
            .ok_or_else(|| Error::Config("--conflicts needs --conflicts-out".into()))?;
        ensure_parent(&path)?;
        write_conflict_dataset(&path, &synthetic_conflicts(a.conflicts, cfg.seed))?;
    }
    Ok(())
}
