use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use sem_core::env::{TaskId, WorldConfig};
use sem_core::harness::{self, Checkpoint, Condition, JsonLog, NetworkAgent, RunConfig};
use sem_core::net::ModelKind;
use sem_core::numerics::gradcheck::GradCheckOptions;
use sem_core::trainer::{network_grad_check, IterationLog};

#[derive(Parser)]
#[command(name = "sem-a2c", version, about = "Train and evaluate SEM-A2C agents on the Taxi grid-world")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network and write checkpoint.bin and train_log.jsonl.
    Train(TrainArgs),
    /// Completion steps by task and appearance index, as CSV.
    Eval(EvalArgs),
    /// Visit-frequency grids of the taxi during ReachD on one fixed map.
    Heatmap(HeatmapArgs),
    /// Fine-tune heads and task embedding on all seven tasks.
    Finetune(FinetuneArgs),
    /// Finite-difference check of the full reverse pass.
    GradCheck(GradCheckArgs),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Map side length.
    #[arg(long)]
    map: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Environment step budget.
    #[arg(long)]
    steps: Option<u64>,
    /// sem, multitask, baseline_concat or baseline_factorized.
    #[arg(long)]
    model: Option<String>,
    /// Comma-separated task names.
    #[arg(long)]
    tasks: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "run")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 500)]
    runs: usize,
    /// CSV destination; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HeatmapArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 50)]
    runs: usize,
    /// before, after or both.
    #[arg(long, default_value = "both")]
    condition: String,
    #[arg(long, default_value = "heatmap")]
    out: PathBuf,
}

#[derive(Args)]
struct FinetuneArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Fine-tuning budget in environment steps.
    #[arg(long, default_value_t = 1_000_000)]
    steps: u64,
    #[arg(long, default_value = "finetune")]
    out: PathBuf,
}

#[derive(Args)]
struct GradCheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "sem")]
    model: String,
}

/// Configuration file (or defaults) with command-line overrides applied.
fn run_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(m) = common.map {
        cfg.map_size = m;
    }
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn print_log(log: &IterationLog) {
    let success: Vec<String> = log.success.iter().map(|(k, v)| format!("{k}={v:.2}")).collect();
    println!(
        "iter {} steps {} return {} loss {:.4} {}",
        log.iteration,
        log.step,
        log.mean_return.map_or("-".into(), |r| format!("{r:.2}")),
        log.loss.total,
        success.join(" ")
    );
}

fn train(args: TrainArgs) -> Result<()> {
    let mut cfg = run_config(&args.common)?;
    if let Some(s) = args.steps {
        cfg.total_steps = s;
    }
    if let Some(m) = &args.model {
        cfg.model = ModelKind::parse(m)?;
    }
    if let Some(t) = &args.tasks {
        cfg.tasks = t.split(',').map(|s| TaskId::parse(s.trim())).collect::<sem_core::Result<_>>()?;
    }
    cfg.validate()?;
    create_dir(&args.out)?;
    let mut log = JsonLog::create(&args.out.join("train_log.jsonl"))?;
    let every = cfg.log_every.max(1);
    let ckpt = harness::train(&cfg, |l| {
        if l.iteration % every == 0 {
            print_log(l);
        }
        log.write(l)
    })?;
    let path = args.out.join("checkpoint.bin");
    ckpt.save(&path)?;
    println!("wrote {} after {} steps", path.display(), ckpt.manifest.steps);
    Ok(())
}

/// Checkpoint plus its configuration with command-line overrides.
fn checkpoint_config(path: &Path, common: &Common) -> Result<(Checkpoint, RunConfig)> {
    let ckpt = Checkpoint::load(path)?;
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => ckpt.manifest.config.clone(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(m) = common.map {
        cfg.map_size = m;
    }
    Ok((ckpt, cfg))
}

fn eval(args: EvalArgs) -> Result<()> {
    let (mut ckpt, cfg) = checkpoint_config(&args.checkpoint, &args.common)?;
    ckpt.manifest.config.greedy = cfg.greedy;
    ckpt.manifest.config.use_predicted_completion = cfg.use_predicted_completion;
    let report = harness::evaluate(&ckpt, &cfg.eval_options(args.runs))?;
    let csv = report.to_csv();
    match &args.out {
        Some(p) => std::fs::write(p, &csv).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{csv}"),
    }
    if let Some(s) = report.overall_success() {
        eprintln!("{} runs, overall success {s:.3}", report.runs);
    }
    Ok(())
}

fn heatmap(args: HeatmapArgs) -> Result<()> {
    let (ckpt, cfg) = checkpoint_config(&args.checkpoint, &args.common)?;
    let wanted: Vec<Condition> = match args.condition.as_str() {
        "both" => vec![Condition::BeforeTargetVisit, Condition::AfterTargetVisit],
        c => vec![Condition::parse(c)?],
    };
    let net = ckpt.network()?;
    let mut agent = NetworkAgent::new(&net, cfg.seed);
    agent.greedy = cfg.greedy;
    agent.use_predicted_completion = cfg.use_predicted_completion;
    let world = WorldConfig::taxi(cfg.map_size, cfg.episode_len).with_tasks(&cfg.tasks);
    let grids = harness::heatmap(&mut agent, cfg.seed, args.runs, &world)?;
    create_dir(&args.out)?;
    for g in grids.iter().filter(|g| wanted.contains(&g.condition)) {
        if g.is_empty() {
            eprintln!("warning: condition {} never occurred; writing an empty grid", g.condition.name());
        }
        g.write(&args.out, g.condition.name())?;
        println!("{}: {} ReachD steps", g.condition.name(), g.total());
    }
    Ok(())
}

fn finetune(args: FinetuneArgs) -> Result<()> {
    let base = Checkpoint::load(&args.checkpoint)?;
    create_dir(&args.out)?;
    let mut log = JsonLog::create(&args.out.join("train_log.jsonl"))?;
    let every = base.manifest.config.log_every.max(1);
    let ckpt = harness::finetune(&base, args.steps, args.seed, |l| {
        if l.iteration % every == 0 {
            print_log(l);
        }
        log.write(l)
    })?;
    let path = args.out.join("checkpoint.bin");
    ckpt.save(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn grad_check(args: GradCheckArgs) -> Result<bool> {
    let kind = ModelKind::parse(&args.model)?;
    let opts = GradCheckOptions {
        seed: args.seed,
        ..GradCheckOptions::default()
    };
    let report = network_grad_check(kind, args.seed, &opts)?;
    for p in &report.params {
        println!("{:<16} {:.3e} ({} entries)", p.name, p.max_rel_err, p.checked);
    }
    let ok = report.passes(1e-4);
    println!("max relative error {:.3e}: {}", report.max_rel_err(), if ok { "pass" } else { "FAIL" });
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a).map(|_| true),
        Command::Eval(a) => eval(a).map(|_| true),
        Command::Heatmap(a) => heatmap(a).map(|_| true),
        Command::Finetune(a) => finetune(a).map(|_| true),
        Command::GradCheck(a) => grad_check(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
