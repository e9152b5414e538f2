use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use reconfig_core::checkpoint::{self, Checkpoint, CheckpointError};
use reconfig_core::expert::{generate_dataset, read_dataset, write_dataset, ExpertError, WalkOptions};
use reconfig_core::lattice::{validate, Action, Bounds, Configuration, LatticeError, Violation};
use reconfig_core::orchestrator::{
    execute_plan, export_scene, export_trace, import_trace, plan_reconfiguration, OrchestratorError, PipelineOptions,
};
use reconfig_core::planner::{
    plan, train, Hyperparameters, PlanError, PlanOptions, PlanSource, Problem, StartDistribution, TrainOptions,
};
use reconfig_core::{Error as CoreError, FORMAT_VERSION};

#[derive(Parser)]
#[command(
    name = "reconfig",
    version,
    about = "Lattice spacecraft self-reconfiguration planner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate expert demonstrations by reversing random walks from the target.
    GenExpert(GenExpertArgs),
    /// Imitation warm start plus asynchronous actor-critic training.
    Train(TrainArgs),
    /// Plan a module move sequence.
    Plan(PlanArgs),
    /// Plan, route the arm and write a replay trace.
    Simulate(SimulateArgs),
    /// Write a configuration as a scene (JSON plus optional OBJ mesh).
    Export(ExportArgs),
    /// Audit a configuration file, or a trace with --trace.
    Check(CheckArgs),
}

#[derive(Args)]
struct GenExpertArgs {
    #[arg(long)]
    target: PathBuf,
    /// Start configuration; widens the box walks must stay in.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    count: usize,
    /// Longest walk length.
    #[arg(long, default_value_t = 24)]
    max_steps: usize,
    /// Free cells kept around the shapes; walks stay inside this box.
    #[arg(long, default_value_t = 1)]
    margin: i32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Expert dataset from gen-expert.
    #[arg(long)]
    expert: PathBuf,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    #[arg(long, default_value_t = 100_000)]
    total_steps: u64,
    /// Rollout length per episode.
    #[arg(long, default_value_t = 24)]
    max_steps: usize,
    /// Random legal moves applied to the start of each episode.
    #[arg(long, default_value_t = 2)]
    perturb: usize,
    #[arg(long, default_value_t = 1)]
    margin: i32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    budget_seconds: Option<f64>,
    /// Per-episode metrics CSV.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlanFlags {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Trained network; without it the planner searches directly.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 24)]
    max_steps: usize,
    #[arg(long)]
    budget_seconds: Option<f64>,
    /// Fail instead of searching when the policy does not reach the target.
    #[arg(long)]
    no_fallback: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    flags: PlanFlags,
    /// Plan JSON; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    flags: PlanFlags,
    /// Trace output (JSON lines).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    mesh: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, required_unless_present = "trace")]
    config: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
}

/// Failure classes that map to exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Failure {
    NoPlan = 2,
    InvalidInput = 3,
    Budget = 4,
}

#[derive(Debug)]
struct Tagged(Failure, String);

impl std::error::Error for Tagged {}

impl std::fmt::Display for Tagged {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

fn plan_failure(e: &PlanError) -> Option<Failure> {
    match e {
        PlanError::NoPlan { .. } => Some(Failure::NoPlan),
        PlanError::BudgetExceeded { .. } => Some(Failure::Budget),
        PlanError::Lattice(_) | PlanError::Encode(_) | PlanError::Dimension(_) => Some(Failure::InvalidInput),
        PlanError::InvalidHyperparameter(_) | PlanError::EmptyDataset => Some(Failure::InvalidInput),
        _ => None,
    }
}

fn classify(err: &anyhow::Error) -> Option<Failure> {
    for cause in err.chain() {
        if let Some(t) = cause.downcast_ref::<Tagged>() {
            return Some(t.0);
        }
        if let Some(e) = cause.downcast_ref::<PlanError>() {
            return plan_failure(e);
        }
        if let Some(e) = cause.downcast_ref::<OrchestratorError>() {
            return match e {
                OrchestratorError::Plan(p) => plan_failure(p),
                OrchestratorError::UnreachablePick { .. } | OrchestratorError::NoBase => Some(Failure::NoPlan),
                OrchestratorError::Invalid(_) | OrchestratorError::Lattice(_) | OrchestratorError::InvalidTrace(_) => {
                    Some(Failure::InvalidInput)
                }
                OrchestratorError::Json(_) => Some(Failure::InvalidInput),
                _ => None,
            };
        }
        if cause.is::<Violation>() || cause.is::<LatticeError>() || cause.is::<ExpertError>() {
            return Some(Failure::InvalidInput);
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return match e {
                CoreError::Io(_) => None,
                _ => Some(Failure::InvalidInput),
            };
        }
        if let Some(e) = cause.downcast_ref::<CheckpointError>() {
            return match e {
                CheckpointError::Io(_) => None,
                _ => Some(Failure::InvalidInput),
            };
        }
    }
    None
}

fn load_config(path: &Path) -> Result<Configuration> {
    let c = Configuration::load(path).with_context(|| format!("reading {}", path.display()))?;
    validate(&c).with_context(|| format!("{} is not a valid configuration", path.display()))?;
    Ok(c)
}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Tagged(Failure::InvalidInput, msg.into()).into()
}

fn budget(seconds: Option<f64>) -> Result<Option<Duration>> {
    match seconds {
        None => Ok(None),
        Some(s) if s.is_finite() && s > 0.0 => Ok(Some(Duration::from_secs_f64(s))),
        Some(s) => Err(invalid(format!("--budget-seconds must be positive, got {s}"))),
    }
}

fn same_ids(start: &Configuration, target: &Configuration) -> Result<()> {
    if start.ids().ne(target.ids()) || start.anchor_id != target.anchor_id {
        return Err(invalid("start and target must share module ids and anchor"));
    }
    Ok(())
}

fn gen_expert(a: GenExpertArgs) -> Result<()> {
    let target = load_config(&a.target)?;
    let mut shapes = vec![&target];
    let start = a.config.as_deref().map(load_config).transpose()?;
    shapes.extend(start.as_ref());
    if a.margin < 0 {
        return Err(invalid("--margin must be non-negative"));
    }
    let opts = WalkOptions {
        bounds: Some(Bounds::covering(&shapes, a.margin)),
        ..WalkOptions::default()
    };
    let data = generate_dataset(&target, a.count, 1..=a.max_steps, a.seed, &opts)?;
    write_dataset(&a.out, &data)?;
    let pairs: usize = data.iter().map(|t| t.len()).sum();
    println!(
        "wrote {} trajectories ({pairs} pairs) to {}",
        data.len(),
        a.out.display()
    );
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let start = load_config(&a.config)?;
    let target = load_config(&a.target)?;
    same_ids(&start, &target)?;
    let expert = read_dataset(&a.expert).with_context(|| format!("reading {}", a.expert.display()))?;
    let problem = Problem::new(&target, &[&start], a.margin);
    let hyper = Hyperparameters {
        workers: a.workers,
        total_steps: a.total_steps,
        t_max: a.max_steps,
        ..Hyperparameters::desk()
    };
    let opts = TrainOptions {
        metrics_path: a.metrics.clone(),
        budget: budget(a.budget_seconds)?,
        ..TrainOptions::default()
    };
    let starts = StartDistribution {
        base: start,
        max_perturb: a.perturb,
    };
    let began = Instant::now();
    let outcome = train(&problem, &starts, &expert, &hyper, a.seed, &opts)?;
    checkpoint::save(
        &a.out,
        &Checkpoint {
            net: outcome.net,
            discriminator: Some(outcome.discriminator),
            bounds: Some(problem.bounds),
        },
    )?;
    let tail: Vec<_> = outcome.metrics.iter().rev().take(10).collect();
    let mean = if tail.is_empty() {
        f64::NAN
    } else {
        tail.iter().map(|m| m.final_mismatch as f64).sum::<f64>() / tail.len() as f64
    };
    println!(
        "{} steps, {} episodes in {:.1}s; final-10 mean mismatch {mean:.2}; checkpoint {}",
        outcome.global_steps,
        outcome.metrics.len(),
        began.elapsed().as_secs_f64(),
        a.out.display()
    );
    if !outcome.completed {
        return Err(Tagged(
            Failure::Budget,
            "training budget exceeded; partial checkpoint written".into(),
        )
        .into());
    }
    Ok(())
}

/// Problem for a trained checkpoint: the stored box, provided the start
/// fits in it.
fn checkpoint_problem(ck: &Checkpoint, start: &Configuration, target: &Configuration) -> Result<Option<Problem>> {
    let Some(bounds) = ck.bounds else {
        return Err(invalid("checkpoint carries no encoding box"));
    };
    let mut problem = Problem::new(target, &[], 0);
    problem.bounds = bounds;
    if !bounds.contains_config(start) || !bounds.contains_config(target) {
        eprintln!("start or target lies outside the trained box; planning by search");
        return Ok(None);
    }
    if problem.input_len() != ck.net.input_len() || problem.n_actions() != ck.net.n_actions {
        return Err(invalid("checkpoint does not match this target"));
    }
    Ok(Some(problem))
}

struct Loaded {
    start: Configuration,
    target: Configuration,
    checkpoint: Option<Checkpoint>,
    opts: PipelineOptions,
}

fn load_plan_inputs(f: &PlanFlags) -> Result<Loaded> {
    let start = load_config(&f.config)?;
    let target = load_config(&f.target)?;
    same_ids(&start, &target)?;
    let checkpoint = f
        .checkpoint
        .as_deref()
        .map(|p| checkpoint::load(p).with_context(|| format!("reading {}", p.display())))
        .transpose()?;
    let mut opts = PipelineOptions {
        plan: PlanOptions {
            max_steps: f.max_steps,
            fallback: !f.no_fallback,
            ..PlanOptions::default()
        },
        ..PipelineOptions::default()
    };
    opts.plan.search.deadline = budget(f.budget_seconds)?.map(|d| Instant::now() + d);
    Ok(Loaded {
        start,
        target,
        checkpoint,
        opts,
    })
}

#[derive(Serialize)]
struct PlanFile<'a> {
    format_version: u32,
    source: PlanSource,
    policy_mismatch: Option<usize>,
    actions: &'a [Action],
}

fn plan_cmd(a: PlanArgs) -> Result<()> {
    let l = load_plan_inputs(&a.flags)?;
    let problem = match &l.checkpoint {
        Some(ck) => checkpoint_problem(ck, &l.start, &l.target)?,
        None => None,
    };
    let p = match (&l.checkpoint, problem) {
        (Some(ck), Some(problem)) => plan(Some(&ck.net), &problem, &l.start, &l.opts.plan)?,
        _ => plan(
            None,
            &Problem::new(&l.target, &[&l.start], l.opts.margin),
            &l.start,
            &l.opts.plan,
        )?,
    };
    let file = PlanFile {
        format_version: FORMAT_VERSION,
        source: p.source,
        policy_mismatch: p.policy_mismatch,
        actions: &p.actions,
    };
    let text = serde_json::to_string_pretty(&file)?;
    match &a.out {
        Some(path) => {
            std::fs::write(path, text + "\n")?;
            eprintln!(
                "{} actions ({:?}) written to {}",
                p.actions.len(),
                p.source,
                path.display()
            );
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let l = load_plan_inputs(&a.flags)?;
    let problem = match &l.checkpoint {
        Some(ck) => checkpoint_problem(ck, &l.start, &l.target)?,
        None => None,
    };
    let policy = match (&l.checkpoint, &problem) {
        (Some(ck), Some(problem)) => Some((&ck.net, problem)),
        _ => None,
    };
    let recon = plan_reconfiguration(&l.start, &l.target, policy, &l.opts)?;
    if recon.plan.source == PlanSource::Search && l.checkpoint.is_some() {
        eprintln!("note: policy did not reach the target; plan comes from search");
    }
    let trace = execute_plan(&l.start, &l.target, &recon, a.flags.seed, &l.opts)?;
    export_trace(&trace, &a.out)?;
    println!(
        "{} moves ({:?}), {} frames, {:.2}s simulated; trace {}",
        recon.steps.len(),
        recon.plan.source,
        trace.frames.len(),
        trace.frames.last().map_or(0.0, |f| f.t),
        a.out.display()
    );
    Ok(())
}

fn export(a: ExportArgs) -> Result<()> {
    let c = load_config(&a.config)?;
    export_scene(&c, &a.out, a.mesh.as_deref())?;
    println!(
        "scene {}{}",
        a.out.display(),
        a.mesh.map(|m| format!(", mesh {}", m.display())).unwrap_or_default()
    );
    Ok(())
}

fn check(a: CheckArgs) -> Result<()> {
    if let Some(path) = &a.config {
        let c = Configuration::load(path).with_context(|| format!("reading {}", path.display()))?;
        match validate(&c) {
            Ok(()) => println!("{}: valid, {} modules, anchor {}", path.display(), c.len(), c.anchor_id),
            Err(v) => bail!(Tagged(Failure::InvalidInput, format!("{}: {v}", path.display()))),
        }
    }
    if let Some(path) = &a.trace {
        let trace = import_trace(path)?;
        trace.validate()?;
        println!("{}: valid, {} frames", path.display(), trace.frames.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenExpert(a) => gen_expert(a),
        Command::Train(a) => train_cmd(a),
        Command::Plan(a) => plan_cmd(a),
        Command::Simulate(a) => simulate(a),
        Command::Export(a) => export(a),
        Command::Check(a) => check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(classify(&e).map_or(1, |f| f as u8))
        }
    }
}
