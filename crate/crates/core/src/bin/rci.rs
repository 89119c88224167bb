use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use rci::client::{ClientSource, HttpClient, HttpConfig, MockScript, SharedClient};
use rci::grpo::{grpo_check, GrpoConfig};
use rci::harness::{eval_run, rescore, EvalSpec};
use rci::pipeline::{default_out_dir, synthesize, SynthesisPlan};
use rci::rollout::RolloutConfig;
use rci::sandbox::{ExecMode, Sandbox, SandboxConfig, ShimConfig};
use rci::tasks::{Difficulty, TaskRegistry};

#[derive(Parser)]
#[command(
    name = "rci",
    version,
    about = "Code-interpreter rollouts, task suite and GRPO checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a model on generated task instances.
    Eval(EvalArgs),
    /// Recompute a report from a transcripts file and print it.
    Rescore {
        transcripts: PathBuf,
        #[arg(long)]
        strict: bool,
    },
    /// Rejection-sample fine-tuning trajectories according to a plan file.
    Synth(SynthArgs),
    /// Task suite utilities.
    Tasks {
        #[command(subcommand)]
        command: TasksCommand,
    },
    /// Audit a JSONL file of scored trajectories.
    GrpoCheck {
        file: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        clip_eps: f64,
        #[arg(long, default_value_t = 0.001)]
        kl_coeff: f64,
    },
}

#[derive(Subcommand)]
enum TasksCommand {
    /// Print one generated instance as JSON.
    Gen {
        #[arg(long)]
        task: String,
        #[arg(long)]
        seed: u64,
        /// Difficulty knobs as a JSON object.
        #[arg(long)]
        difficulty: Option<String>,
        #[arg(long)]
        plugins: Option<PathBuf>,
    },
    /// List registered task names.
    List {
        #[arg(long)]
        plugins: Option<PathBuf>,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false, id = "backend")]
struct Backend {
    /// Chat-completions endpoint URL.
    #[arg(long)]
    endpoint: Option<String>,
    /// Mock script file (JSON array of replies or of {match, reply} rules).
    #[arg(long)]
    mock: Option<PathBuf>,
}

#[derive(Args)]
struct ModelArgs {
    #[command(flatten)]
    backend: Backend,
    /// Model name sent to the endpoint.
    #[arg(long, default_value = "default")]
    model: String,
}

#[derive(Args)]
struct SandboxArgs {
    /// Interpreter command template, e.g. "python3 {script_name}".
    #[arg(long)]
    interpreter: Option<String>,
    /// Run scripts through this resource-limiting shim.
    #[arg(long, conflicts_with = "interpreter")]
    shim: Option<String>,
    #[arg(long, default_value_t = 60, requires = "shim")]
    cpu_seconds: u64,
    #[arg(long, default_value_t = 2 << 30, requires = "shim")]
    mem_bytes: u64,
}

#[derive(Args)]
struct EvalArgs {
    /// Comma-separated task names, or `all`.
    #[arg(long)]
    tasks: String,
    #[arg(long)]
    n: u64,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    sandbox: SandboxArgs,
    #[arg(long, default_value_t = 5)]
    max_code_calls: u32,
    /// Per-script timeout in seconds.
    #[arg(long, default_value_t = 60.0)]
    exec_timeout: f64,
    #[arg(long, default_value_t = 0.6)]
    temperature: f64,
    #[arg(long, default_value_t = 12)]
    max_model_turns: u32,
    #[arg(long, default_value_t = 4)]
    parallel: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
    /// Exclude errored rows from n instead of counting them as failures.
    #[arg(long)]
    strict: bool,
    /// JSON file mapping task name to difficulty knobs.
    #[arg(long)]
    difficulty: Option<PathBuf>,
    /// JSON array of plugin task descriptors.
    #[arg(long)]
    plugins: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    plan: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    sandbox: SandboxArgs,
    /// Output directory; defaults to the plan path with an `.out` extension.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    plugins: Option<PathBuf>,
}

fn registry(plugins: Option<&Path>) -> Result<TaskRegistry> {
    let mut reg = TaskRegistry::builtin();
    if let Some(p) = plugins {
        let n = reg.load_plugins(p)?;
        tracing::info!(count = n, "loaded plugin tasks");
    }
    Ok(reg)
}

fn clients(model: &ModelArgs, temperature: f64) -> Result<(Arc<dyn ClientSource>, String)> {
    if let Some(url) = &model.backend.endpoint {
        let cfg = HttpConfig::from_env(url.clone(), model.model.clone());
        tracing::info!(%url, model = %model.model, temperature, "using HTTP endpoint");
        let source: Arc<dyn ClientSource> = Arc::new(SharedClient(Arc::new(HttpClient::new(cfg))));
        return Ok((source, format!("endpoint:{url}")));
    }
    let path = model.backend.mock.as_ref().expect("clap enforces one backend");
    let source = MockScript::load(path)?.into_source()?;
    Ok((source, format!("mock:{}", path.display())))
}

fn sandbox(args: &SandboxArgs) -> Sandbox {
    let config = match (&args.interpreter, &args.shim) {
        (Some(template), _) => SandboxConfig::with_interpreter(template),
        (None, Some(shim)) => SandboxConfig {
            mode: ExecMode::Shim(ShimConfig::python(shim.clone(), args.cpu_seconds, args.mem_bytes)),
            ..SandboxConfig::default()
        },
        (None, None) => SandboxConfig::default(),
    };
    Sandbox::new(config)
}

fn run_eval(args: &EvalArgs) -> Result<bool> {
    let reg = registry(args.plugins.as_deref())?;
    let tasks = reg.select(&args.tasks)?;
    if tasks.is_empty() {
        bail!("no tasks selected");
    }
    let difficulty: BTreeMap<String, Difficulty> = match &args.difficulty {
        Some(p) => {
            serde_json::from_str(&std::fs::read_to_string(p)?).with_context(|| format!("parsing {}", p.display()))?
        }
        None => BTreeMap::new(),
    };
    let rollout = RolloutConfig {
        max_code_calls: args.max_code_calls,
        exec_timeout: Duration::try_from_secs_f64(args.exec_timeout).context("invalid --exec-timeout")?,
        temperature: args.temperature,
        max_model_turns: args.max_model_turns,
        ..RolloutConfig::default()
    };
    let spec = EvalSpec {
        tasks,
        n_per_task: args.n,
        base_seed: args.base_seed,
        difficulty,
        rollout,
        parallel: args.parallel,
        strict: args.strict,
    };
    let (source, backend) = clients(&args.model, args.temperature)?;
    let sb = sandbox(&args.sandbox);
    let outcome = eval_run(&spec, source.as_ref(), &sb, &args.out, Some(&backend))?;
    for (task, s) in &outcome.report.per_task {
        println!(
            "{task:<18} n={:<4} success_rate={:.4} code_usage={:.3} mean_turns={:.2} errored={}",
            s.n, s.success_rate, s.code_usage_ratio, s.mean_model_turns, s.errored
        );
    }
    println!("overall {:.4}", outcome.report.overall);
    let errored = outcome.report.errored();
    if errored > 0 {
        tracing::error!(errored, "some rollouts ended on infrastructure failures");
    }
    Ok(errored == 0)
}

fn run_synth(args: &SynthArgs) -> Result<bool> {
    let reg = registry(args.plugins.as_deref())?;
    let plan = SynthesisPlan::load(&args.plan)?;
    let out = args.out.clone().unwrap_or_else(|| default_out_dir(&args.plan));
    let (source, _) = clients(&args.model, plan.temperature)?;
    let sb = sandbox(&args.sandbox);
    let report = synthesize(&plan, &reg, source.as_ref(), &sb, &out)?;
    for (task, s) in &report.per_task {
        println!(
            "{task:<18} attempted={:<5} accepted={:<5} emitted={:<4} errored={} rate={:.3}",
            s.attempted, s.accepted, s.emitted, s.errored, s.acceptance_rate
        );
    }
    if !report.flagged.is_empty() {
        println!("flagged (no correct rollouts): {}", report.flagged.join(", "));
    }
    println!("wrote {}", out.display());
    Ok(report.errors.is_empty())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Eval(args) => run_eval(&args),
        Command::Rescore { transcripts, strict } => {
            print!("{}", rescore(&transcripts, strict)?.to_json());
            Ok(true)
        }
        Command::Synth(args) => run_synth(&args),
        Command::Tasks { command } => match command {
            TasksCommand::Gen {
                task,
                seed,
                difficulty,
                plugins,
            } => {
                let reg = registry(plugins.as_deref())?;
                let d: Difficulty = match difficulty {
                    Some(s) => serde_json::from_str(&s).context("parsing --difficulty")?,
                    None => Difficulty::new(),
                };
                let inst = reg.get(&task)?.generate(seed, &d)?;
                println!("{}", serde_json::to_string(&inst)?);
                Ok(true)
            }
            TasksCommand::List { plugins } => {
                for name in registry(plugins.as_deref())?.names() {
                    println!("{name}");
                }
                Ok(true)
            }
        },
        Command::GrpoCheck {
            file,
            clip_eps,
            kl_coeff,
        } => {
            let cfg = GrpoConfig {
                clip_eps,
                kl_coeff,
                ..GrpoConfig::default()
            };
            let report = grpo_check(&file, &cfg)?;
            for w in &report.warnings {
                println!("warning: {w}");
            }
            for v in &report.violations {
                println!("FAIL {v}");
            }
            println!(
                "{} groups, {} trajectories: {}",
                report.groups,
                report.trajectories,
                if report.passed() { "pass" } else { "fail" }
            );
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
