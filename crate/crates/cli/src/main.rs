use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bdqn::agents::{agent_from_checkpoint, Algorithm};
use bdqn::checkpoint::Checkpoint;
use bdqn::harness::{self, evaluate, ExperimentConfig, GreedyPolicy, LearningCurve};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Bayesian exploration benchmark for dialogue Q-learning.
#[derive(Parser)]
#[command(name = "bdqn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON). Defaults apply to anything it omits.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
    /// Semantic error rate while training.
    #[arg(long, global = true)]
    train_error: Option<f64>,
    /// Semantic error rate while evaluating.
    #[arg(long, global = true)]
    eval_error: Option<f64>,
    /// Training dialogues per run.
    #[arg(long, global = true)]
    budget: Option<usize>,
    /// Log progress at info level (debug with -vv).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent on one seed.
    Train {
        #[arg(long)]
        agent: Algorithm,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Train every configured agent on every configured seed.
    Bench {
        /// Restrict to these agents (repeatable).
        #[arg(long)]
        agent: Vec<Algorithm>,
        /// Replace the configured seeds (repeatable).
        #[arg(long)]
        seed: Vec<u64>,
    },
    /// Re-evaluate a saved checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Dialogues to evaluate; defaults to the config's evaluation size.
        #[arg(long)]
        dialogues: Option<usize>,
    },
    /// Rebuild mean curves from the per-seed curves under --out.
    Aggregate,
    /// Rank the mean curves under --out and write report.md.
    Compare,
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(e) = c.train_error {
        cfg.train_error = e;
    }
    if let Some(e) = c.eval_error {
        cfg.eval_error = e;
    }
    if let Some(b) = c.budget {
        cfg.budget = b;
        // largest divisor of the budget not above the configured cadence
        cfg.cadence = (1..=cfg.cadence.min(b)).rev().find(|c| b % c == 0).unwrap_or(1);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_curve(points: &[harness::EvalPoint]) {
    println!("{:>10} {:>8} {:>8}", "dialogues", "success", "reward");
    for p in points {
        println!("{:>10} {:>8.3} {:>8.2}", p.dialogues, p.success_rate, p.mean_reward);
    }
}

fn summarise(curves: &[LearningCurve]) {
    for c in curves {
        let last = c.len() - 1;
        println!(
            "{:<18} final success {:.3} ± {:.3} over {} seed(s)",
            c.agent,
            c.mean_success()[last],
            c.stderr_success()[last],
            c.seeds.len()
        );
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let out: &Path = &cli.common.out;
    match cli.command {
        Command::Train { agent, seed } => {
            let cfg = load_config(&cli.common)?;
            let run = harness::train_run(&cfg, agent, seed, Some(out))?;
            print_curve(&run.curve.points);
            println!("wrote {}", harness::curve_path(out, agent.tag(), seed).display());
        }
        Command::Bench { agent, seed } => {
            let mut cfg = load_config(&cli.common)?;
            if !agent.is_empty() {
                cfg.agents = agent;
            }
            if !seed.is_empty() {
                cfg.seeds = seed;
            }
            let outcome = harness::run_experiment(&cfg, out)?;
            summarise(&outcome.curves);
            println!("wrote {}", out.join("report.md").display());
            if !outcome.failures.is_empty() {
                for (a, s, e) in &outcome.failures {
                    eprintln!("run {a} seed {s} failed: {e}");
                }
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Eval {
            checkpoint,
            seed,
            dialogues,
        } => {
            let cfg = load_config(&cli.common)?;
            let ck = Checkpoint::load(&checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
            let agent = agent_from_checkpoint(&ck)?;
            let n = dialogues.unwrap_or(cfg.eval_dialogues);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = evaluate(&mut GreedyPolicy(agent.as_ref()), &cfg.env_config(cfg.eval_error), n, &mut rng)?;
            println!(
                "{} after {} dialogues, error rate {}: success {:.3}, mean reward {:.2} over {n} dialogues",
                agent.algorithm(),
                agent.episodes(),
                cfg.eval_error,
                r.success_rate,
                r.mean_reward
            );
        }
        Command::Aggregate => {
            let curves = harness::aggregate_dir(out)?;
            summarise(&curves);
        }
        Command::Compare => {
            let cmp = harness::compare_dir(out)?;
            if cmp.ranking.is_empty() {
                bail!("no curves to compare");
            }
            print!("{}", std::fs::read_to_string(out.join("report.md"))?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
