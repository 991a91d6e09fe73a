use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use freshedge_core::policy::PolicyKind;
use freshedge_harness::run::{layout_for, train_model, write_curve, LearnedModel};
use freshedge_harness::spec::parse_sweep;
use freshedge_harness::summary::{aggregate, summarize, PolicySummary};
use freshedge_harness::{run_experiment, ExperimentSpec, LearnedSource, Settings, SweepAxis, TrainPlan};
use freshedge_sdp::SolverOptions;

/// Freshness-aware edge caching experiments.
///
/// Settings come from the defaults, then `--config`, then `FRESHEDGE_*`
/// environment variables (`FRESHEDGE_LYAPUNOV_V=10`,
/// `FRESHEDGE_LEARN_GAMMA=0.9`).
#[derive(Parser)]
#[command(name = "freshedge", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run policies over the horizon and write per-slot metrics and a summary.
    Run(RunArgs),
    /// Recompute the summary of an output directory.
    Summarize {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a learned policy and write its checkpoint and learning curve.
    Train(TrainArgs),
}

#[derive(Args)]
struct Common {
    /// `key = value` settings file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Policy to run; repeat or separate with `;` for several
    /// (oiodrl, optimal, ppo-only, sdp-only, jscr, fixed, fixed:<j,...>).
    #[arg(long, required = true, value_delimiter = ';')]
    policy: Vec<String>,
    /// `<axis>=<v1,v2,...>` with axis V, F, S or S_with_proportional_F.
    #[arg(long)]
    sweep: Option<String>,
    /// Replications; seeds are the configured seed plus 0, 1, ...
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    /// Checkpoint for the learned policy; trained first when absent.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    plan: PlanArgs,
}

#[derive(Args)]
struct PlanArgs {
    /// Update rounds when training.
    #[arg(long, default_value_t = 100)]
    rounds: usize,
    /// Episode length when training; the configured horizon when absent.
    #[arg(long)]
    train_horizon: Option<usize>,
    /// Evaluate after every this many rounds; 0 disables evaluation.
    #[arg(long, default_value_t = 1)]
    eval_every: usize,
    #[arg(long, default_value_t = 1)]
    eval_episodes: usize,
}

impl PlanArgs {
    fn plan(&self) -> TrainPlan {
        TrainPlan {
            rounds: self.rounds,
            horizon: self.train_horizon,
            eval_every: self.eval_every,
            eval_episodes: self.eval_episodes,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// oiodrl or ppo-only; the update rule is `learn.algorithm`.
    #[arg(long, default_value = "oiodrl")]
    policy: String,
    #[command(flatten)]
    plan: PlanArgs,
}

fn settings(config: Option<&PathBuf>) -> Result<Settings> {
    Settings::load(config.map(|p| p.as_path()), std::env::vars()).context("loading settings")
}

fn print_table(rows: &[PolicySummary]) {
    println!(
        "{:<14} {:>12} {:>5} {:>16} {:>16} {:>12} {:>12} {:>7} {:>7}",
        "policy", "sweep", "runs", "avg_utility", "cum_utility", "avg_queue", "max_queue", "clean", "aoi_ok"
    );
    for r in rows {
        println!(
            "{:<14} {:>12} {:>5} {:>16.8e} {:>16.8e} {:>12.4e} {:>12.4e} {:>7.3} {:>7}",
            r.policy,
            r.sweep.map(|v| format!("{v}")).unwrap_or_else(|| "-".into()),
            r.runs,
            r.avg_utility,
            r.cumulative_utility,
            r.avg_queue,
            r.max_queue,
            r.clean_fraction,
            r.aoi_satisfied
        );
    }
}

fn run(args: RunArgs) -> Result<()> {
    let s = settings(args.common.config.as_ref())?;
    let policies = args
        .policy
        .iter()
        .map(|p| p.parse::<PolicyKind>())
        .collect::<Result<Vec<_>, _>>()?;
    let mut spec = ExperimentSpec::new(s.env.clone(), policies, &args.common.out);
    spec.hp = s.hp.clone();
    spec.replications = args.seeds;
    if let Some(sw) = &args.sweep {
        let (axis, values) = parse_sweep(sw)?;
        spec.sweep = axis;
        spec.values = values;
    }
    spec.learned = match args.checkpoint {
        Some(p) => LearnedSource::Checkpoint(p),
        None => LearnedSource::Train(args.plan.plan()),
    };
    std::fs::create_dir_all(&spec.out)?;
    std::fs::write(spec.out.join("settings.conf"), s.to_kv_string())?;
    let out = run_experiment(&spec)?;
    for (id, why) in &out.aborted {
        eprintln!("run {} ended early: {why}", id.stem());
    }
    print_table(&aggregate(&out.summaries));
    if spec.sweep == SweepAxis::None {
        println!("{} runs written to {}", out.summaries.len(), spec.out.display());
    } else {
        println!(
            "{} runs over {} written to {}",
            out.summaries.len(),
            spec.sweep,
            spec.out.display()
        );
    }
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let s = settings(args.common.config.as_ref())?;
    let kind: PolicyKind = args.policy.parse()?;
    if !kind.is_learned() {
        bail!("`{kind}` is not a learned policy");
    }
    let out = &args.common.out;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("settings.conf"), s.to_kv_string())?;
    let (model, curve) = train_model(
        kind.clone(),
        &s.hp,
        &s.env,
        &args.plan.plan(),
        &SolverOptions::default(),
        |p| {
            println!(
                "round {:>4} episodes {:>5} train {:.6e} eval {} lr {:.2e} entropy {:.4}",
                p.round,
                p.episodes,
                p.train_reward,
                p.eval_reward.map(|r| format!("{r:.6e}")).unwrap_or_else(|| "-".into()),
                p.lr,
                p.entropy
            )
        },
    )?;
    debug_assert_eq!(model.layout, layout_for(&s.env));
    let stem = format!("{kind}-{}", s.hp.algorithm);
    std::fs::write(out.join(format!("{stem}.ckpt")), &model.checkpoint)?;
    write_curve(std::fs::File::create(out.join(format!("{stem}_curve.csv")))?, &curve)?;
    println!("checkpoint {}", out.join(format!("{stem}.ckpt")).display());
    let _: &LearnedModel = &model;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run(a) => run(a),
        Command::Summarize { out } => {
            let runs = summarize(&out)?;
            print_table(&aggregate(&runs));
            Ok(())
        }
        Command::Train(a) => train(a),
    }
}
