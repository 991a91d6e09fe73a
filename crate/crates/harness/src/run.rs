//! Running policies over the horizon and recording every slot.

use std::path::Path;

use freshedge_core::env::{EnvConfig, Environment};
use freshedge_core::lyapunov::build_subproblem;
use freshedge_core::policy::{FixedPolicy, JscrPolicy, OraclePolicy, Overflow, Policy, PolicyKind, SdpOnlyPolicy};
use freshedge_core::rng::stream;
use freshedge_learn::train::{fallback_decision, train, CurvePoint, TrainSchedule};
use freshedge_learn::{FeatureLayout, Hyperparams, LearnedPolicy, OiodrlAgent, PpoOnlyAgent};
use freshedge_sdp::SolverOptions;
use rayon::prelude::*;

use crate::metrics::{fmt_float, write_rows_to, MetricsRow};
use crate::spec::{ExperimentSpec, LearnedSource, RunId, TrainPlan};
use crate::summary::{summarize, RunSummary, RUNS_DIR};
use crate::HarnessError;

/// Training environments use seeds from this offset upward, away from the
/// seeds of experiment runs.
pub const TRAIN_SEED_OFFSET: u64 = 1 << 40;

pub fn layout_for(cfg: &EnvConfig) -> FeatureLayout {
    FeatureLayout {
        users: cfg.num_users,
        services: cfg.num_services,
        task_scale: cfg.task_size_range.1,
    }
}

pub fn new_agent(
    kind: &PolicyKind,
    hp: &Hyperparams,
    layout: FeatureLayout,
    solver: &SolverOptions,
) -> Result<Box<dyn LearnedPolicy + Send>, HarnessError> {
    Ok(match kind {
        PolicyKind::Oiodrl => Box::new(OiodrlAgent::new(hp.clone(), layout, *solver)?),
        PolicyKind::PpoOnly => Box::new(PpoOnlyAgent::new(hp.clone(), layout)?),
        other => return Err(HarnessError::Spec(format!("`{other}` is not a learned policy"))),
    })
}

/// Parameters of a learned policy as a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedModel {
    pub kind: PolicyKind,
    pub hp: Hyperparams,
    pub layout: FeatureLayout,
    pub checkpoint: Vec<u8>,
}

impl LearnedModel {
    pub fn from_agent(kind: PolicyKind, hp: Hyperparams, agent: &dyn LearnedPolicy) -> Result<Self, HarnessError> {
        let mut checkpoint = Vec::new();
        agent.learner().save(&mut checkpoint)?;
        Ok(Self {
            kind,
            hp,
            layout: agent.layout(),
            checkpoint,
        })
    }

    pub fn load(kind: PolicyKind, hp: Hyperparams, layout: FeatureLayout, path: &Path) -> Result<Self, HarnessError> {
        let model = Self {
            kind,
            hp,
            layout,
            checkpoint: std::fs::read(path)?,
        };
        model.instantiate(&SolverOptions::default())?;
        Ok(model)
    }

    /// A fresh agent in evaluation mode.
    pub fn instantiate(&self, solver: &SolverOptions) -> Result<Box<dyn LearnedPolicy + Send>, HarnessError> {
        let mut agent = new_agent(&self.kind, &self.hp, self.layout, solver)?;
        agent.learner_mut().load(self.checkpoint.as_slice())?;
        agent.set_training(false);
        Ok(agent)
    }
}

/// Configuration of the training episodes for `plan`.
pub fn training_config(cfg: &EnvConfig, hp: &Hyperparams, plan: &TrainPlan) -> EnvConfig {
    EnvConfig {
        horizon: plan.horizon.unwrap_or(cfg.horizon),
        rng_seed: TRAIN_SEED_OFFSET.wrapping_add(hp.rng_seed),
        ..cfg.clone()
    }
}

/// Trains a fresh agent and returns it with its learning curve.
pub fn train_model(
    kind: PolicyKind,
    hp: &Hyperparams,
    cfg: &EnvConfig,
    plan: &TrainPlan,
    solver: &SolverOptions,
    on_round: impl FnMut(&CurvePoint),
) -> Result<(LearnedModel, Vec<CurvePoint>), HarnessError> {
    let mut agent = new_agent(&kind, hp, layout_for(cfg), solver)?;
    let schedule = TrainSchedule {
        rounds: plan.rounds,
        eval_every: plan.eval_every,
        eval_episodes: plan.eval_episodes,
    };
    let curve = train(agent.as_mut(), &training_config(cfg, hp, plan), &schedule, on_round)?;
    Ok((LearnedModel::from_agent(kind, hp.clone(), agent.as_ref())?, curve))
}

pub const CURVE_COLUMNS: [&str; 9] = [
    "round",
    "episodes",
    "train_reward",
    "eval_reward",
    "actor_loss",
    "critic_loss",
    "entropy",
    "lr",
    "fallbacks",
];

pub fn write_curve(w: impl std::io::Write, curve: &[CurvePoint]) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CURVE_COLUMNS)?;
    for p in curve {
        out.write_record([
            p.round.to_string(),
            p.episodes.to_string(),
            fmt_float(p.train_reward),
            p.eval_reward.map(fmt_float).unwrap_or_default(),
            fmt_float(p.actor_loss),
            fmt_float(p.critic_loss),
            fmt_float(p.entropy),
            fmt_float(p.lr),
            p.fallbacks.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Policy instance for one run; learned kinds come from `models`.
pub fn build_policy(
    kind: &PolicyKind,
    models: &[LearnedModel],
    solver: &SolverOptions,
) -> Result<Box<dyn Policy + Send>, HarnessError> {
    Ok(match kind {
        PolicyKind::Optimal => Box::new(OraclePolicy),
        PolicyKind::SdpOnly => Box::new(SdpOnlyPolicy::new(*solver)),
        PolicyKind::Jscr => Box::new(JscrPolicy::new(*solver)),
        PolicyKind::Fixed(set) => Box::new(FixedPolicy::new(set.clone(), Overflow::DropLargest)),
        learned => {
            let model = models
                .iter()
                .find(|m| &m.kind == learned)
                .ok_or_else(|| HarnessError::Spec(format!("no trained model for `{learned}`")))?;
            model.instantiate(solver)?
        }
    })
}

/// Rows of one run, and the error that ended it early if any. A failed
/// decision does not end the run: the fixed fallback decides the slot and
/// the row records the failure.
pub fn run_one(
    id: &RunId,
    cfg: EnvConfig,
    policy: &mut dyn Policy,
) -> Result<(Vec<MetricsRow>, Option<HarnessError>), HarnessError> {
    let label = match &id.policy {
        k @ PolicyKind::Fixed(_) => k.to_string(),
        _ => policy.name().to_string(),
    };
    let mut rng = stream(cfg.rng_seed, "agent");
    let mut env = Environment::new(cfg)?;
    let mut rows = Vec::with_capacity(env.config().horizon);
    let mut cumulative = 0.0;
    while !env.is_done() {
        let t = env.slot();
        let sub = build_subproblem(&env);
        let (decided, error) = match policy.decide(&sub, &mut rng) {
            Ok(d) => (d, String::new()),
            Err(e) => {
                log::warn!("{} slot {t}: {e}; using the fixed fallback", id.stem());
                (fallback_decision(&sub)?, e.to_string())
            }
        };
        let out = match env.step(&decided.decision) {
            Ok(o) => o,
            Err(e) => return Ok((rows, Some(e.into()))),
        };
        cumulative += out.utility;
        rows.push(MetricsRow {
            t,
            policy: label.clone(),
            sweep: id.sweep,
            seed: id.seed,
            utility: out.utility,
            cost: out.cost,
            reward: -decided.value,
            cumulative_utility: cumulative,
            fallback: !error.is_empty(),
            sdp_gap: decided.diagnostics.map(|c| c.duality_gap),
            sdp_infeasibility: decided.diagnostics.map(|c| c.primal_infeasibility),
            error,
            aoi: out.aoi_es,
            queue: out.queue,
            aoi_max: env.aoi_max().to_vec(),
        });
    }
    Ok((rows, None))
}

#[derive(Debug)]
pub struct ExperimentOutput {
    pub summaries: Vec<RunSummary>,
    /// Runs that ended early, with the reason.
    pub aborted: Vec<(RunId, String)>,
    pub models: Vec<LearnedModel>,
    pub curves: Vec<Curve>,
}

pub type Curve = (PolicyKind, Vec<CurvePoint>);

/// Models for the learned policies of `spec`, trained or loaded.
pub fn prepare_models(
    spec: &ExperimentSpec,
    solver: &SolverOptions,
) -> Result<(Vec<LearnedModel>, Vec<Curve>), HarnessError> {
    let mut models = Vec::new();
    let mut curves = Vec::new();
    for kind in spec.policies.iter().filter(|k| k.is_learned()) {
        if models.iter().any(|m: &LearnedModel| &m.kind == kind) {
            continue;
        }
        match &spec.learned {
            LearnedSource::Checkpoint(path) => {
                models.push(LearnedModel::load(
                    kind.clone(),
                    spec.hp.clone(),
                    layout_for(&spec.env),
                    path,
                )?);
            }
            LearnedSource::Train(plan) => {
                let (m, curve) = train_model(kind.clone(), &spec.hp, &spec.env, plan, solver, |p| {
                    log::info!(
                        "{kind} round {} episodes {} train reward {:.6e}",
                        p.round,
                        p.episodes,
                        p.train_reward
                    )
                })?;
                models.push(m);
                curves.push((kind.clone(), curve));
            }
        }
    }
    Ok((models, curves))
}

/// Runs every combination of `spec` in parallel, writes one metrics file per
/// run under `out/runs` and then the summary.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput, HarnessError> {
    run_experiment_with(spec, &SolverOptions::default())
}

pub fn run_experiment_with(spec: &ExperimentSpec, solver: &SolverOptions) -> Result<ExperimentOutput, HarnessError> {
    spec.validate()?;
    let runs_dir = spec.out.join(RUNS_DIR);
    std::fs::create_dir_all(&runs_dir)?;
    let (models, curves) = prepare_models(spec, solver)?;
    for (kind, curve) in &curves {
        write_curve(
            std::fs::File::create(spec.out.join(format!("{kind}_curve.csv")))?,
            curve,
        )?;
    }
    let results: Vec<Result<Option<(RunId, String)>, HarnessError>> = spec
        .runs()
        .par_iter()
        .map(|id| {
            let mut policy = build_policy(&id.policy, &models, solver)?;
            let (rows, err) = run_one(id, spec.run_config(id), policy.as_mut())?;
            write_rows_to(&runs_dir.join(format!("{}.csv", id.stem())), &rows)?;
            Ok(err.map(|e| (id.clone(), e.to_string())))
        })
        .collect();
    let mut aborted = Vec::new();
    for r in results {
        if let Some(a) = r? {
            log::warn!("{} ended early: {}", a.0.stem(), a.1);
            aborted.push(a);
        }
    }
    let summaries = summarize(&spec.out)?;
    Ok(ExperimentOutput {
        summaries,
        aborted,
        models,
        curves,
    })
}
