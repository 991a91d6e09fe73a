//! Acceptance criteria at desk scale. Prints one PASS/FAIL line per
//! criterion with its measured values and pinned tolerances, and exits with
//! a failure status when any criterion fails.

use std::time::Instant;

use freshedge_core::delay_alloc::{allocate_bandwidth, allocate_compute};
use freshedge_core::env::{EnvConfig, Environment};
use freshedge_core::lyapunov::build_subproblem;
use freshedge_core::policy::{oracle_solve_p2, FixedPolicy, JscrPolicy, Overflow, Policy, PolicyKind, SdpOnlyPolicy};
use freshedge_core::rng::stream;
use freshedge_core::sdr::{build_qcqp, relax_to_sdp, solve_relaxation};
use freshedge_core::Grid;
use freshedge_harness::metrics::MetricsRow;
use freshedge_harness::run::{build_policy, run_one, train_model, LearnedModel};
use freshedge_harness::summary::{summarize_rows, RunSummary};
use freshedge_harness::{RunId, SweepAxis, TrainPlan};
use freshedge_learn::gradcheck::check_seed;
use freshedge_learn::train::CurvePoint;
use freshedge_learn::{Algorithm, Hyperparams};
use freshedge_sdp::{SolveCertificate, SolverOptions};
use rand::Rng;
use rayon::prelude::*;

const SANDWICH_INSTANCES: u64 = 200;
const SANDWICH_TOL: f64 = 1e-6;
const SANDWICH_SECONDS: f64 = 120.0;

const ALLOC_INSTANCES: u64 = 100;
const ALLOC_TOL: f64 = 1e-6;
const ALLOC_SECONDS: f64 = 10.0;

const AOI_SLACK: f64 = 0.5;
const PLATEAU_WINDOW: usize = 200;
const PLATEAU_RATIO: f64 = 2.0;

const V_VALUES: [f64; 3] = [0.1, 1.0, 10.0];
const V_NOISE: f64 = 0.01;

const OIODRL_SHARE: f64 = 0.90;

const TRAIN_ROUNDS: usize = 100;
const TRAIN_HORIZON: usize = 64;
/// Rounds at the end of a curve that define its plateau.
const CURVE_TAIL: usize = 20;
/// Every tail point lies within this fraction of the tail mean.
const CURVE_FLAT: f64 = 0.05;
const A2C_NEAR_PPO: f64 = 0.05;

const GRAD_SEEDS: u64 = 20;
const GRAD_TOL: f64 = 1e-4;
const GRAD_SECONDS: f64 = 30.0;

const SCALES: [f64; 3] = [0.5, 1.0, 2.0];
const CAPACITY_NOISE: f64 = 0.02;

const CERT_TOL: f64 = 1e-6;
const CERT_FAILURE_RATE: f64 = 0.01;

const SEEDS: [u64; 3] = [1, 2, 3];

struct Verdict {
    id: u8,
    name: &'static str,
    pass: bool,
    detail: String,
}

impl Verdict {
    fn print(&self) {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        println!("{tag} C{} {}: {}", self.id, self.name, self.detail);
    }
}

#[derive(Default)]
struct CertTally {
    solves: usize,
    failures: usize,
}

impl CertTally {
    fn record(&mut self, cert: Option<SolveCertificate>) {
        if let Some(c) = cert {
            self.solves += 1;
            if c.duality_gap > CERT_TOL || c.primal_infeasibility > CERT_TOL {
                self.failures += 1;
            }
        }
    }

    fn failed_solve(&mut self) {
        self.solves += 1;
        self.failures += 1;
    }
}

/// Environment advanced a random number of slots under random feasible
/// decisions, so queues, ages and cache contents vary.
fn advanced_env(cfg: EnvConfig, max_slots: usize, rng: &mut impl Rng) -> Environment {
    let mut env = Environment::new(cfg).expect("valid config");
    let (users, services) = (env.config().num_users, env.config().num_services);
    for _ in 0..rng.random_range(0..=max_slots) {
        let sub = build_subproblem(&env);
        let mut z = vec![false; services];
        let mut used = 0.0;
        for j in 0..services {
            if rng.random_bool(0.5) && used + sub.sizes[j] <= sub.storage {
                z[j] = true;
                used += sub.sizes[j];
            }
        }
        let x = Grid::from_fn(users, services, |i, j| {
            z[j] && sub.tasks.is_present(i, j) && rng.random_bool(0.7)
        });
        env.step(&sub.decision(&z, &x)).expect("feasible decision");
    }
    env
}

fn sandwich(tally: &mut CertTally) -> Verdict {
    let start = Instant::now();
    let opts = SolverOptions::default();
    let mut rng = stream(101, "acceptance-sandwich");
    let (mut lower_worst, mut upper_worst) = (f64::INFINITY, f64::INFINITY);
    let mut violations = Vec::new();
    let mut unsolved = 0;
    for case in 0..SANDWICH_INSTANCES {
        let cfg = EnvConfig {
            num_users: rng.random_range(1..=4),
            num_services: rng.random_range(1..=5),
            storage_capacity: rng.random_range(4e9..20e9),
            lyapunov_v: V_VALUES[case as usize % 3],
            horizon: 64,
            rng_seed: 1000 + case,
            ..EnvConfig::default()
        };
        let fixed_set: Vec<usize> = (0..cfg.num_services.min(2)).collect();
        let env = advanced_env(cfg, 20, &mut rng);
        let sub = build_subproblem(&env);
        let (_, best) = oracle_solve_p2(&sub).expect("oracle");
        let scale = best.abs().max(1.0);
        let q = build_qcqp(&sub).expect("qcqp");
        match solve_relaxation(&q, &relax_to_sdp(&q), &opts) {
            Ok(sol) => {
                tally.record(sol.certificate);
                let m = (best - sol.objective) / scale;
                lower_worst = lower_worst.min(m);
                if m < -SANDWICH_TOL {
                    violations.push(format!(
                        "case {case}: relaxation {} above optimum {best}",
                        sol.objective
                    ));
                }
            }
            Err(_) => {
                tally.failed_solve();
                unsolved += 1;
            }
        }
        let mut heuristics: Vec<Box<dyn Policy>> = vec![
            Box::new(SdpOnlyPolicy::new(opts)),
            Box::new(JscrPolicy::new(opts)),
            Box::new(FixedPolicy::new(fixed_set, Overflow::DropLargest)),
        ];
        for h in heuristics.iter_mut() {
            match h.decide(&sub, &mut rng) {
                Ok(d) => {
                    tally.record(d.diagnostics);
                    let m = (d.value - best) / d.value.abs().max(1.0);
                    upper_worst = upper_worst.min(m);
                    if m < -SANDWICH_TOL {
                        violations.push(format!("case {case}: {} {} below optimum {best}", h.name(), d.value));
                    }
                }
                Err(e) => {
                    tally.failed_solve();
                    violations.push(format!("case {case}: {} failed: {e}", h.name()));
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Verdict {
        id: 1,
        name: "oracle-relaxation sandwich",
        pass: violations.is_empty() && secs < SANDWICH_SECONDS,
        detail: format!(
            "{SANDWICH_INSTANCES} instances (I<=4, J<=5), worst relative margin optimum-relaxation {lower_worst:.2e}, \
             heuristic-optimum {upper_worst:.2e} (tol {SANDWICH_TOL:e}), {unsolved} relaxations unsolved, \
             {secs:.1} s (limit {SANDWICH_SECONDS} s){}",
            violations
                .first()
                .map(|v| format!("; first violation {v}"))
                .unwrap_or_default()
        ),
    }
}

/// Minimizes `sum_k a_k / r_k` over positive `r` summing to `budget` with
/// equality-constrained Newton steps and backtracking.
fn newton_split(a: &[f64], budget: f64) -> Vec<f64> {
    let n = a.len();
    let top = a.iter().cloned().fold(0.0, f64::max);
    let a: Vec<f64> = a.iter().map(|v| v / top).collect();
    let obj = |r: &[f64]| a.iter().zip(r).map(|(a, r)| a / r).sum::<f64>();
    let mut r = vec![1.0 / n as f64; n];
    for _ in 0..200 {
        let g: Vec<f64> = (0..n).map(|k| -a[k] / (r[k] * r[k])).collect();
        let hinv: Vec<f64> = (0..n).map(|k| r[k].powi(3) / (2.0 * a[k])).collect();
        let nu = -hinv.iter().zip(&g).map(|(h, g)| h * g).sum::<f64>() / hinv.iter().sum::<f64>();
        let step: Vec<f64> = (0..n).map(|k| -hinv[k] * (g[k] + nu)).collect();
        let slope: f64 = g.iter().zip(&step).map(|(g, s)| g * s).sum();
        if -slope < 1e-30 {
            break;
        }
        let mut s = 1.0;
        while (0..n).any(|k| r[k] + s * step[k] <= 0.0) {
            s *= 0.5;
        }
        let f0 = obj(&r);
        loop {
            let trial: Vec<f64> = (0..n).map(|k| r[k] + s * step[k]).collect();
            if obj(&trial) <= f0 + 0.25 * s * slope || s < 1e-12 {
                r = trial;
                break;
            }
            s *= 0.5;
        }
    }
    r.iter().map(|v| v * budget).collect()
}

fn worst_split_error(weights: &[(usize, usize, f64)], closed: &Grid<f64>, budget: f64) -> f64 {
    if weights.is_empty() {
        return 0.0;
    }
    let a: Vec<f64> = weights.iter().map(|w| w.2).collect();
    let numeric = newton_split(&a, budget);
    weights
        .iter()
        .zip(&numeric)
        .map(|(&(i, j, _), &n)| (closed[(i, j)] - n).abs() / n)
        .fold(0.0, f64::max)
}

fn allocations() -> Verdict {
    let start = Instant::now();
    let mut rng = stream(202, "acceptance-allocation");
    let mut worst = 0.0f64;
    let mut locals = 0;
    for case in 0..ALLOC_INSTANCES {
        let cfg = EnvConfig {
            num_users: rng.random_range(1..=8),
            horizon: 32,
            rng_seed: 2000 + case,
            ..EnvConfig::default()
        };
        let env = advanced_env(cfg, 10, &mut rng);
        let (cfg, p, tasks) = (env.config(), env.delay_params(), env.tasks());
        let present: Vec<(usize, usize)> = (0..cfg.num_users)
            .filter_map(|i| tasks.requested(i).map(|j| (i, j)))
            .collect();
        let (up, down) = allocate_bandwidth(tasks, &p.eta_up, &p.eta_down, cfg.uplink_bw, cfg.downlink_bw);
        let w_up: Vec<_> = present
            .iter()
            .map(|&(i, j)| (i, j, tasks.up[(i, j)] / p.eta_up[i]))
            .collect();
        let w_down: Vec<_> = present
            .iter()
            .map(|&(i, j)| (i, j, tasks.down[(i, j)] / p.eta_down[i]))
            .collect();
        worst = worst.max(worst_split_error(&w_up, &up, cfg.uplink_bw));
        worst = worst.max(worst_split_error(&w_down, &down, cfg.downlink_bw));
        let mut x = Grid::filled(cfg.num_users, cfg.num_services, false);
        for &(i, j) in &present {
            x[(i, j)] = rng.random_bool(0.6);
        }
        let f = allocate_compute(tasks, &x, cfg.compute_capacity);
        let w_f: Vec<_> = present
            .iter()
            .filter(|&&(i, j)| x[(i, j)])
            .map(|&(i, j)| (i, j, tasks.cycles[(i, j)]))
            .collect();
        locals += w_f.len();
        worst = worst.max(worst_split_error(&w_f, &f, cfg.compute_capacity));
    }
    let secs = start.elapsed().as_secs_f64();
    Verdict {
        id: 2,
        name: "closed-form allocations",
        pass: worst <= ALLOC_TOL && secs < ALLOC_SECONDS,
        detail: format!(
            "{ALLOC_INSTANCES} instances ({locals} local tasks), worst relative error against a Newton minimizer \
             {worst:.2e} (tol {ALLOC_TOL:e}), {secs:.2} s (limit {ALLOC_SECONDS} s)"
        ),
    }
}

fn gradients() -> Verdict {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut errors = Vec::new();
    for seed in 0..GRAD_SEEDS {
        match check_seed(seed) {
            Ok(r) => worst = worst.max(r.worst()),
            Err(e) => errors.push(format!("seed {seed}: {e}")),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Verdict {
        id: 7,
        name: "gradient verification",
        pass: errors.is_empty() && worst <= GRAD_TOL && secs < GRAD_SECONDS,
        detail: format!(
            "PPO/A2C/DQN heads over {GRAD_SEEDS} seeds, worst relative error {worst:.2e} (tol {GRAD_TOL:e}), \
             {secs:.2} s (limit {GRAD_SECONDS} s){}",
            errors.first().map(|e| format!("; {e}")).unwrap_or_default()
        ),
    }
}

fn hyperparams(algorithm: Algorithm) -> Hyperparams {
    Hyperparams {
        algorithm,
        hidden: vec![64, 64],
        batch_size: 64,
        ..Hyperparams::default()
    }
}

struct Trained {
    algorithm: Algorithm,
    model: LearnedModel,
    curve: Vec<CurvePoint>,
    secs: f64,
}

fn train_all(base: &EnvConfig) -> Vec<Trained> {
    let plan = TrainPlan {
        rounds: TRAIN_ROUNDS,
        horizon: Some(TRAIN_HORIZON),
        eval_every: 1,
        eval_episodes: 1,
    };
    [Algorithm::Ppo, Algorithm::A2c, Algorithm::Dqn]
        .into_par_iter()
        .map(|algorithm| {
            let start = Instant::now();
            let (model, curve) = train_model(
                PolicyKind::Oiodrl,
                &hyperparams(algorithm),
                base,
                &plan,
                &SolverOptions::default(),
                |_| {},
            )
            .expect("training");
            Trained {
                algorithm,
                model,
                curve,
                secs: start.elapsed().as_secs_f64(),
            }
        })
        .collect()
}

struct Plateau {
    value: f64,
    flat: bool,
}

fn plateau(curve: &[CurvePoint]) -> Plateau {
    let evals: Vec<f64> = curve.iter().filter_map(|p| p.eval_reward).collect();
    let tail = &evals[evals.len().saturating_sub(CURVE_TAIL)..];
    let value = tail.iter().sum::<f64>() / tail.len() as f64;
    let flat = tail.len() == CURVE_TAIL && tail.iter().all(|v| (v - value).abs() <= CURVE_FLAT * value.abs());
    Plateau { value, flat }
}

fn learning(trained: &[Trained]) -> Verdict {
    let get = |a: Algorithm| plateau(&trained.iter().find(|t| t.algorithm == a).expect("trained").curve);
    let (ppo, a2c, dqn) = (get(Algorithm::Ppo), get(Algorithm::A2c), get(Algorithm::Dqn));
    let between = dqn.value <= a2c.value && a2c.value <= ppo.value;
    let near = (a2c.value - ppo.value).abs() <= A2C_NEAR_PPO * ppo.value.abs();
    let secs: Vec<String> = trained
        .iter()
        .map(|t| format!("{} {:.0} s", t.algorithm, t.secs))
        .collect();
    Verdict {
        id: 6,
        name: "learning-stage sanity",
        pass: ppo.flat && ppo.value > dqn.value && (between || near),
        detail: format!(
            "{TRAIN_ROUNDS} rounds at horizon {TRAIN_HORIZON}, plateau = mean eval reward of the last {CURVE_TAIL} rounds \
             (flat when every point is within {CURVE_FLAT}): PPO {:.6e} (flat {}), A2C {:.6e} (flat {}), \
             DQN {:.6e} (flat {}); PPO > DQN {}, A2C between {between}, A2C within {A2C_NEAR_PPO} of PPO {near}; \
             training {}",
            ppo.value,
            ppo.flat,
            a2c.value,
            a2c.flat,
            dqn.value,
            dqn.flat,
            ppo.value > dqn.value,
            secs.join(", ")
        ),
    }
}

struct Run {
    kind: PolicyKind,
    axis: SweepAxis,
    value: Option<f64>,
    seed: u64,
    rows: Vec<MetricsRow>,
    summary: Option<RunSummary>,
    aborted: Option<String>,
}

fn simulate(
    kind: PolicyKind,
    axis: SweepAxis,
    value: Option<f64>,
    seed: u64,
    base: &EnvConfig,
    model: &LearnedModel,
) -> Run {
    let mut cfg = match value {
        Some(v) => axis.apply(base, v),
        None => base.clone(),
    };
    cfg.rng_seed = seed;
    let id = RunId {
        policy: kind.clone(),
        axis,
        sweep: value,
        seed,
    };
    let solver = SolverOptions::default();
    let mut policy = build_policy(&kind, std::slice::from_ref(model), &solver).expect("policy");
    let (rows, aborted) = match run_one(&id, cfg, policy.as_mut()) {
        Ok((rows, err)) => (rows, err.map(|e| e.to_string())),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    let summary = summarize_rows(&rows).ok();
    Run {
        kind,
        axis,
        value,
        seed,
        rows,
        summary,
        aborted,
    }
}

fn find<'a>(runs: &'a [Run], kind: &PolicyKind, axis: SweepAxis, value: Option<f64>, seed: u64) -> &'a Run {
    runs.iter()
        .find(|r| &r.kind == kind && r.axis == axis && r.value == value && r.seed == seed)
        .expect("run exists")
}

fn complete(r: &Run, horizon: usize) -> Option<&RunSummary> {
    r.summary.as_ref().filter(|s| r.aborted.is_none() && s.slots == horizon)
}

/// Maxima over the middle and the last window of a trajectory.
fn windows(q: &[f64]) -> (f64, f64) {
    let mid = q.len() / 2 - PLATEAU_WINDOW / 2;
    let max = |w: &[f64]| w.iter().cloned().fold(0.0, f64::max);
    (max(&q[mid..mid + PLATEAU_WINDOW]), max(&q[q.len() - PLATEAU_WINDOW..]))
}

fn aoi_and_queues(runs: &[Run], horizon: usize) -> Verdict {
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_ratio = 0.0f64;
    let mut problems = Vec::new();
    let mut total_ratio = 0.0f64;
    for kind in [PolicyKind::Oiodrl, PolicyKind::Optimal] {
        for seed in SEEDS {
            let r = find(runs, &kind, SweepAxis::None, None, seed);
            let Some(s) = complete(r, horizon) else {
                problems.push(format!("{kind} seed {seed} incomplete"));
                continue;
            };
            let total: Vec<f64> = r.rows.iter().map(|row| row.queue.iter().sum()).collect();
            let (mid, last) = windows(&total);
            total_ratio = total_ratio.max(last / mid);
            for j in 0..s.avg_aoi.len() {
                let excess = s.avg_aoi[j] - s.aoi_max[j];
                worst_excess = worst_excess.max(excess);
                if excess > AOI_SLACK {
                    problems.push(format!(
                        "{kind} seed {seed} service {j} average age {:.3} > {:.3} + {AOI_SLACK}",
                        s.avg_aoi[j], s.aoi_max[j]
                    ));
                }
                let q: Vec<f64> = r.rows.iter().map(|row| row.queue[j]).collect();
                let (mid_max, last_max) = windows(&q);
                if last_max > 0.0 {
                    worst_ratio = worst_ratio.max(if mid_max > 0.0 {
                        last_max / mid_max
                    } else {
                        f64::INFINITY
                    });
                }
                if last_max > PLATEAU_RATIO * mid_max {
                    problems.push(format!(
                        "{kind} seed {seed} service {j} queue max {last_max:.3} late vs {mid_max:.3} mid"
                    ));
                }
            }
        }
    }
    Verdict {
        id: 3,
        name: "AoI constraint satisfaction",
        pass: problems.is_empty(),
        detail: format!(
            "OIODRL and OPTIMAL over {horizon} slots, seeds {SEEDS:?}: worst average age minus threshold {worst_excess:.3} \
             (allowed {AOI_SLACK}), worst late/middle queue max ratio {worst_ratio:.3} (allowed {PLATEAU_RATIO}, \
             windows of {PLATEAU_WINDOW} slots); same ratio for the summed backlog {total_ratio:.3}{}",
            problems.first().map(|p| format!("; first problem {p}")).unwrap_or_default()
        ),
    }
}

/// Paired-seed mean of `metric` at each sweep value, and whether it never
/// drops by more than `noise` of the previous level.
fn monotone(
    runs: &[Run],
    axis: SweepAxis,
    values: &[f64],
    horizon: usize,
    noise: f64,
    metric: impl Fn(&RunSummary) -> f64,
) -> Option<(Vec<f64>, bool)> {
    let mut means = Vec::new();
    let mut ok = true;
    for (k, &v) in values.iter().enumerate() {
        let mut level = Vec::new();
        for seed in SEEDS {
            level.push(metric(complete(
                find(runs, &PolicyKind::Optimal, axis, Some(v), seed),
                horizon,
            )?));
        }
        let mean = level.iter().sum::<f64>() / level.len() as f64;
        if k > 0 {
            let prev = means[k - 1];
            ok &= mean - prev >= -noise * f64::abs(prev);
        }
        means.push(mean);
    }
    Some((means, ok))
}

fn fmt_levels(values: &[f64], means: &[f64]) -> String {
    values
        .iter()
        .zip(means)
        .map(|(v, m)| format!("{v}: {m:.6e}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn v_tradeoff(runs: &[Run], horizon: usize) -> Verdict {
    let u = monotone(runs, SweepAxis::V, &V_VALUES, horizon, V_NOISE, |s| s.avg_utility);
    let q = monotone(runs, SweepAxis::V, &V_VALUES, horizon, V_NOISE, |s| s.avg_queue);
    let (Some((u, u_ok)), Some((q, q_ok))) = (u, q) else {
        return Verdict {
            id: 4,
            name: "V tradeoff",
            pass: false,
            detail: "a V-sweep run did not complete".into(),
        };
    };
    Verdict {
        id: 4,
        name: "V tradeoff",
        pass: u_ok && q_ok,
        detail: format!(
            "OPTIMAL, seed-mean average utility {{{}}} nondecreasing {u_ok}; average queue {{{}}} nondecreasing {q_ok} \
             (noise allowance {V_NOISE})",
            fmt_levels(&V_VALUES, &u),
            fmt_levels(&V_VALUES, &q)
        ),
    }
}

fn ordering(runs: &[Run], horizon: usize) -> Verdict {
    let fixed = PolicyKind::Fixed(vec![0, 1]);
    let mut problems = Vec::new();
    let mut shares = Vec::new();
    let (mut jscr_total, mut sdp_total) = (0.0, 0.0);
    for seed in SEEDS {
        let cum = |k: &PolicyKind| {
            complete(find(runs, k, SweepAxis::None, None, seed), horizon).map(|s| s.cumulative_utility)
        };
        let (Some(opt), Some(oio), Some(sdp), Some(fix), Some(jscr)) = (
            cum(&PolicyKind::Optimal),
            cum(&PolicyKind::Oiodrl),
            cum(&PolicyKind::SdpOnly),
            cum(&fixed),
            cum(&PolicyKind::Jscr),
        ) else {
            problems.push(format!("seed {seed}: a run did not complete"));
            continue;
        };
        if opt < oio {
            problems.push(format!("seed {seed}: OIODRL {oio:.6e} above OPTIMAL {opt:.6e}"));
        }
        if oio < sdp.max(fix) {
            problems.push(format!(
                "seed {seed}: OIODRL {oio:.6e} below max(SDP-only {sdp:.6e}, FIXED {fix:.6e})"
            ));
        }
        let share = oio / opt;
        if share < OIODRL_SHARE {
            problems.push(format!("seed {seed}: OIODRL share {share:.4}"));
        }
        shares.push(format!("{share:.4}"));
        jscr_total += jscr;
        sdp_total += sdp;
        println!(
            "     seed {seed} cumulative utility: OPTIMAL {opt:.6e}, OIODRL {oio:.6e}, JSCR {jscr:.6e}, SDP-only {sdp:.6e}, FIXED {fix:.6e}"
        );
    }
    if jscr_total < sdp_total {
        problems.push(format!("JSCR total {jscr_total:.6e} below SDP-only {sdp_total:.6e}"));
    }
    Verdict {
        id: 5,
        name: "policy ordering",
        pass: problems.is_empty(),
        detail: format!(
            "seeds {SEEDS:?}, OIODRL/OPTIMAL cumulative utility [{}] (required >= {OIODRL_SHARE}), JSCR mean {:.6e} vs \
             SDP-only mean {:.6e}{}",
            shares.join(", "),
            jscr_total / SEEDS.len() as f64,
            sdp_total / SEEDS.len() as f64,
            problems.first().map(|p| format!("; first problem {p}")).unwrap_or_default()
        ),
    }
}

fn capacity(runs: &[Run], base: &EnvConfig, horizon: usize) -> Verdict {
    let f: Vec<f64> = SCALES.iter().map(|s| s * base.compute_capacity).collect();
    let s: Vec<f64> = SCALES.iter().map(|s| s * base.storage_capacity).collect();
    let by_f = monotone(runs, SweepAxis::F, &f, horizon, CAPACITY_NOISE, |s| s.avg_utility);
    let by_sf = monotone(runs, SweepAxis::SWithProportionalF, &s, horizon, CAPACITY_NOISE, |s| {
        s.avg_utility
    });
    let (Some((fu, f_ok)), Some((su, s_ok))) = (by_f, by_sf) else {
        return Verdict {
            id: 8,
            name: "capacity trends",
            pass: false,
            detail: "a capacity-sweep run did not complete".into(),
        };
    };
    Verdict {
        id: 8,
        name: "capacity trends",
        pass: f_ok && s_ok,
        detail: format!(
            "OPTIMAL seed-mean average utility over F {{{}}} nondecreasing {f_ok}; over joint S {{{}}} with F scaled \
             alike nondecreasing {s_ok} (noise allowance {CAPACITY_NOISE})",
            fmt_levels(&f, &fu),
            fmt_levels(&s, &su)
        ),
    }
}

fn certification(tally: &CertTally, runs: &[Run]) -> Verdict {
    let (mut solves, mut failures) = (tally.solves, tally.failures);
    for r in runs.iter().filter(|r| r.axis == SweepAxis::None) {
        if let Some(s) = &r.summary {
            solves += s.sdp_solves;
            failures += s.sdp_failures;
        }
    }
    let rate = failures as f64 / solves.max(1) as f64;
    Verdict {
        id: 9,
        name: "SDP certification",
        pass: rate <= CERT_FAILURE_RATE,
        detail: format!(
            "{solves} solves in criteria 1-5, {failures} with gap or primal infeasibility above {CERT_TOL:e} or failed, \
             rate {rate:.4} (allowed {CERT_FAILURE_RATE})"
        ),
    }
}

fn main() {
    let start = Instant::now();
    let mut verdicts = Vec::new();
    let mut tally = CertTally::default();

    for v in [sandwich(&mut tally), allocations(), gradients()] {
        v.print();
        verdicts.push(v);
    }

    let base = EnvConfig::default();
    let horizon = base.horizon;
    let trained = train_all(&base);
    let v = learning(&trained);
    v.print();
    verdicts.push(v);
    let model = &trained
        .iter()
        .find(|t| t.algorithm == Algorithm::Ppo)
        .expect("ppo")
        .model;

    let mut jobs: Vec<(PolicyKind, SweepAxis, Option<f64>, u64)> = Vec::new();
    for seed in SEEDS {
        for kind in [
            PolicyKind::Optimal,
            PolicyKind::Oiodrl,
            PolicyKind::SdpOnly,
            PolicyKind::Jscr,
            PolicyKind::Fixed(vec![0, 1]),
        ] {
            jobs.push((kind, SweepAxis::None, None, seed));
        }
        for v in V_VALUES {
            jobs.push((PolicyKind::Optimal, SweepAxis::V, Some(v), seed));
        }
        for s in SCALES {
            jobs.push((PolicyKind::Optimal, SweepAxis::F, Some(s * base.compute_capacity), seed));
            jobs.push((
                PolicyKind::Optimal,
                SweepAxis::SWithProportionalF,
                Some(s * base.storage_capacity),
                seed,
            ));
        }
    }
    let runs: Vec<Run> = jobs
        .into_par_iter()
        .map(|(kind, axis, value, seed)| simulate(kind, axis, value, seed, &base, model))
        .collect();
    for r in runs.iter().filter(|r| r.aborted.is_some()) {
        println!(
            "     run {} {:?} seed {} ended early: {}",
            r.kind,
            r.value,
            r.seed,
            r.aborted.as_deref().unwrap_or("")
        );
    }

    for v in [
        aoi_and_queues(&runs, horizon),
        v_tradeoff(&runs, horizon),
        ordering(&runs, horizon),
        capacity(&runs, &base, horizon),
        certification(&tally, &runs),
    ] {
        v.print();
        verdicts.push(v);
    }

    verdicts.sort_by_key(|v| v.id);
    let passed = verdicts.iter().filter(|v| v.pass).count();
    println!("acceptance summary ({:.0} s):", start.elapsed().as_secs_f64());
    for v in &verdicts {
        v.print();
    }
    println!("{passed}/{} criteria pass", verdicts.len());
    if passed < verdicts.len() {
        std::process::exit(1);
    }
}
