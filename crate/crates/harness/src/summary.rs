//! Long-term averages of a run and their aggregation over seeds.
//!
//! A slot counts as clean when the policy decided it itself, any relaxation
//! it solved is certified at [`SDP_TOL`], and every service's edge age is at
//! most its threshold. The average-age constraint of a service is satisfied
//! when the average edge age does not exceed the threshold; equality
//! satisfies it.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::metrics::{fmt_float, read_rows_from, MetricsRow};
use crate::HarnessError;

/// Largest duality gap and primal infeasibility of a certified solve.
pub const SDP_TOL: f64 = 1e-6;

pub const RUNS_DIR: &str = "runs";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub policy: String,
    pub sweep: Option<f64>,
    pub seed: u64,
    pub slots: usize,
    pub avg_utility: f64,
    /// Cumulative utility of the last slot.
    pub cumulative_utility: f64,
    pub avg_cost: f64,
    pub avg_reward: f64,
    /// Mean over slots and services.
    pub avg_queue: f64,
    pub max_queue: f64,
    pub clean_fraction: f64,
    pub fallback_slots: usize,
    /// Slots that solved a relaxation or fell back.
    pub sdp_solves: usize,
    /// Fallbacks plus solves outside [`SDP_TOL`].
    pub sdp_failures: usize,
    pub avg_aoi: Vec<f64>,
    pub aoi_max: Vec<f64>,
    pub aoi_satisfied: bool,
}

impl RunSummary {
    pub fn failed(&self) -> bool {
        self.fallback_slots > 0 || self.sdp_failures > 0
    }
}

pub fn certified(row: &MetricsRow) -> bool {
    row.sdp_gap.is_none_or(|g| g <= SDP_TOL) && row.sdp_infeasibility.is_none_or(|p| p <= SDP_TOL)
}

/// Summary of the rows of one run.
pub fn summarize_rows(rows: &[MetricsRow]) -> Result<RunSummary, HarnessError> {
    let first = rows
        .first()
        .ok_or_else(|| HarnessError::Spec("cannot summarize a run without slots".into()))?;
    if rows
        .iter()
        .any(|r| r.policy != first.policy || r.seed != first.seed || r.aoi.len() != first.aoi.len())
    {
        return Err(HarnessError::Spec("rows mix several runs".into()));
    }
    let n = rows.len() as f64;
    let services = first.aoi.len();
    let mean = |f: &dyn Fn(&MetricsRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let mut excess = vec![0.0; services];
    let mut avg_aoi = vec![0.0; services];
    let (mut queue_sum, mut max_queue) = (0.0, 0.0f64);
    let (mut clean, mut fallbacks, mut solves, mut failures) = (0, 0, 0, 0);
    for r in rows {
        for j in 0..services {
            excess[j] += r.aoi[j] - r.aoi_max[j];
            avg_aoi[j] += r.aoi[j];
            queue_sum += r.queue[j];
            max_queue = max_queue.max(r.queue[j]);
        }
        let solved = r.sdp_gap.is_some() || r.sdp_infeasibility.is_some();
        if solved || r.fallback {
            solves += 1;
        }
        if r.fallback || !certified(r) {
            failures += 1;
        }
        fallbacks += usize::from(r.fallback);
        let within = (0..services).all(|j| r.aoi[j] <= r.aoi_max[j]);
        clean += usize::from(!r.fallback && certified(r) && within);
    }
    Ok(RunSummary {
        policy: first.policy.clone(),
        sweep: first.sweep,
        seed: first.seed,
        slots: rows.len(),
        avg_utility: mean(&|r| r.utility),
        cumulative_utility: rows[rows.len() - 1].cumulative_utility,
        avg_cost: mean(&|r| r.cost),
        avg_reward: mean(&|r| r.reward),
        avg_queue: queue_sum / (n * services.max(1) as f64),
        max_queue,
        clean_fraction: clean as f64 / n,
        fallback_slots: fallbacks,
        sdp_solves: solves,
        sdp_failures: failures,
        avg_aoi: avg_aoi.iter().map(|a| a / n).collect(),
        aoi_max: first.aoi_max.clone(),
        // summed differences are exactly zero for an age pinned at its threshold
        aoi_satisfied: excess.iter().all(|&e| e <= 0.0),
    })
}

pub fn summary_header(services: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "policy",
        "sweep",
        "seed",
        "slots",
        "avg_utility",
        "cumulative_utility",
        "avg_cost",
        "avg_reward",
        "avg_queue",
        "max_queue",
        "clean_fraction",
        "fallback_slots",
        "sdp_solves",
        "sdp_failures",
        "aoi_satisfied",
        "status",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((0..services).map(|j| format!("avg_aoi_{j}")));
    h.extend((0..services).map(|j| format!("aoi_max_{j}")));
    h
}

pub fn write_summaries(w: impl Write, runs: &[RunSummary]) -> Result<(), HarnessError> {
    let services = runs.iter().map(|r| r.avg_aoi.len()).max().unwrap_or(0);
    let mut out = csv::Writer::from_writer(w);
    out.write_record(summary_header(services))?;
    for r in runs {
        let mut rec = vec![
            r.policy.clone(),
            r.sweep.map(fmt_float).unwrap_or_default(),
            r.seed.to_string(),
            r.slots.to_string(),
            fmt_float(r.avg_utility),
            fmt_float(r.cumulative_utility),
            fmt_float(r.avg_cost),
            fmt_float(r.avg_reward),
            fmt_float(r.avg_queue),
            fmt_float(r.max_queue),
            fmt_float(r.clean_fraction),
            r.fallback_slots.to_string(),
            r.sdp_solves.to_string(),
            r.sdp_failures.to_string(),
            u8::from(r.aoi_satisfied).to_string(),
            if r.failed() { "failed" } else { "ok" }.to_string(),
        ];
        for v in [&r.avg_aoi, &r.aoi_max] {
            rec.extend((0..services).map(|j| v.get(j).map(|&x| fmt_float(x)).unwrap_or_default()));
        }
        out.write_record(rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Metrics files of an output directory in name order.
pub fn run_files(out: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(out.join(RUNS_DIR))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    files.retain(|p| p.extension().is_some_and(|e| e == "csv"));
    files.sort();
    Ok(files)
}

/// Summarizes every metrics file under `out` and writes the summary CSV.
pub fn summarize(out: &Path) -> Result<Vec<RunSummary>, HarnessError> {
    let mut runs = Vec::new();
    for path in run_files(out)? {
        let rows = read_rows_from(&path)?;
        runs.push(summarize_rows(&rows).map_err(|e| HarnessError::Malformed {
            path: path.clone(),
            message: e.to_string(),
        })?);
    }
    write_summaries(
        std::io::BufWriter::new(std::fs::File::create(out.join(SUMMARY_FILE))?),
        &runs,
    )?;
    Ok(runs)
}

/// Means over the seeds of one policy and sweep value.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySummary {
    pub policy: String,
    pub sweep: Option<f64>,
    pub runs: usize,
    pub failed_runs: usize,
    pub avg_utility: f64,
    pub cumulative_utility: f64,
    pub avg_queue: f64,
    pub max_queue: f64,
    pub clean_fraction: f64,
    pub avg_aoi: Vec<f64>,
    pub aoi_satisfied: bool,
}

/// Groups in order of first appearance.
pub fn aggregate(runs: &[RunSummary]) -> Vec<PolicySummary> {
    let mut keys: Vec<(String, Option<f64>)> = Vec::new();
    for r in runs {
        let k = (r.policy.clone(), r.sweep);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(policy, sweep)| {
            let group: Vec<&RunSummary> = runs.iter().filter(|r| r.policy == policy && r.sweep == sweep).collect();
            let n = group.len() as f64;
            let mean = |f: &dyn Fn(&RunSummary) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / n;
            let services = group[0].avg_aoi.len();
            PolicySummary {
                runs: group.len(),
                failed_runs: group.iter().filter(|r| r.failed()).count(),
                avg_utility: mean(&|r| r.avg_utility),
                cumulative_utility: mean(&|r| r.cumulative_utility),
                avg_queue: mean(&|r| r.avg_queue),
                max_queue: group.iter().map(|r| r.max_queue).fold(0.0, f64::max),
                clean_fraction: mean(&|r| r.clean_fraction),
                avg_aoi: (0..services).map(|j| mean(&|r| r.avg_aoi[j])).collect(),
                aoi_satisfied: group.iter().all(|r| r.aoi_satisfied),
                policy,
                sweep,
            }
        })
        .collect()
}
