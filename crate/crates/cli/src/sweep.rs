//! `dfrc sweep`: one design per (axis value, seed), run on a worker pool.
//!
//! Spec document:
//!
//! ```json
//! {
//!   "base": "table1.json",            // path (relative to the spec) or inline config
//!   "axis": "epsilon",                // epsilon | delta | scr | num_users | power_mean_p
//!   "values": [1e-2, 3.1622776601683794e-4, 1e-5],
//!   "seeds": [0, 1, 2],
//!   "merit": {"kind": "power-mean", "p": 1},
//!   "overrides": {"delta": 1e-6, "scr_db": -20},
//!   "options": {"eta_acc": 1e-4, "i_max": 2000}
//! }
//! ```
//!
//! `scr` values are in dB. `num_users` needs a generated base and sets the
//! total user count by adding `added_users` (indirect by default).
//!
//! Outputs:
//!
//! * `sweep.csv` — `axis,value,seed,status,f,iterations,termination,
//!   c1_ok,c2_ok,c3_ok,best_t,sinr_<k>…,sinr_sorted_<k>…,message`
//! * `summary.csv` — `axis,value,runs,feasible_runs,mean_f,median_f,
//!   mean_min_sinr,mean_max_sinr` (statistics over feasible runs)
//! * `timings.csv` — `value,seed,wall_seconds` (kept apart so the two
//!   files above are reproducible byte for byte)

use std::path::{Path, PathBuf};
use std::time::Instant;

use dfrc_core::driver::{DesignError, DesignOptions, Termination, ITERATE_TOL};
use dfrc_core::merit::MeritSpec;
use dfrc_core::scenario::config::{parse_document, read_document, ConfigDocument};
use dfrc_core::scenario::Scenario;
use log::{info, warn};
use rayon::prelude::*;
use serde::Deserialize;

use crate::output::{create_dir, fmt_f, fmt_opt, write_csv};
use crate::solve::{checked, solve_scenario, Overrides};
use crate::{CliError, SweepArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Epsilon,
    Delta,
    Scr,
    NumUsers,
    PowerMeanP,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Epsilon => "epsilon",
            Axis::Delta => "delta",
            Axis::Scr => "scr",
            Axis::NumUsers => "num_users",
            Axis::PowerMeanP => "power_mean_p",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AddedUsers {
    Direct,
    #[default]
    Indirect,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum BaseConfig {
    Path(PathBuf),
    Inline(serde_json::Value),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverrideSpec {
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub scr_db: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    pub eta_acc: f64,
    pub i_max: usize,
    pub mm_inner_steps: usize,
    pub init_restarts: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        let d = DesignOptions::default();
        Self {
            eta_acc: d.eta_acc,
            i_max: d.i_max,
            mm_inner_steps: d.mm_inner_steps,
            init_restarts: d.init_restarts,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: BaseConfig,
    pub axis: Axis,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub merit: MeritSpec,
    #[serde(default)]
    pub overrides: OverrideSpec,
    #[serde(default)]
    pub options: RunOptions,
    #[serde(default)]
    pub added_users: AddedUsers,
    #[serde(default)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Ok,
    Infeasible,
    Invalid,
    Failed,
}

impl RunStatus {
    pub fn name(self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::Infeasible => "infeasible",
            RunStatus::Invalid => "invalid",
            RunStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub value: f64,
    pub seed: u64,
    pub status: RunStatus,
    pub objective: Option<f64>,
    pub sinr: Vec<f64>,
    pub iterations: Option<usize>,
    pub termination: Option<Termination>,
    /// C1, C2, C3 satisfied at the final point (within the iterate tolerance).
    pub feasible: Option<[bool; 3]>,
    pub best_t: Option<f64>,
    pub wall_seconds: f64,
    pub message: String,
}

impl RunRecord {
    fn failed(value: f64, seed: u64, status: RunStatus, message: String) -> Self {
        Self {
            value,
            seed,
            status,
            objective: None,
            sinr: Vec::new(),
            iterations: None,
            termination: None,
            feasible: None,
            best_t: None,
            wall_seconds: 0.0,
            message,
        }
    }

    pub fn min_sinr(&self) -> Option<f64> {
        self.sinr.iter().copied().reduce(f64::min)
    }

    pub fn max_sinr(&self) -> Option<f64> {
        self.sinr.iter().copied().reduce(f64::max)
    }
}

pub fn read_spec(path: &Path) -> Result<(SweepSpec, ConfigDocument), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Spec(format!("{}: {e}", path.display())))?;
    let spec: SweepSpec = serde_json::from_str(&text).map_err(|e| CliError::Spec(e.to_string()))?;
    if spec.values.is_empty() || spec.seeds.is_empty() {
        return Err(CliError::Spec("`values` and `seeds` must be non-empty".into()));
    }
    if !(spec.options.eta_acc > 0.0) || spec.options.i_max == 0 {
        return Err(CliError::Spec("options: eta_acc must be positive and i_max at least 1".into()));
    }
    let doc = match &spec.base {
        BaseConfig::Path(p) => {
            let p = if p.is_relative() {
                path.parent().unwrap_or(Path::new(".")).join(p)
            } else {
                p.clone()
            };
            read_document(&p)?
        }
        BaseConfig::Inline(v) => parse_document(&v.to_string())?,
    };
    if spec.axis == Axis::NumUsers && doc.generator().is_none() {
        return Err(CliError::Spec("axis `num_users` needs a generated base config".into()));
    }
    Ok((spec, doc))
}

fn instance(spec: &SweepSpec, doc: &ConfigDocument, value: f64, seed: u64) -> Result<Scenario, CliError> {
    let mut s = match (spec.axis, doc.generator()) {
        (Axis::NumUsers, Some(g)) => {
            if value < 0.0 || value.fract() != 0.0 {
                return Err(CliError::Spec(format!("num_users value {value} is not a count")));
            }
            let total = value as usize;
            let mut g = g.clone();
            match spec.added_users {
                AddedUsers::Indirect => {
                    g.num_indirect_users = total.checked_sub(g.num_direct_users).ok_or_else(|| {
                        CliError::Spec(format!("{total} users is fewer than the {} direct ones", g.num_direct_users))
                    })?
                }
                AddedUsers::Direct => {
                    g.num_direct_users = total.checked_sub(g.num_indirect_users).ok_or_else(|| {
                        CliError::Spec(format!("{total} users is fewer than the {} indirect ones", g.num_indirect_users))
                    })?
                }
            }
            g.instantiate(seed)
        }
        _ => doc.build(Some(seed))?,
    };
    let o = &spec.overrides;
    let mut ov = Overrides {
        epsilon: o.epsilon,
        delta: o.delta,
        scr_db: o.scr_db,
    };
    match spec.axis {
        Axis::Epsilon => ov.epsilon = Some(value),
        Axis::Delta => ov.delta = Some(value),
        Axis::Scr => ov.scr_db = Some(value),
        Axis::NumUsers | Axis::PowerMeanP => {}
    }
    ov.apply(&mut s);
    Ok(checked(s)?)
}

pub fn run_one(spec: &SweepSpec, doc: &ConfigDocument, value: f64, seed: u64) -> RunRecord {
    let started = Instant::now();
    let s = match instance(spec, doc, value, seed) {
        Ok(s) => s,
        Err(e) => return RunRecord::failed(value, seed, RunStatus::Invalid, e.to_string()),
    };
    let merit = match spec.axis {
        Axis::PowerMeanP => MeritSpec::PowerMean { p: value, weights: None },
        _ => spec.merit.clone(),
    };
    let opts = DesignOptions {
        eta_acc: spec.options.eta_acc,
        i_max: spec.options.i_max,
        mm_inner_steps: spec.options.mm_inner_steps,
        init_restarts: spec.options.init_restarts,
        rng_seed: seed,
        ..DesignOptions::default()
    };
    let mut rec = match solve_scenario(&s, &merit, &opts) {
        Ok(r) => {
            let last = r.trace.last().expect("non-empty trace");
            let sl = last.slacks;
            RunRecord {
                value,
                seed,
                status: RunStatus::Ok,
                objective: Some(last.objective),
                sinr: last.sinr.clone(),
                iterations: Some(r.iterations),
                termination: Some(r.termination),
                feasible: Some([sl.power >= -ITERATE_TOL, sl.beampattern >= -ITERATE_TOL, sl.snr >= -ITERATE_TOL]),
                best_t: None,
                wall_seconds: 0.0,
                message: String::new(),
            }
        }
        Err(CliError::Design(DesignError::InfeasibleStart(rep))) => {
            let mut r = RunRecord::failed(value, seed, RunStatus::Infeasible, "no feasible starting point".into());
            r.best_t = Some(rep.best_t);
            r
        }
        Err(e @ CliError::Merit(_)) => RunRecord::failed(value, seed, RunStatus::Invalid, e.to_string()),
        Err(e) => RunRecord::failed(value, seed, RunStatus::Failed, e.to_string()),
    };
    rec.wall_seconds = started.elapsed().as_secs_f64();
    info!("{}={} seed {}: {}", spec.axis.name(), value, seed, rec.status.name());
    rec
}

pub fn run_sweep(spec: &SweepSpec, doc: &ConfigDocument, workers: Option<usize>) -> Result<Vec<RunRecord>, CliError> {
    let jobs: Vec<(f64, u64)> = spec
        .values
        .iter()
        .flat_map(|&v| spec.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers.or(spec.workers) {
        pool = pool.num_threads(n.max(1));
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Spec(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| jobs.par_iter().map(|&(v, s)| run_one(spec, doc, v, s)).collect()))
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Per-value statistics over the feasible runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub value: f64,
    pub runs: usize,
    pub feasible_runs: usize,
    pub mean_f: f64,
    pub median_f: f64,
    pub mean_min_sinr: f64,
    pub mean_max_sinr: f64,
}

pub fn summarize(values: &[f64], records: &[RunRecord]) -> Vec<SummaryRow> {
    values
        .iter()
        .map(|&v| {
            let rs: Vec<&RunRecord> = records.iter().filter(|r| r.value == v).collect();
            let ok: Vec<&RunRecord> = rs.iter().copied().filter(|r| r.status == RunStatus::Ok).collect();
            let mut f: Vec<f64> = ok.iter().filter_map(|r| r.objective).collect();
            let mins: Vec<f64> = ok.iter().filter_map(|r| r.min_sinr()).collect();
            let maxs: Vec<f64> = ok.iter().filter_map(|r| r.max_sinr()).collect();
            SummaryRow {
                value: v,
                runs: rs.len(),
                feasible_runs: ok.len(),
                mean_f: mean(&f),
                median_f: median(&mut f),
                mean_min_sinr: mean(&mins),
                mean_max_sinr: mean(&maxs),
            }
        })
        .collect()
}

pub fn sweep_header(k: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "axis", "value", "seed", "status", "f", "iterations", "termination", "c1_ok", "c2_ok", "c3_ok", "best_t",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((0..k).map(|i| format!("sinr_{i}")));
    h.extend((0..k).map(|i| format!("sinr_sorted_{i}")));
    h.push("message".into());
    h
}

pub fn sweep_row(axis: Axis, k: usize, r: &RunRecord) -> Vec<String> {
    let flag = |i: usize| r.feasible.map_or(String::new(), |f| f[i].to_string());
    let mut row = vec![
        axis.name().to_string(),
        fmt_f(r.value),
        r.seed.to_string(),
        r.status.name().to_string(),
        fmt_opt(r.objective),
        r.iterations.map_or(String::new(), |i| i.to_string()),
        r.termination.map_or(String::new(), |t| match t {
            Termination::Converged => "converged".into(),
            Termination::IterationCap => "iteration-cap".into(),
        }),
        flag(0),
        flag(1),
        flag(2),
        fmt_opt(r.best_t),
    ];
    let mut sorted = r.sinr.clone();
    sorted.sort_by(f64::total_cmp);
    for v in [&r.sinr, &sorted] {
        row.extend((0..k).map(|i| fmt_opt(v.get(i).copied())));
    }
    row.push(r.message.clone());
    row
}

pub fn write_sweep(dir: &Path, spec: &SweepSpec, k: usize, records: &[RunRecord]) -> Result<(), CliError> {
    create_dir(dir)?;
    let rows: Vec<Vec<String>> = records.iter().map(|r| sweep_row(spec.axis, k, r)).collect();
    write_csv(&dir.join("sweep.csv"), &sweep_header(k), &rows)?;

    let header: Vec<String> = [
        "axis", "value", "runs", "feasible_runs", "mean_f", "median_f", "mean_min_sinr", "mean_max_sinr",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let rows: Vec<Vec<String>> = summarize(&spec.values, records)
        .iter()
        .map(|s| {
            vec![
                spec.axis.name().to_string(),
                fmt_f(s.value),
                s.runs.to_string(),
                s.feasible_runs.to_string(),
                fmt_f(s.mean_f),
                fmt_f(s.median_f),
                fmt_f(s.mean_min_sinr),
                fmt_f(s.mean_max_sinr),
            ]
        })
        .collect();
    write_csv(&dir.join("summary.csv"), &header, &rows)?;

    let header: Vec<String> = ["value", "seed", "wall_seconds"].iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| vec![fmt_f(r.value), r.seed.to_string(), format!("{:.3}", r.wall_seconds)])
        .collect();
    write_csv(&dir.join("timings.csv"), &header, &rows)
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<(), CliError> {
    let (spec, doc) = read_spec(&a.spec)?;
    let records = run_sweep(&spec, &doc, a.workers)?;
    // Column count from the base instance (K is not a sweep axis).
    let k = doc.build(Some(spec.seeds[0]))?.num_subcarriers();
    write_sweep(&a.out, &spec, k, &records)?;
    let failed = records.iter().filter(|r| r.status != RunStatus::Ok).count();
    if failed > 0 {
        warn!("{failed} of {} runs did not produce a design", records.len());
    }
    println!("{} runs written to {}", records.len(), a.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_mean() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&mut []).is_nan());
        assert_eq!(mean(&[1.0, 2.0, 6.0]), 3.0);
    }

    #[test]
    fn summary_ignores_failed_runs() {
        let ok = |v: f64, f: f64| RunRecord {
            value: v,
            seed: 0,
            status: RunStatus::Ok,
            objective: Some(f),
            sinr: vec![f, 2.0 * f],
            iterations: Some(3),
            termination: Some(Termination::Converged),
            feasible: Some([true; 3]),
            best_t: None,
            wall_seconds: 0.0,
            message: String::new(),
        };
        let recs = vec![
            ok(1.0, 1.0),
            ok(1.0, 3.0),
            RunRecord::failed(1.0, 2, RunStatus::Infeasible, String::new()),
            RunRecord::failed(2.0, 0, RunStatus::Infeasible, String::new()),
        ];
        let s = summarize(&[1.0, 2.0], &recs);
        assert_eq!((s[0].runs, s[0].feasible_runs), (3, 2));
        assert_eq!(s[0].median_f, 2.0);
        assert_eq!(s[0].mean_max_sinr, 4.0);
        assert_eq!(s[1].feasible_runs, 0);
        assert!(s[1].median_f.is_nan());
    }

    #[test]
    fn sweep_rows_have_fixed_width() {
        let r = RunRecord::failed(1e-5, 4, RunStatus::Infeasible, "no start".into());
        assert_eq!(sweep_row(Axis::Epsilon, 4, &r).len(), sweep_header(4).len());
    }
}
