//! Parallel parameter sweeps over (gamma_ali, gamma_att) grids.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ParamError;
use crate::metrics::{segment_stats, SegmentStats};
use crate::scenario::{run_scenario, IntruderPolicy, RunOptions, ScenarioSpec, SimSetup};
use crate::trajio::format_float;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub ali_values: Vec<f64>,
    pub att_values: Vec<f64>,
    pub n_drones: usize,
    pub runs_per_cell: usize,
    pub run_duration: f64,
    pub base_seed: u64,
    pub workers: usize,
    /// Seconds dropped at the start of every run.
    pub transient_cut: f64,
    /// Rate at which observables are sampled, Hz.
    pub sample_rate: f64,
    /// With an intruder, statistics use only samples inside intrusion windows.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intruder: Option<IntruderPolicy>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            ali_values: crate::scenario::gain_range(0.025, 0.4, 0.025),
            att_values: vec![0.5],
            n_drones: 10,
            runs_per_cell: 10,
            run_duration: 300.0,
            base_seed: 1,
            workers: 1,
            transient_cut: 10.0,
            sample_rate: 1.0,
            intruder: None,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), ParamError> {
        if self.ali_values.is_empty() {
            return Err(ParamError::new("ali_values", "must not be empty"));
        }
        if self.att_values.is_empty() {
            return Err(ParamError::new("att_values", "must not be empty"));
        }
        if self.ali_values.iter().chain(&self.att_values).any(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err(ParamError::new("ali_values", "gains must be finite and >= 0"));
        }
        if self.runs_per_cell == 0 {
            return Err(ParamError::new("runs_per_cell", "must be at least 1"));
        }
        if self.n_drones < 2 {
            return Err(ParamError::new("n_drones", "a swarm needs at least 2 agents"));
        }
        if !(self.run_duration > self.transient_cut && self.transient_cut >= 0.0) {
            return Err(ParamError::new("run_duration", "must exceed transient_cut"));
        }
        if self.workers == 0 {
            return Err(ParamError::new("workers", "must be at least 1"));
        }
        if !(self.sample_rate > 0.0) {
            return Err(ParamError::new("sample_rate", "must be positive"));
        }
        if let Some(p) = &self.intruder {
            p.validate()?;
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.ali_values.len() * self.att_values.len()
    }

    pub fn task_count(&self) -> usize {
        self.cell_count() * self.runs_per_cell
    }
}

/// One simulation of a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Task {
    /// Row-major cell index, `gamma_att` outer and `gamma_ali` inner.
    pub cell: usize,
    pub gamma_ali: f64,
    pub gamma_att: f64,
    pub run_index: usize,
    pub seed: u64,
}

/// Seed of one run, derived only from its own coordinates.
pub fn task_seed(base_seed: u64, gamma_ali: f64, gamma_att: f64, run_index: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(base_seed.to_le_bytes());
    h.update(gamma_ali.to_bits().to_le_bytes());
    h.update(gamma_att.to_bits().to_le_bytes());
    h.update((run_index as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

pub fn expand_grid(spec: &SweepSpec) -> Vec<Task> {
    let mut tasks = Vec::with_capacity(spec.task_count());
    for (ai, &att) in spec.att_values.iter().enumerate() {
        for (li, &ali) in spec.ali_values.iter().enumerate() {
            for run_index in 0..spec.runs_per_cell {
                tasks.push(Task {
                    cell: ai * spec.ali_values.len() + li,
                    gamma_ali: ali,
                    gamma_att: att,
                    run_index,
                    seed: task_seed(spec.base_seed, ali, att, run_index),
                });
            }
        }
    }
    tasks
}

/// Statistics of one run over its post-transient window, or why it failed.
pub type RunResult = Result<SegmentStats, String>;

pub fn run_task(task: &Task, spec: &SweepSpec, setup: &SimSetup) -> RunResult {
    let scenario = ScenarioSpec::constant(
        spec.n_drones,
        spec.run_duration,
        task.gamma_ali,
        task.gamma_att,
        spec.intruder.clone(),
        task.seed,
    );
    let opts = RunOptions {
        log_rate: None,
        sample_rate: spec.sample_rate,
    };
    let out = run_scenario(&scenario, setup, &opts).map_err(|e| e.to_string())?;
    if let Some(e) = out.failure {
        return Err(e.to_string());
    }
    let (stats, _) = segment_stats(
        &out.samples,
        &scenario.schedule,
        spec.transient_cut,
        spec.n_drones,
        spec.intruder.is_some(),
    );
    stats
        .into_iter()
        .next()
        .ok_or_else(|| "no samples in the analysis window".to_string())
}

/// Aggregate of all runs of one grid cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub gamma_ali: f64,
    pub gamma_att: f64,
    /// Mean over runs of the per-run mean polarization.
    pub mean_p: f64,
    /// Pooled standard deviation of all polarization samples of the cell.
    pub std_p: f64,
    /// Mean over runs of the per-run susceptibility.
    pub chi_p: f64,
    pub mean_d: f64,
    pub std_d: f64,
    pub mean_mindist: f64,
    /// Standard deviation across runs of the per-run mean polarization.
    pub run_std_p: f64,
    pub run_count: usize,
    pub failures: Vec<(usize, String)>,
}

impl CellResult {
    pub fn is_complete_failure(&self) -> bool {
        self.run_count == 0
    }
}

fn pooled_std(parts: &[(usize, f64, f64)]) -> f64 {
    let total: usize = parts.iter().map(|p| p.0).sum();
    if total == 0 {
        return f64::NAN;
    }
    let grand = parts.iter().map(|&(n, m, _)| n as f64 * m).sum::<f64>() / total as f64;
    let ss: f64 = parts
        .iter()
        .map(|&(n, m, s)| n as f64 * (s * s + (m - grand).powi(2)))
        .sum();
    (ss / total as f64).sqrt()
}

/// Folds the runs of one cell. Runs are given in run-index order.
pub fn aggregate(gains: (f64, f64), runs: &[(usize, RunResult)]) -> CellResult {
    let ok: Vec<&SegmentStats> = runs.iter().filter_map(|(_, r)| r.as_ref().ok()).collect();
    let failures = runs
        .iter()
        .filter_map(|(i, r)| r.as_ref().err().map(|e| (*i, e.clone())))
        .collect();
    let n = ok.len();
    let avg = |f: &dyn Fn(&SegmentStats) -> f64| -> f64 {
        if n == 0 {
            f64::NAN
        } else {
            ok.iter().map(|s| f(s)).sum::<f64>() / n as f64
        }
    };
    let mean_p = avg(&|s| s.mean_p);
    let run_std_p = if n == 0 {
        f64::NAN
    } else {
        (ok.iter().map(|s| (s.mean_p - mean_p).powi(2)).sum::<f64>() / n as f64).sqrt()
    };
    CellResult {
        gamma_ali: gains.0,
        gamma_att: gains.1,
        mean_p,
        std_p: pooled_std(&ok.iter().map(|s| (s.samples, s.mean_p, s.std_p)).collect::<Vec<_>>()),
        chi_p: avg(&|s| s.chi_p),
        mean_d: avg(&|s| s.mean_d),
        std_d: pooled_std(&ok.iter().map(|s| (s.samples, s.mean_d, s.std_d)).collect::<Vec<_>>()),
        mean_mindist: avg(&|s| s.mean_mindist),
        run_std_p,
        run_count: n,
        failures,
    }
}

/// Runs every task on `spec.workers` threads and aggregates per cell, in
/// grid order. The output does not depend on the number of workers.
pub fn run_sweep(
    spec: &SweepSpec,
    setup: &SimSetup,
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> Result<Vec<CellResult>, ParamError> {
    spec.validate()?;
    setup.validate()?;
    let tasks = expand_grid(spec);
    let done = AtomicUsize::new(0);
    let total = tasks.len();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| ParamError::new("workers", e.to_string()))?;
    let results: Vec<RunResult> = pool.install(|| {
        tasks
            .par_iter()
            .map(|t| {
                let r = run_task(t, spec, setup);
                let k = done.fetch_add(1, Ordering::Relaxed) + 1;
                if let Some(cb) = progress {
                    cb(k, total);
                }
                r
            })
            .collect()
    });
    let per_cell = spec.runs_per_cell;
    Ok(tasks
        .chunks(per_cell)
        .zip(results.chunks(per_cell))
        .map(|(ts, rs)| {
            let runs: Vec<(usize, RunResult)> = ts.iter().map(|t| t.run_index).zip(rs.iter().cloned()).collect();
            aggregate((ts[0].gamma_ali, ts[0].gamma_att), &runs)
        })
        .collect())
}

pub const HEATMAP_COLUMNS: [&str; 7] = [
    "gamma_ali",
    "gamma_att",
    "mean_P",
    "mean_D",
    "chi_P",
    "mean_mindist",
    "run_count",
];

pub const TRANSECT_COLUMNS: [&str; 10] = [
    "gamma_ali",
    "gamma_att",
    "mean_P",
    "std_P",
    "mean_D",
    "std_D",
    "chi_P",
    "mean_mindist",
    "run_std_P",
    "run_count",
];

fn row(values: &[f64], run_count: usize) -> String {
    let mut s: Vec<String> = values
        .iter()
        .map(|v| if v.is_nan() { String::new() } else { format_float(*v) })
        .collect();
    s.push(run_count.to_string());
    s.join(",")
}

/// Heatmap table text. Rows follow the input order (`gamma_att` outer).
pub fn heatmap_csv(results: &[CellResult], config_hash: &str) -> String {
    let mut out = format!("# config_hash={config_hash}\n{}\n", HEATMAP_COLUMNS.join(","));
    for c in results {
        out += &row(&[c.gamma_ali, c.gamma_att, c.mean_p, c.mean_d, c.chi_p, c.mean_mindist], c.run_count);
        out.push('\n');
    }
    out
}

pub fn transect_csv(results: &[CellResult], config_hash: &str) -> String {
    let mut out = format!("# config_hash={config_hash}\n{}\n", TRANSECT_COLUMNS.join(","));
    for c in results {
        out += &row(
            &[
                c.gamma_ali,
                c.gamma_att,
                c.mean_p,
                c.std_p,
                c.mean_d,
                c.std_d,
                c.chi_p,
                c.mean_mindist,
                c.run_std_p,
            ],
            c.run_count,
        );
        out.push('\n');
    }
    out
}

/// Writes `heatmap.csv` and `transect.csv` into `dir`.
pub fn emit_tables(results: &[CellResult], dir: &Path, config_hash: &str) -> std::io::Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let heat = dir.join("heatmap.csv");
    let tran = dir.join("transect.csv");
    fs::File::create(&heat)?.write_all(heatmap_csv(results, config_hash).as_bytes())?;
    fs::File::create(&tran)?.write_all(transect_csv(results, config_hash).as_bytes())?;
    Ok((heat, tran))
}
