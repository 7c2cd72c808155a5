//! Observables recomputed from trajectory logs, per-run reports, and the CSV
//! tables written next to a run.

use nalgebra::Vector3;

use crate::metrics::{
    dispersion, min_distance, polarization, recovery_time, transition_time, Direction, SegmentStats,
};
use crate::scenario::{GainSchedule, Sample, Segment};
use crate::trajio::{format_float, synchronize, tracks, LogRecord, ResampleSpec, Role, TrajError};

pub const STATS_COLUMNS: [&str; 11] = [
    "gamma_ali",
    "gamma_att",
    "mean_P",
    "std_P",
    "chi_P",
    "mean_D",
    "std_D",
    "mean_mindist",
    "window_start",
    "window_end",
    "samples",
];

pub const TIMESERIES_COLUMNS: [&str; 8] = [
    "t",
    "P",
    "D",
    "min_dist",
    "gamma_ali",
    "gamma_att",
    "intruder_distance",
    "in_window",
];

pub const TRANSITION_COLUMNS: [&str; 5] = ["t_switch", "direction", "gamma_from", "gamma_to", "transition_time"];

pub const RECOVERY_COLUMNS: [&str; 3] = ["window_open", "window_close", "recovery_time"];

fn cell(x: f64) -> String {
    if x.is_finite() {
        format_float(x)
    } else {
        String::new()
    }
}

fn opt_cell(x: Option<f64>) -> String {
    x.map(cell).unwrap_or_default()
}

fn table(config_hash: &str, columns: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = format!("# config_hash={config_hash}\n{}\n", columns.join(","));
    for r in rows {
        out += &r.join(",");
        out.push('\n');
    }
    out
}

pub fn stats_csv(stats: &[SegmentStats], config_hash: &str) -> String {
    table(
        config_hash,
        &STATS_COLUMNS,
        stats.iter().map(|s| {
            let mut r: Vec<String> = [
                s.gamma_ali,
                s.gamma_att,
                s.mean_p,
                s.std_p,
                s.chi_p,
                s.mean_d,
                s.std_d,
                s.mean_mindist,
                s.window_start,
                s.window_end,
            ]
            .into_iter()
            .map(cell)
            .collect();
            r.push(s.samples.to_string());
            r
        }),
    )
}

pub fn timeseries_csv(samples: &[Sample], config_hash: &str) -> String {
    table(
        config_hash,
        &TIMESERIES_COLUMNS,
        samples.iter().map(|s| {
            vec![
                cell(s.time),
                cell(s.polarization),
                cell(s.dispersion),
                cell(s.min_distance),
                cell(s.gamma_ali),
                cell(s.gamma_att),
                opt_cell(s.intruder_distance),
                u8::from(s.in_window).to_string(),
            ]
        }),
    )
}

/// Preprocessing applied to a log before recomputing observables.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisOptions {
    pub resample: ResampleSpec,
    /// Intruder-to-barycenter distance below which a sample counts as inside an
    /// intrusion window.
    pub window_radius: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            resample: ResampleSpec::default(),
            window_radius: 25.0,
        }
    }
}

/// Resamples every track of a log onto a common grid and evaluates the swarm
/// observables there. Velocities come from the interpolant, not from the
/// logged velocity columns. Gains are those of the latest record at or before
/// each grid time.
pub fn analyze_records(records: &[LogRecord], opts: &AnalysisOptions) -> Result<Vec<Sample>, TrajError> {
    let all = tracks(records);
    let panel = synchronize(&all, &opts.resample)?;
    let swarm: Vec<usize> = (0..panel.agents.len())
        .filter(|&a| panel.agents[a].1 == Role::Swarm)
        .collect();
    if swarm.is_empty() {
        return Err(TrajError::Preprocess("log has no swarm agents".into()));
    }
    let intruder = (0..panel.agents.len()).find(|&a| panel.agents[a].1 == Role::Intruder);

    let lead = panel.agents[swarm[0]].0;
    let mut gains: Vec<(f64, (f64, f64))> = records
        .iter()
        .filter(|r| r.agent_id == lead)
        .map(|r| (r.time, (r.gamma_ali, r.gamma_att)))
        .collect();
    gains.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut samples = Vec::with_capacity(panel.times.len());
    let mut g = 0;
    for (k, &t) in panel.times.iter().enumerate() {
        while g + 1 < gains.len() && gains[g + 1].0 <= t + 1e-9 {
            g += 1;
        }
        let positions: Vec<Vector3<f64>> = swarm.iter().map(|&a| panel.positions[a][k]).collect();
        let bary = positions.iter().sum::<Vector3<f64>>() / positions.len() as f64;
        let (p, _) = polarization(swarm.iter().map(|&a| panel.velocities[a][k]));
        let intruder_distance = intruder.map(|a| (panel.positions[a][k] - bary).norm());
        samples.push(Sample {
            time: t,
            polarization: p,
            dispersion: dispersion(positions.iter().copied()),
            min_distance: min_distance(&positions),
            gamma_ali: gains[g].1 .0,
            gamma_att: gains[g].1 .1,
            intruder_distance,
            in_window: intruder_distance.is_some_and(|d| d <= opts.window_radius),
        });
    }
    Ok(samples)
}

/// Gain schedule implied by the gains carried by consecutive samples, ending
/// at `end`.
pub fn schedule_from_samples(samples: &[Sample], end: f64) -> GainSchedule {
    let mut starts: Vec<(f64, f64, f64)> = Vec::new();
    for s in samples {
        let changed = starts
            .last()
            .is_none_or(|&(_, a, b)| (a, b) != (s.gamma_ali, s.gamma_att));
        if changed {
            starts.push((s.time, s.gamma_ali, s.gamma_att));
        }
    }
    let segments = starts
        .iter()
        .enumerate()
        .map(|(i, &(t, gamma_ali, gamma_att))| {
            let next = starts.get(i + 1).map_or(end, |n| n.0);
            Segment {
                duration: next - t,
                gamma_ali,
                gamma_att,
            }
        })
        .collect();
    GainSchedule { segments }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub t_switch: f64,
    pub direction: Direction,
    pub gamma_from: f64,
    pub gamma_to: f64,
    /// `None` when the target phase is not reached before the next switch.
    pub time: Option<f64>,
}

/// Transition time after every alignment-gain change. A raised gain is read as
/// swarm to school and a lowered one as school to swarm; the search is
/// confined to the segment that follows the change.
pub fn transitions(samples: &[Sample], schedule: &GainSchedule, n: usize) -> Vec<Transition> {
    let times: Vec<f64> = samples.iter().map(|s| s.time).collect();
    let p: Vec<f64> = samples.iter().map(|s| s.polarization).collect();
    let bounds = schedule.bounds();
    let mut out = Vec::new();
    for w in bounds.windows(2) {
        let (prev, (start, end, seg)) = (&w[0].2, (w[1].0, w[1].1, &w[1].2));
        if seg.gamma_ali == prev.gamma_ali {
            continue;
        }
        let direction = if seg.gamma_ali > prev.gamma_ali {
            Direction::SwarmToSchool
        } else {
            Direction::SchoolToSwarm
        };
        let stop = times.partition_point(|&t| t <= end + 1e-9);
        out.push(Transition {
            t_switch: start,
            direction,
            gamma_from: prev.gamma_ali,
            gamma_to: seg.gamma_ali,
            time: transition_time(&times[..stop], &p[..stop], start, direction, n),
        });
    }
    out
}

pub fn direction_name(d: Direction) -> &'static str {
    match d {
        Direction::SwarmToSchool => "swarm_to_school",
        Direction::SchoolToSwarm => "school_to_swarm",
    }
}

pub fn transitions_csv(rows: &[Transition], config_hash: &str) -> String {
    table(
        config_hash,
        &TRANSITION_COLUMNS,
        rows.iter().map(|r| {
            vec![
                cell(r.t_switch),
                direction_name(r.direction).to_string(),
                cell(r.gamma_from),
                cell(r.gamma_to),
                opt_cell(r.time),
            ]
        }),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct Recovery {
    pub open: f64,
    pub close: f64,
    /// `None` when polarization does not recover before the next window opens.
    pub time: Option<f64>,
}

/// Recovery time after each intrusion window, searched up to the opening of
/// the next window.
pub fn recoveries(samples: &[Sample], windows: &[(f64, f64)]) -> Vec<Recovery> {
    let times: Vec<f64> = samples.iter().map(|s| s.time).collect();
    let p: Vec<f64> = samples.iter().map(|s| s.polarization).collect();
    windows
        .iter()
        .enumerate()
        .map(|(i, &(open, close))| {
            let stop = windows
                .get(i + 1)
                .map_or(times.len(), |next| times.partition_point(|&t| t < next.0 - 1e-9));
            Recovery {
                open,
                close,
                time: recovery_time(&times[..stop], &p[..stop], (open, close)),
            }
        })
        .collect()
}

pub fn recoveries_csv(rows: &[Recovery], config_hash: &str) -> String {
    table(
        config_hash,
        &RECOVERY_COLUMNS,
        rows.iter()
            .map(|r| vec![cell(r.open), cell(r.close), opt_cell(r.time)]),
    )
}

/// `(open, close)` of each maximal run of samples flagged inside a window.
pub fn windows_from_samples(samples: &[Sample]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut open = None;
    for s in samples {
        match (s.in_window, open) {
            (true, None) => open = Some(s.time),
            (false, Some(t)) => {
                out.push((t, s.time));
                open = None;
            }
            _ => {}
        }
    }
    if let (Some(t), Some(last)) = (open, samples.last()) {
        out.push((t, last.time));
    }
    out
}
