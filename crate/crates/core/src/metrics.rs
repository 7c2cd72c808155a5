//! Order parameters and response statistics.

use nalgebra::Vector3;

use crate::scenario::{GainSchedule, Sample};

/// Norm of the mean 3D unit velocity. Agents with zero speed are left out and
/// counted in the second value.
pub fn polarization<I: IntoIterator<Item = Vector3<f64>>>(velocities: I) -> (f64, usize) {
    let mut sum = Vector3::zeros();
    let mut used = 0usize;
    let mut skipped = 0usize;
    for v in velocities {
        let n = v.norm();
        if n > 0.0 && n.is_finite() {
            sum += v / n;
            used += 1;
        } else {
            skipped += 1;
        }
    }
    if used == 0 {
        return (0.0, skipped);
    }
    ((sum.norm() / used as f64).min(1.0), skipped)
}

/// Root-mean-square distance to the barycenter.
pub fn dispersion<I: IntoIterator<Item = Vector3<f64>>>(positions: I) -> f64 {
    let pts: Vec<Vector3<f64>> = positions.into_iter().collect();
    if pts.is_empty() {
        return 0.0;
    }
    let n = pts.len() as f64;
    let bary: Vector3<f64> = pts.iter().sum::<Vector3<f64>>() / n;
    (pts.iter().map(|p| (p - bary).norm_squared()).sum::<f64>() / n).sqrt()
}

/// Smallest pairwise 3D distance; infinite for fewer than two points.
pub fn min_distance(positions: &[Vector3<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, a) in positions.iter().enumerate() {
        for b in &positions[i + 1..] {
            best = best.min((a - b).norm());
        }
    }
    best
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn population_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).max(0.0)
}

/// `n` times the population variance of the polarization series.
pub fn susceptibility(series: &[f64], n: usize) -> f64 {
    if series.len() < 2 {
        return 0.0;
    }
    n as f64 * population_variance(series)
}

/// Expected polarization of `n` agents with independent random headings.
pub fn random_baseline(n: usize) -> f64 {
    0.5 * (std::f64::consts::PI / n as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentStats {
    pub gamma_ali: f64,
    pub gamma_att: f64,
    pub mean_p: f64,
    pub std_p: f64,
    pub chi_p: f64,
    pub mean_d: f64,
    pub std_d: f64,
    pub mean_mindist: f64,
    pub window_start: f64,
    pub window_end: f64,
    pub samples: usize,
}

impl SegmentStats {
    /// Aggregates a window of samples; `None` when the window is empty.
    pub fn from_samples<'a, I>(gains: (f64, f64), samples: I, n: usize) -> Option<Self>
    where
        I: IntoIterator<Item = &'a Sample>,
    {
        let window: Vec<&Sample> = samples.into_iter().collect();
        if window.is_empty() {
            return None;
        }
        let p: Vec<f64> = window.iter().map(|s| s.polarization).collect();
        let d: Vec<f64> = window.iter().map(|s| s.dispersion).collect();
        let md: Vec<f64> = window.iter().map(|s| s.min_distance).collect();
        Some(Self {
            gamma_ali: gains.0,
            gamma_att: gains.1,
            mean_p: mean(&p),
            std_p: population_variance(&p).sqrt(),
            chi_p: susceptibility(&p, n),
            mean_d: mean(&d),
            std_d: population_variance(&d).sqrt(),
            mean_mindist: mean(&md),
            window_start: window[0].time,
            window_end: window[window.len() - 1].time,
            samples: window.len(),
        })
    }
}

/// Per-segment statistics after dropping the first `transient_cut` seconds of
/// each segment. Returns the stats and the indices of segments whose window
/// was empty. With `windows_only`, only samples inside intrusion windows count.
pub fn segment_stats(
    samples: &[Sample],
    schedule: &GainSchedule,
    transient_cut: f64,
    n: usize,
    windows_only: bool,
) -> (Vec<SegmentStats>, Vec<usize>) {
    let eps = 1e-9;
    let mut stats = Vec::new();
    let mut skipped = Vec::new();
    for (i, (start, end, seg)) in schedule.bounds().into_iter().enumerate() {
        let window = samples.iter().filter(|s| {
            s.time >= start + transient_cut - eps && s.time < end - eps && (!windows_only || s.in_window)
        });
        match SegmentStats::from_samples((seg.gamma_ali, seg.gamma_att), window, n) {
            Some(s) => stats.push(s),
            None => skipped.push(i),
        }
    }
    (stats, skipped)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    SwarmToSchool,
    SchoolToSwarm,
}

/// Polarization threshold above which the group counts as schooling.
pub const SCHOOL_THRESHOLD: f64 = 0.8;
/// Margin above the random baseline below which the group counts as swarming.
pub const SWARM_MARGIN: f64 = 0.15;
/// How long a threshold must hold, seconds.
pub const SUSTAIN: f64 = 2.0;

/// First sample time `t >= from` such that `pred` holds for every sample in
/// `[t, t + sustain]`, which must lie within the series.
pub fn sustained_crossing<F: Fn(f64) -> bool>(
    times: &[f64],
    values: &[f64],
    from: f64,
    sustain: f64,
    pred: F,
) -> Option<f64> {
    let eps = 1e-9;
    let mut run_start: Option<usize> = None;
    for (i, (&t, &v)) in times.iter().zip(values).enumerate() {
        if t < from - eps {
            continue;
        }
        if pred(v) {
            let s = *run_start.get_or_insert(i);
            if t - times[s] >= sustain - eps {
                return Some(times[s]);
            }
        } else {
            run_start = None;
        }
    }
    None
}

/// Time from `t_switch` until the polarization crosses into the target phase
/// and stays there for [`SUSTAIN`] seconds.
pub fn transition_time(
    times: &[f64],
    polarization: &[f64],
    t_switch: f64,
    direction: Direction,
    n: usize,
) -> Option<f64> {
    let hit = match direction {
        Direction::SwarmToSchool => {
            sustained_crossing(times, polarization, t_switch, SUSTAIN, |p| p >= SCHOOL_THRESHOLD)
        }
        Direction::SchoolToSwarm => {
            let limit = random_baseline(n) + SWARM_MARGIN;
            sustained_crossing(times, polarization, t_switch, SUSTAIN, |p| p <= limit)
        }
    };
    hit.map(|t| t - t_switch)
}

/// Seconds before a window used as the undisturbed reference.
pub const RECOVERY_REFERENCE: f64 = 10.0;
/// Fraction of the reference polarization that counts as recovered.
pub const RECOVERY_FRACTION: f64 = 0.8;

/// Time from the window close until the polarization is back above
/// [`RECOVERY_FRACTION`] of its mean over the [`RECOVERY_REFERENCE`] seconds
/// before the window opened, sustained for [`SUSTAIN`] seconds.
pub fn recovery_time(times: &[f64], polarization: &[f64], window: (f64, f64)) -> Option<f64> {
    let eps = 1e-9;
    let (open, close) = window;
    let reference: Vec<f64> = times
        .iter()
        .zip(polarization)
        .filter(|(&t, _)| t >= open - RECOVERY_REFERENCE - eps && t < open - eps)
        .map(|(_, &p)| p)
        .collect();
    if reference.is_empty() {
        return None;
    }
    let threshold = RECOVERY_FRACTION * mean(&reference);
    sustained_crossing(times, polarization, close, SUSTAIN, |p| p >= threshold).map(|t| t - close)
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation, ties receiving their average rank.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, my) = (mean(&rx), mean(&ry));
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Median of a slice; `None` when empty.
pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}
