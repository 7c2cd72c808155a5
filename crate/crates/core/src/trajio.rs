//! Trajectory and event logs, and the preprocessing pipeline that turns
//! sparse position logs into smooth synchronized velocity estimates.
//!
//! Logs are comma-separated text. Header lines start with `#` and carry
//! `key=value` pairs; the first non-header line names the columns. Floats are
//! written with 9 significant digits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector, Vector3};
use thiserror::Error;

use crate::model::AgentState;
use crate::scenario::{Event, EventKind};

pub const SCHEMA_VERSION: &str = "1";

pub const TRAJ_COLUMNS: [&str; 14] = [
    "time", "agent_id", "role", "x", "y", "z", "vx", "vy", "vz", "sx", "sy", "sz", "gamma_ali",
    "gamma_att",
];

pub const EVENT_COLUMNS: [&str; 6] = ["time", "event", "agent_a", "agent_b", "gamma_ali", "gamma_att"];

#[derive(Debug, Error)]
pub enum TrajError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("schema version {found}, expected {expected}")]
    Schema { found: String, expected: String },
    #[error("{0}")]
    Preprocess(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn parse_err(line: usize, message: impl Into<String>) -> TrajError {
    TrajError::Parse {
        line,
        message: message.into(),
    }
}

/// Formats with 9 significant digits in plain decimal notation, trailing zeros
/// removed.
pub fn format_float(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { format!("{x}") };
    }
    // Round in scientific form first so the exponent accounts for carries.
    let sci = format!("{:.8e}", x);
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    let decimals = (8 - exp).max(0) as usize;
    let mut s = format!("{:.*}", decimals, sci.parse::<f64>().unwrap());
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

/// Value as it reads back from a log.
pub fn quantize(x: f64) -> f64 {
    format_float(x).parse().unwrap()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Role {
    Swarm,
    Intruder,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Swarm => "swarm",
            Role::Intruder => "intruder",
        }
    }
}

impl std::str::FromStr for Role {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "swarm" => Ok(Role::Swarm),
            "intruder" => Ok(Role::Intruder),
            other => Err(format!("unknown role `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRecord {
    pub time: f64,
    pub agent_id: usize,
    pub role: Role,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub setpoint: Vector3<f64>,
    pub gamma_ali: f64,
    pub gamma_att: f64,
}

impl LogRecord {
    pub fn from_state(
        time: f64,
        state: &AgentState,
        role: Role,
        setpoint: Vector3<f64>,
        gains: (f64, f64),
    ) -> Self {
        Self {
            time,
            agent_id: state.id,
            role,
            position: state.position,
            velocity: state.velocity,
            setpoint,
            gamma_ali: gains.0,
            gamma_att: gains.1,
        }
    }

    /// The record with every float rounded as it would be written.
    pub fn quantized(&self) -> Self {
        Self {
            time: quantize(self.time),
            position: self.position.map(quantize),
            velocity: self.velocity.map(quantize),
            setpoint: self.setpoint.map(quantize),
            gamma_ali: quantize(self.gamma_ali),
            gamma_att: quantize(self.gamma_att),
            ..self.clone()
        }
    }
}

/// Ordered `key=value` header entries. `schema` is always present.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LogHeader {
    pub entries: BTreeMap<String, String>,
}

impl LogHeader {
    pub fn new(config_hash: &str, seed: u64, v_min: f64, v_max: f64, dphi_max: f64) -> Self {
        let mut h = Self::default();
        h.set("schema", SCHEMA_VERSION);
        h.set("config_hash", config_hash);
        h.set("seed", seed);
        h.set("v_min", format_float(v_min));
        h.set("v_max", format_float(v_max));
        h.set("dphi_max", format_float(dphi_max));
        h
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn write_to<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "# schema={}", self.get("schema").unwrap_or(SCHEMA_VERSION))?;
        for (k, v) in self.entries.iter().filter(|(k, _)| *k != "schema") {
            writeln!(out, "# {k}={v}")?;
        }
        Ok(())
    }
}

/// Splits header lines from the body. Returns the header and the remaining
/// lines with their 1-based line numbers.
fn read_lines<R: BufRead>(reader: R) -> Result<(LogHeader, Vec<(usize, String)>), TrajError> {
    let mut header = LogHeader::default();
    let mut body = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            let (k, v) = rest
                .split_once('=')
                .ok_or_else(|| parse_err(n, "header line without `=`"))?;
            header.entries.insert(k.trim().to_string(), v.trim().to_string());
        } else if !line.trim().is_empty() {
            body.push((n, line));
        }
    }
    match header.get("schema") {
        Some(SCHEMA_VERSION) => {}
        Some(found) => {
            return Err(TrajError::Schema {
                found: found.to_string(),
                expected: SCHEMA_VERSION.to_string(),
            })
        }
        None => return Err(TrajError::MissingColumn("schema".into())),
    }
    Ok((header, body))
}

/// Maps required column names to their positions in the column line.
fn column_map(line: &str, required: &[&str]) -> Result<Vec<usize>, TrajError> {
    let names: Vec<&str> = line.split(',').map(str::trim).collect();
    required
        .iter()
        .map(|c| {
            names
                .iter()
                .position(|n| n == c)
                .ok_or_else(|| TrajError::MissingColumn(c.to_string()))
        })
        .collect()
}

fn field<'a>(fields: &[&'a str], idx: usize, line: usize, name: &str) -> Result<&'a str, TrajError> {
    fields
        .get(idx)
        .copied()
        .ok_or_else(|| parse_err(line, format!("missing value for `{name}`")))
}

fn float(fields: &[&str], idx: usize, line: usize, name: &str) -> Result<f64, TrajError> {
    let s = field(fields, idx, line, name)?;
    s.trim()
        .parse()
        .map_err(|_| parse_err(line, format!("bad number `{s}` in `{name}`")))
}

pub fn write_log<W: Write>(out: &mut W, header: &LogHeader, records: &[LogRecord]) -> std::io::Result<()> {
    header.write_to(out)?;
    writeln!(out, "{}", TRAJ_COLUMNS.join(","))?;
    let mut line = String::with_capacity(160);
    for r in records {
        line.clear();
        let _ = write!(line, "{},{},{}", format_float(r.time), r.agent_id, r.role.as_str());
        for v in [r.position, r.velocity, r.setpoint] {
            for c in v.iter() {
                let _ = write!(line, ",{}", format_float(*c));
            }
        }
        let _ = write!(line, ",{},{}", format_float(r.gamma_ali), format_float(r.gamma_att));
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_log<R: BufRead>(reader: R) -> Result<(LogHeader, Vec<LogRecord>), TrajError> {
    let (header, body) = read_lines(reader)?;
    let mut lines = body.into_iter();
    let (_, columns) = lines
        .next()
        .ok_or_else(|| TrajError::MissingColumn(TRAJ_COLUMNS[0].into()))?;
    let idx = column_map(&columns, &TRAJ_COLUMNS)?;
    let mut last_time: BTreeMap<usize, f64> = BTreeMap::new();
    let mut roles: BTreeMap<usize, Role> = BTreeMap::new();
    let mut records = Vec::new();
    for (n, line) in lines {
        let f: Vec<&str> = line.split(',').collect();
        let time = float(&f, idx[0], n, "time")?;
        let id_s = field(&f, idx[1], n, "agent_id")?;
        let agent_id: usize = id_s
            .trim()
            .parse()
            .map_err(|_| parse_err(n, format!("bad agent id `{id_s}`")))?;
        let role: Role = field(&f, idx[2], n, "role")?
            .trim()
            .parse()
            .map_err(|e: String| parse_err(n, e))?;
        let mut vals = [0.0; 11];
        for (k, v) in vals.iter_mut().enumerate() {
            *v = float(&f, idx[3 + k], n, TRAJ_COLUMNS[3 + k])?;
        }
        if let Some(&prev) = last_time.get(&agent_id) {
            if time <= prev {
                return Err(parse_err(n, format!("time {time} not after {prev} for agent {agent_id}")));
            }
        }
        last_time.insert(agent_id, time);
        if *roles.entry(agent_id).or_insert(role) != role {
            return Err(parse_err(n, format!("agent {agent_id} changed role")));
        }
        records.push(LogRecord {
            time,
            agent_id,
            role,
            position: Vector3::new(vals[0], vals[1], vals[2]),
            velocity: Vector3::new(vals[3], vals[4], vals[5]),
            setpoint: Vector3::new(vals[6], vals[7], vals[8]),
            gamma_ali: vals[9],
            gamma_att: vals[10],
        });
    }
    Ok((header, records))
}

pub fn write_events<W: Write>(out: &mut W, header: &LogHeader, events: &[Event]) -> std::io::Result<()> {
    header.write_to(out)?;
    writeln!(out, "{}", EVENT_COLUMNS.join(","))?;
    for e in events {
        let t = format_float(e.time);
        match &e.kind {
            EventKind::GainChange { gamma_ali, gamma_att } => writeln!(
                out,
                "{t},gain_change,,,{},{}",
                format_float(*gamma_ali),
                format_float(*gamma_att)
            )?,
            EventKind::IntrusionOpen => writeln!(out, "{t},intrusion_open,,,,")?,
            EventKind::IntrusionClose => writeln!(out, "{t},intrusion_close,,,,")?,
            EventKind::Collision { a, b } => writeln!(out, "{t},collision,{a},{b},,")?,
            EventKind::Divergence { agent } => writeln!(out, "{t},divergence,{agent},,,")?,
        }
    }
    Ok(())
}

pub fn read_events<R: BufRead>(reader: R) -> Result<(LogHeader, Vec<Event>), TrajError> {
    let (header, body) = read_lines(reader)?;
    let mut lines = body.into_iter();
    let (_, columns) = lines
        .next()
        .ok_or_else(|| TrajError::MissingColumn(EVENT_COLUMNS[0].into()))?;
    let idx = column_map(&columns, &EVENT_COLUMNS)?;
    let mut events = Vec::new();
    for (n, line) in lines {
        let f: Vec<&str> = line.split(',').collect();
        let time = float(&f, idx[0], n, "time")?;
        let id = |k: usize, name: &str| -> Result<usize, TrajError> {
            let s = field(&f, idx[k], n, name)?;
            s.trim().parse().map_err(|_| parse_err(n, format!("bad id `{s}` in `{name}`")))
        };
        let kind = match field(&f, idx[1], n, "event")?.trim() {
            "gain_change" => EventKind::GainChange {
                gamma_ali: float(&f, idx[4], n, "gamma_ali")?,
                gamma_att: float(&f, idx[5], n, "gamma_att")?,
            },
            "intrusion_open" => EventKind::IntrusionOpen,
            "intrusion_close" => EventKind::IntrusionClose,
            "collision" => EventKind::Collision {
                a: id(2, "agent_a")?,
                b: id(3, "agent_b")?,
            },
            "divergence" => EventKind::Divergence {
                agent: id(2, "agent_a")?,
            },
            other => return Err(parse_err(n, format!("unknown event `{other}`"))),
        };
        events.push(Event { time, kind });
    }
    Ok((header, events))
}

/// C1 piecewise-cubic interpolant with Akima slopes.
#[derive(Clone, Debug)]
pub struct Akima {
    t: Vec<f64>,
    y: Vec<f64>,
    slopes: Vec<f64>,
}

/// Fewest knots accepted by [`Akima::new`].
pub const MIN_KNOTS: usize = 5;

impl Akima {
    pub fn new(t: &[f64], y: &[f64]) -> Result<Self, TrajError> {
        if t.len() != y.len() {
            return Err(TrajError::Preprocess("time and value lengths differ".into()));
        }
        if t.len() < MIN_KNOTS {
            return Err(TrajError::Preprocess(format!(
                "need at least {MIN_KNOTS} knots, got {}",
                t.len()
            )));
        }
        for w in t.windows(2) {
            if w[1] == w[0] {
                return Err(TrajError::Preprocess(format!("duplicate timestamp {}", w[0])));
            }
            if w[1] < w[0] {
                return Err(TrajError::Preprocess(format!("time decreases at {}", w[1])));
            }
        }
        let n = t.len();
        // Secant slopes padded with two linearly extrapolated values on each side.
        let mut m = vec![0.0; n + 3];
        for i in 0..n - 1 {
            m[i + 2] = (y[i + 1] - y[i]) / (t[i + 1] - t[i]);
        }
        m[1] = 2.0 * m[2] - m[3];
        m[0] = 2.0 * m[1] - m[2];
        m[n + 1] = 2.0 * m[n] - m[n - 1];
        m[n + 2] = 2.0 * m[n + 1] - m[n];
        let slopes = (0..n)
            .map(|i| {
                let (m0, m1, m2, m3) = (m[i], m[i + 1], m[i + 2], m[i + 3]);
                let w1 = (m3 - m2).abs();
                let w2 = (m1 - m0).abs();
                if w1 + w2 == 0.0 {
                    0.5 * (m1 + m2)
                } else {
                    (w1 * m1 + w2 * m2) / (w1 + w2)
                }
            })
            .collect();
        Ok(Self {
            t: t.to_vec(),
            y: y.to_vec(),
            slopes,
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.t[0], self.t[self.t.len() - 1])
    }

    fn interval(&self, x: f64) -> usize {
        let k = self.t.partition_point(|&ti| ti <= x);
        k.clamp(1, self.t.len() - 1) - 1
    }

    /// Hermite coefficients of interval `i` in the local variable `s = x - t_i`.
    fn coeffs(&self, i: usize) -> (f64, f64, f64, f64) {
        let h = self.t[i + 1] - self.t[i];
        let m = (self.y[i + 1] - self.y[i]) / h;
        let (d0, d1) = (self.slopes[i], self.slopes[i + 1]);
        let c2 = (3.0 * m - 2.0 * d0 - d1) / h;
        let c3 = (d0 + d1 - 2.0 * m) / (h * h);
        (self.y[i], d0, c2, c3)
    }

    /// Value at `x`; outside the knots the end cubics are extended.
    pub fn eval(&self, x: f64) -> f64 {
        let i = self.interval(x);
        let s = x - self.t[i];
        let (a, b, c, d) = self.coeffs(i);
        a + s * (b + s * (c + s * d))
    }

    /// Analytic first derivative.
    pub fn derivative(&self, x: f64) -> f64 {
        let i = self.interval(x);
        let s = x - self.t[i];
        let (_, b, c, d) = self.coeffs(i);
        b + s * (2.0 * c + s * 3.0 * d)
    }
}

/// Output rate and smoothing of the preprocessing pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct ResampleSpec {
    pub rate: f64,
    /// Savitzky–Golay window in samples (odd); 1 disables smoothing.
    pub smooth_window: usize,
    pub smooth_degree: usize,
}

impl Default for ResampleSpec {
    fn default() -> Self {
        Self {
            rate: 10.0,
            smooth_window: 1,
            smooth_degree: 0,
        }
    }
}

impl ResampleSpec {
    pub fn validate(&self) -> Result<(), TrajError> {
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(TrajError::Preprocess("rate must be positive".into()));
        }
        if self.smooth_window.is_multiple_of(2) {
            return Err(TrajError::Preprocess("smooth_window must be odd".into()));
        }
        if self.smooth_window > 1 && self.smooth_degree >= self.smooth_window {
            return Err(TrajError::Preprocess("smooth_degree must be below smooth_window".into()));
        }
        Ok(())
    }
}

/// Regular grid from `start` to `end` inclusive (within rounding) at `rate` Hz.
pub fn time_grid(start: f64, end: f64, rate: f64) -> Vec<f64> {
    let count = ((end - start) * rate + 1e-6).floor() as usize + 1;
    (0..count).map(|i| start + i as f64 / rate).collect()
}

/// Value and analytic derivative of the interpolant on a regular grid.
pub fn resample(t: &[f64], y: &[f64], rate: f64) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), TrajError> {
    let a = Akima::new(t, y)?;
    let (lo, hi) = a.domain();
    let grid = time_grid(lo, hi, rate);
    let values = grid.iter().map(|&x| a.eval(x)).collect();
    let deriv = grid.iter().map(|&x| a.derivative(x)).collect();
    Ok((grid, values, deriv))
}

/// Savitzky–Golay weights producing the fitted value at the center of a
/// symmetric window of half-width `half`.
pub fn savgol_weights(half: usize, degree: usize) -> Vec<f64> {
    let m = 2 * half + 1;
    let degree = degree.min(m - 1);
    let a = DMatrix::from_fn(m, degree + 1, |r, c| (r as f64 - half as f64).powi(c as i32));
    let ata = a.transpose() * &a;
    let inv = ata
        .try_inverse()
        .expect("Vandermonde normal matrix of distinct nodes is invertible");
    let e0 = DVector::from_fn(degree + 1, |r, _| if r == 0 { 1.0 } else { 0.0 });
    let w = a * (inv * e0);
    w.iter().copied().collect()
}

/// Zero-lag Savitzky–Golay smoothing. Near the ends the window shrinks
/// symmetrically so it never leaves the series.
pub fn smooth(series: &[f64], window: usize, degree: usize) -> Vec<f64> {
    if window <= 1 || series.len() < 2 {
        return series.to_vec();
    }
    let half = window / 2;
    let n = series.len();
    let mut cache: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    (0..n)
        .map(|i| {
            let k = half.min(i).min(n - 1 - i);
            let w = cache.entry(k).or_insert_with(|| savgol_weights(k, degree));
            w.iter().enumerate().map(|(j, c)| c * series[i + j - k]).sum()
        })
        .collect()
}

/// Positions of one agent over time.
#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    pub agent_id: usize,
    pub role: Role,
    pub times: Vec<f64>,
    pub positions: Vec<Vector3<f64>>,
}

/// Groups records into per-agent tracks, ordered by agent id.
pub fn tracks(records: &[LogRecord]) -> Vec<Track> {
    let mut map: BTreeMap<usize, Track> = BTreeMap::new();
    for r in records {
        let t = map.entry(r.agent_id).or_insert_with(|| Track {
            agent_id: r.agent_id,
            role: r.role,
            times: Vec::new(),
            positions: Vec::new(),
        });
        t.times.push(r.time);
        t.positions.push(r.position);
    }
    map.into_values().collect()
}

/// All agents on one shared time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Panel {
    pub times: Vec<f64>,
    pub agents: Vec<(usize, Role)>,
    /// `positions[a][k]` is agent `a` at `times[k]`.
    pub positions: Vec<Vec<Vector3<f64>>>,
    pub velocities: Vec<Vec<Vector3<f64>>>,
}

/// Interpolates every track onto one grid covering the intersection of their
/// time ranges; velocities are analytic derivatives, optionally smoothed.
pub fn synchronize(tracks: &[Track], spec: &ResampleSpec) -> Result<Panel, TrajError> {
    spec.validate()?;
    if tracks.is_empty() {
        return Err(TrajError::Preprocess("no tracks".into()));
    }
    let start = tracks.iter().map(|t| t.times[0]).fold(f64::NEG_INFINITY, f64::max);
    let end = tracks
        .iter()
        .map(|t| *t.times.last().unwrap())
        .fold(f64::INFINITY, f64::min);
    if !(end >= start) {
        return Err(TrajError::Preprocess("tracks do not overlap in time".into()));
    }
    let grid = time_grid(start, end, spec.rate);
    let mut positions = Vec::with_capacity(tracks.len());
    let mut velocities = Vec::with_capacity(tracks.len());
    for track in tracks {
        let mut pos = vec![Vector3::zeros(); grid.len()];
        let mut vel = vec![Vector3::zeros(); grid.len()];
        for axis in 0..3 {
            let y: Vec<f64> = track.positions.iter().map(|p| p[axis]).collect();
            let a = Akima::new(&track.times, &y)?;
            let d: Vec<f64> = grid.iter().map(|&x| a.derivative(x)).collect();
            let d = smooth(&d, spec.smooth_window, spec.smooth_degree);
            for (k, &x) in grid.iter().enumerate() {
                pos[k][axis] = a.eval(x);
                vel[k][axis] = d[k];
            }
        }
        positions.push(pos);
        velocities.push(vel);
    }
    Ok(Panel {
        times: grid,
        agents: tracks.iter().map(|t| (t.agent_id, t.role)).collect(),
        positions,
        velocities,
    })
}
