//! Gain schedules, the three flight scenarios and the intruder policy.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ParamError, SimError};
use crate::flight::{init_swarm, FlightParams, InitSpec, World};
use crate::metrics::{dispersion, min_distance, polarization};
use crate::model::{wrap_angle, AgentState, ArenaSpec, ModelParams, NavGoal};
use crate::trajio::{LogRecord, Role};

/// One fixed-gain stretch of a schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub duration: f64,
    pub gamma_ali: f64,
    pub gamma_att: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSchedule {
    pub segments: Vec<Segment>,
}

impl GainSchedule {
    pub fn constant(duration: f64, gamma_ali: f64, gamma_att: f64) -> Self {
        Self {
            segments: vec![Segment {
                duration,
                gamma_ali,
                gamma_att,
            }],
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if self.segments.is_empty() {
            return Err(ParamError::new("schedule", "needs at least one segment"));
        }
        for s in &self.segments {
            if !(s.duration > 0.0 && s.duration.is_finite()) {
                return Err(ParamError::new("schedule.duration", "must be positive"));
            }
            if !(s.gamma_ali >= 0.0 && s.gamma_att >= 0.0)
                || !s.gamma_ali.is_finite()
                || !s.gamma_att.is_finite()
            {
                return Err(ParamError::new("schedule.gamma", "gains must be >= 0"));
            }
        }
        Ok(())
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// `(start, end, segment)` for every segment.
    pub fn bounds(&self) -> Vec<(f64, f64, Segment)> {
        let mut t = 0.0;
        self.segments
            .iter()
            .map(|s| {
                let start = t;
                t += s.duration;
                (start, t, *s)
            })
            .collect()
    }

    /// Index of the segment active at `t`. Boundaries belong to the later
    /// segment; times past the end map to the last one.
    pub fn segment_index(&self, t: f64) -> usize {
        let mut end = 0.0;
        for (i, s) in self.segments.iter().enumerate() {
            end += s.duration;
            if t < end - 1e-9 {
                return i;
            }
        }
        self.segments.len() - 1
    }

    /// `(gamma_ali, gamma_att)` at time `t`.
    pub fn gain_at(&self, t: f64) -> (f64, f64) {
        let s = &self.segments[self.segment_index(t)];
        (s.gamma_ali, s.gamma_att)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntruderPolicy {
    pub speed: f64,
    pub altitude: f64,
    pub lock_distance: f64,
    pub pause_duration: f64,
    /// Barycenter distance that opens an intrusion window.
    pub approach_start_distance: f64,
    /// Distance from the arena center where the intruder starts.
    pub start_distance: f64,
}

impl Default for IntruderPolicy {
    fn default() -> Self {
        Self {
            speed: 2.5,
            altitude: 10.0,
            lock_distance: 5.0,
            pause_duration: 15.0,
            approach_start_distance: 25.0,
            start_distance: 35.0,
        }
    }
}

impl IntruderPolicy {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return Err(ParamError::new("intruder.speed", "must be positive"));
        }
        if !(self.lock_distance > 0.0 && self.lock_distance.is_finite()) {
            return Err(ParamError::new("intruder.lock_distance", "must be positive"));
        }
        if !(self.pause_duration >= 0.0 && self.pause_duration.is_finite()) {
            return Err(ParamError::new("intruder.pause_duration", "must be >= 0"));
        }
        if !(self.approach_start_distance > 0.0) {
            return Err(ParamError::new(
                "intruder.approach_start_distance",
                "must be positive",
            ));
        }
        if !(self.altitude.is_finite() && self.start_distance.is_finite()) {
            return Err(ParamError::new("intruder.altitude", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum IntruderPhase {
    Approach,
    Locked { heading: f64 },
    /// Parked outside the arena until `until`.
    Exit { until: f64 },
}

/// Moves the intruder by `dt` according to its phase.
///
/// The intruder flies at constant altitude and speed without plant lag and
/// ignores the swarm except for its barycenter.
pub fn intruder_update(
    intruder: &AgentState,
    barycenter: &Vector3<f64>,
    arena: &ArenaSpec,
    policy: &IntruderPolicy,
    phase: IntruderPhase,
    time: f64,
    dt: f64,
) -> (AgentState, IntruderPhase) {
    let mut next = intruder.clone();
    next.position.z = policy.altitude;
    let to_bary = (barycenter - intruder.position).xy();
    let phase = match phase {
        IntruderPhase::Exit { until } if time >= until => IntruderPhase::Approach,
        IntruderPhase::Approach if to_bary.norm() <= policy.lock_distance => IntruderPhase::Locked {
            heading: intruder.heading,
        },
        other => other,
    };
    let heading = match phase {
        IntruderPhase::Approach => {
            if to_bary.norm() > 0.0 {
                wrap_angle(to_bary.y.atan2(to_bary.x))
            } else {
                intruder.heading
            }
        }
        IntruderPhase::Locked { heading } => heading,
        IntruderPhase::Exit { .. } => {
            next.velocity = Vector3::zeros();
            return (next, phase);
        }
    };
    let velocity = Vector3::new(policy.speed * heading.cos(), policy.speed * heading.sin(), 0.0);
    next.position += velocity * dt;
    next.position.z = policy.altitude;
    next.velocity = velocity;
    next.heading = heading;

    if let IntruderPhase::Locked { heading } = phase {
        let past = (next.position - barycenter).xy().dot(&velocity.xy()) > 0.0;
        if past && arena.wall_distance(&next.position) < 0.0 {
            next.velocity = Vector3::zeros();
            next.heading = heading;
            return (
                next,
                IntruderPhase::Exit {
                    until: time + dt + policy.pause_duration,
                },
            );
        }
    }
    (next, phase)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Baseline,
    Switching,
    Intruder,
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Baseline => "baseline",
            ScenarioKind::Switching => "switching",
            ScenarioKind::Intruder => "intruder",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub n_drones: usize,
    pub duration: f64,
    pub schedule: GainSchedule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intruder: Option<IntruderPolicy>,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), ParamError> {
        self.schedule.validate()?;
        if self.n_drones < 2 {
            return Err(ParamError::new("n_drones", "a swarm needs at least 2 agents"));
        }
        if (self.duration - self.schedule.total_duration()).abs() > 1e-9 {
            return Err(ParamError::new(
                "duration",
                format!(
                    "must equal the schedule length ({} s)",
                    self.schedule.total_duration()
                ),
            ));
        }
        match (&self.kind, &self.intruder) {
            (ScenarioKind::Intruder, Some(policy)) => policy.validate(),
            (ScenarioKind::Intruder, None) => Err(ParamError::new(
                "intruder",
                "intruder scenario needs an intruder policy",
            )),
            (_, Some(_)) => Err(ParamError::new(
                "intruder",
                "only the intruder scenario takes an intruder policy",
            )),
            (_, None) => Ok(()),
        }
    }

    /// A single constant-gain segment, with or without intruder.
    pub fn constant(
        n: usize,
        duration: f64,
        gamma_ali: f64,
        gamma_att: f64,
        intruder: Option<IntruderPolicy>,
        seed: u64,
    ) -> Self {
        Self {
            kind: if intruder.is_some() {
                ScenarioKind::Intruder
            } else {
                ScenarioKind::Baseline
            },
            n_drones: n,
            duration,
            schedule: GainSchedule::constant(duration, gamma_ali, gamma_att),
            intruder,
            seed,
        }
    }
}

/// Values `start, start + step, ...` not exceeding `end`.
pub fn gain_range(start: f64, end: f64, step: f64) -> Vec<f64> {
    let count = ((end - start) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|i| start + i as f64 * step).collect()
}

/// Steps `gamma_ali` through `ali_range` with fixed `gamma_att`.
pub fn make_baseline(
    n: usize,
    gamma_att: f64,
    ali_range: (f64, f64),
    step: f64,
    dwell: f64,
) -> Result<ScenarioSpec, ParamError> {
    let (lo, hi) = ali_range;
    if !(lo <= hi) || lo < 0.0 || hi > 1.0 {
        return Err(ParamError::new("ali_range", "must be a non-empty range within [0, 1]"));
    }
    if !(step > 0.0) {
        return Err(ParamError::new("step", "must be positive"));
    }
    let segments: Vec<Segment> = gain_range(lo, hi, step)
        .into_iter()
        .map(|g| Segment {
            duration: dwell,
            gamma_ali: g,
            gamma_att,
        })
        .collect();
    let schedule = GainSchedule { segments };
    schedule.validate()?;
    Ok(ScenarioSpec {
        kind: ScenarioKind::Baseline,
        n_drones: n,
        duration: schedule.total_duration(),
        schedule,
        intruder: None,
        seed: 0,
    })
}

/// Alternates `low` and `high` alignment gains, `cycles` times.
pub fn make_switching(
    n: usize,
    gamma_att: f64,
    low: f64,
    high: f64,
    dwell: f64,
    cycles: usize,
) -> Result<ScenarioSpec, ParamError> {
    if !(low < high) {
        return Err(ParamError::new("low", "must be below high"));
    }
    let segments: Vec<Segment> = (0..cycles)
        .flat_map(|_| [low, high])
        .map(|g| Segment {
            duration: dwell,
            gamma_ali: g,
            gamma_att,
        })
        .collect();
    let schedule = GainSchedule { segments };
    schedule.validate()?;
    Ok(ScenarioSpec {
        kind: ScenarioKind::Switching,
        n_drones: n,
        duration: schedule.total_duration(),
        schedule,
        intruder: None,
        seed: 0,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum EventKind {
    GainChange { gamma_ali: f64, gamma_att: f64 },
    IntrusionOpen,
    IntrusionClose,
    Collision { a: usize, b: usize },
    Divergence { agent: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

/// Swarm-level observables at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub time: f64,
    pub polarization: f64,
    pub dispersion: f64,
    pub min_distance: f64,
    pub gamma_ali: f64,
    pub gamma_att: f64,
    /// Distance from the intruder to the swarm barycenter.
    pub intruder_distance: Option<f64>,
    pub in_window: bool,
}

/// Output rates of a run. `None` disables the trajectory log.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    pub log_rate: Option<f64>,
    pub sample_rate: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            log_rate: Some(1.0),
            sample_rate: 10.0,
        }
    }
}

/// Everything the simulation environment needs besides the scenario.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimSetup {
    pub model: ModelParams,
    pub flight: FlightParams,
    pub arena: ArenaSpec,
    pub init: InitSpec,
    pub goal: NavGoal,
}

impl SimSetup {
    pub fn validate(&self) -> Result<(), ParamError> {
        self.model.validate()?;
        self.flight.validate()?;
        self.arena.validate()?;
        self.init.validate()?;
        if !self.goal.z_alt.is_finite() {
            return Err(ParamError::new("z_alt", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct RunOutput {
    pub records: Vec<LogRecord>,
    pub events: Vec<Event>,
    pub samples: Vec<Sample>,
    /// Set when the run was aborted; the outputs above are partial.
    pub failure: Option<SimError>,
}

/// Physics steps between two outputs at `rate` Hz.
fn stride(rate: f64, dt: f64) -> Result<u64, ParamError> {
    let s = (1.0 / (rate * dt)).round();
    if !(rate > 0.0 && s >= 1.0 && s.is_finite()) {
        return Err(ParamError::new("rate", "must be positive and at most 1/dt_phys"));
    }
    Ok(s as u64)
}

fn sample(world: &World, gains: (f64, f64), intruder_distance: Option<f64>, in_window: bool) -> Sample {
    let (polarization, _) = polarization(world.swarm.iter().map(|a| a.velocity));
    Sample {
        time: world.time,
        polarization,
        dispersion: dispersion(world.swarm.iter().map(|a| a.position)),
        min_distance: min_distance(&world.swarm.iter().map(|a| a.position).collect::<Vec<_>>()),
        gamma_ali: gains.0,
        gamma_att: gains.1,
        intruder_distance,
        in_window,
    }
}

fn log_world(world: &World, gains: (f64, f64), out: &mut Vec<LogRecord>) {
    for (a, sp) in world.swarm.iter().zip(&world.setpoints) {
        out.push(LogRecord::from_state(world.time, a, Role::Swarm, *sp, gains));
    }
    for a in &world.intruders {
        out.push(LogRecord::from_state(world.time, a, Role::Intruder, a.position, gains));
    }
}

/// Initial intruder state on a circle around the arena center, at a bearing
/// drawn from its own random stream.
pub fn spawn_intruder(
    id: usize,
    policy: &IntruderPolicy,
    arena: &ArenaSpec,
    seed: u64,
) -> AgentState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let bearing = wrap_angle(rng.random::<f64>() * 2.0 * std::f64::consts::PI);
    let position = Vector3::new(
        arena.center[0] + policy.start_distance * bearing.cos(),
        arena.center[1] + policy.start_distance * bearing.sin(),
        policy.altitude,
    );
    AgentState {
        id,
        position,
        velocity: Vector3::zeros(),
        heading: wrap_angle(bearing + std::f64::consts::PI),
    }
}

/// Runs one scenario. Divergence stops the run early and is reported through
/// [`RunOutput::failure`] with the outputs gathered so far.
pub fn run_scenario(spec: &ScenarioSpec, setup: &SimSetup, opts: &RunOptions) -> Result<RunOutput, SimError> {
    spec.validate()?;
    setup.validate()?;
    let dt = setup.flight.dt_phys;
    let log_stride = opts.log_rate.map(|r| stride(r, dt)).transpose()?;
    let sample_stride = stride(opts.sample_rate, dt)?;
    let total_steps = (spec.duration / dt).round() as u64;

    let swarm = init_swarm(spec.n_drones, &setup.init, &setup.arena, spec.seed)?;
    let mut intruder_phase = IntruderPhase::Approach;
    let intruders = match &spec.intruder {
        Some(policy) => vec![spawn_intruder(spec.n_drones, policy, &setup.arena, spec.seed)],
        None => Vec::new(),
    };
    let mut world = World::new(swarm, intruders);
    let mut out = RunOutput::default();
    let mut model = setup.model.clone();
    let mut gains = spec.schedule.gain_at(0.0);
    out.events.push(Event {
        time: 0.0,
        kind: EventKind::GainChange {
            gamma_ali: gains.0,
            gamma_att: gains.1,
        },
    });
    model.gamma_ali = gains.0;
    model.gamma_att = gains.1;
    let mut in_window = false;

    let intruder_distance = |w: &World| -> Option<f64> {
        w.intruders.first().map(|k| (k.position - w.barycenter()).norm())
    };

    let observe = |w: &World, gains: (f64, f64), in_window: bool, out: &mut RunOutput| {
        if w.step.is_multiple_of(sample_stride) {
            out.samples.push(sample(w, gains, intruder_distance(w), in_window));
        }
        if let Some(s) = log_stride {
            if w.step.is_multiple_of(s) {
                log_world(w, gains, &mut out.records);
            }
        }
    };
    observe(&world, gains, in_window, &mut out);

    let steps_per_tick = setup.flight.steps_per_tick() as u64;
    while world.step < total_steps {
        let report = match world.step_world(&model, &setup.flight, &setup.goal, &setup.arena) {
            Ok(r) => r,
            Err(e) => {
                if let SimError::NonFinite { agent, time } = e {
                    out.events.push(Event {
                        time,
                        kind: EventKind::Divergence { agent },
                    });
                }
                out.failure = Some(e);
                return Ok(out);
            }
        };
        for (a, b) in report.collisions {
            if a < b {
                out.events.push(Event {
                    time: world.time - dt,
                    kind: EventKind::Collision { a, b },
                });
            }
        }
        if let Some(policy) = &spec.intruder {
            let bary = world.barycenter();
            let (next, phase) = intruder_update(
                &world.intruders[0],
                &bary,
                &setup.arena,
                policy,
                intruder_phase,
                world.time - dt,
                dt,
            );
            world.intruders[0] = next;
            intruder_phase = phase;
            let near = intruder_distance(&world).unwrap() <= policy.approach_start_distance;
            let active = !matches!(intruder_phase, IntruderPhase::Exit { .. });
            let now_in = near && active;
            if now_in != in_window {
                out.events.push(Event {
                    time: world.time,
                    kind: if now_in {
                        EventKind::IntrusionOpen
                    } else {
                        EventKind::IntrusionClose
                    },
                });
                in_window = now_in;
            }
        }
        if world.step.is_multiple_of(steps_per_tick) && world.step < total_steps {
            let g = spec.schedule.gain_at(world.time);
            if g != gains {
                gains = g;
                out.events.push(Event {
                    time: world.time,
                    kind: EventKind::GainChange {
                        gamma_ali: g.0,
                        gamma_att: g.1,
                    },
                });
            }
            model.gamma_ali = gains.0;
            model.gamma_att = gains.1;
        }
        observe(&world, gains, in_window, &mut out);
    }
    if in_window {
        out.events.push(Event {
            time: world.time,
            kind: EventKind::IntrusionClose,
        });
    }
    Ok(out)
}

/// `(open, close)` times of every intrusion window in an event log.
pub fn intrusion_windows(events: &[Event]) -> Vec<(f64, f64)> {
    let mut windows = Vec::new();
    let mut open = None;
    for e in events {
        match e.kind {
            EventKind::IntrusionOpen => open = Some(e.time),
            EventKind::IntrusionClose => {
                if let Some(t) = open.take() {
                    windows.push((t, e.time));
                }
            }
            _ => {}
        }
    }
    windows
}
