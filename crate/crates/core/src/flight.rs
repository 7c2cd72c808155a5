//! First-order flight plant and discrete-time world stepping.
//!
//! Each drone relaxes toward a position setpoint with time constant `tau`.
//! Setpoints are refreshed every `dt_ctrl` from the model's command, the plant
//! is integrated exactly every `dt_phys`.

use std::collections::VecDeque;
use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ParamError, SimError};
use crate::model::{compose_command, wrap_angle, AgentState, ArenaSpec, CommandDelta, ModelParams, NavGoal};

/// Horizon that makes the finite-difference velocity measured at the next
/// control tick equal the commanded velocity, for a drone starting at rest
/// relative to its command.
pub fn lead_time_to_target(tau: f64, dt_ctrl: f64, dt_phys: f64) -> f64 {
    let before = (-(dt_ctrl - dt_phys) / tau).exp();
    let at = (-dt_ctrl / tau).exp();
    dt_phys / (before - at)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlightParams {
    pub tau: f64,
    pub dt_phys: f64,
    pub dt_ctrl: f64,
    /// Horizontal setpoint horizon.
    pub time_to_target: f64,
    /// Vertical setpoint horizon.
    pub vertical_time_to_target: f64,
    /// Age of the neighbor states an agent reacts to, seconds.
    pub telemetry_delay: f64,
}

impl Default for FlightParams {
    fn default() -> Self {
        let (tau, dt_ctrl, dt_phys) = (1.119, 0.5, 0.1);
        Self {
            tau,
            dt_phys,
            dt_ctrl,
            time_to_target: lead_time_to_target(tau, dt_ctrl, dt_phys),
            vertical_time_to_target: dt_ctrl,
            telemetry_delay: 0.0,
        }
    }
}

impl FlightParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(ParamError::new("tau", "must be positive"));
        }
        if !(self.dt_phys > 0.0 && self.dt_phys <= self.dt_ctrl && self.dt_ctrl.is_finite()) {
            return Err(ParamError::new("dt_phys", "need 0 < dt_phys <= dt_ctrl"));
        }
        let ratio = self.dt_ctrl / self.dt_phys;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(ParamError::new("dt_ctrl", "must be a multiple of dt_phys"));
        }
        if !(self.time_to_target > 0.0 && self.time_to_target.is_finite()) {
            return Err(ParamError::new("time_to_target", "must be positive"));
        }
        if !(self.vertical_time_to_target > 0.0 && self.vertical_time_to_target.is_finite()) {
            return Err(ParamError::new("vertical_time_to_target", "must be positive"));
        }
        if !(self.telemetry_delay >= 0.0 && self.telemetry_delay.is_finite()) {
            return Err(ParamError::new("telemetry_delay", "must be >= 0"));
        }
        Ok(())
    }

    /// Physics steps per control period.
    pub fn steps_per_tick(&self) -> usize {
        (self.dt_ctrl / self.dt_phys).round() as usize
    }

    fn delay_steps(&self) -> usize {
        (self.telemetry_delay / self.dt_phys).round() as usize
    }
}

/// Converts a command into the next position setpoint.
pub fn command_to_setpoint(
    state: &AgentState,
    cmd: &CommandDelta,
    p: &ModelParams,
    fp: &FlightParams,
) -> Vector3<f64> {
    let heading = wrap_angle(state.heading + cmd.d_heading);
    let speed = (state.horizontal_speed() + cmd.d_speed).clamp(p.v_min, p.v_max);
    let v_z = (state.velocity.z + cmd.d_vz).clamp(-p.v_max, p.v_max);
    state.position
        + Vector3::new(
            fp.time_to_target * speed * heading.cos(),
            fp.time_to_target * speed * heading.sin(),
            fp.vertical_time_to_target * v_z,
        )
}

/// Exact solution of the first-order plant over `dt`, per axis.
pub fn relax(position: Vector3<f64>, setpoint: Vector3<f64>, dt: f64, tau: f64) -> Vector3<f64> {
    setpoint + (position - setpoint) * (-dt / tau).exp()
}

/// Advances one drone by `dt_phys`. Velocity becomes the position difference
/// over the step; heading follows the ground course when the horizontal speed
/// exceeds `heading_min_speed`.
pub fn relax_step(
    state: &mut AgentState,
    setpoint: &Vector3<f64>,
    fp: &FlightParams,
    heading_min_speed: f64,
) {
    let next = relax(state.position, *setpoint, fp.dt_phys, fp.tau);
    state.velocity = (next - state.position) / fp.dt_phys;
    state.position = next;
    if state.horizontal_speed() > heading_min_speed {
        state.heading = wrap_angle(state.velocity.y.atan2(state.velocity.x));
    }
}

/// Initial placement of the swarm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitSpec {
    pub r_init: f64,
    pub z_low: f64,
    pub z_high: f64,
    pub v_init: f64,
    pub min_distance: f64,
}

impl Default for InitSpec {
    fn default() -> Self {
        Self {
            r_init: 10.0,
            z_low: 8.0,
            z_high: 12.0,
            v_init: 1.0,
            min_distance: 1.0,
        }
    }
}

impl InitSpec {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.r_init > 0.0 && self.r_init.is_finite()) {
            return Err(ParamError::new("r_init", "must be positive"));
        }
        if !(self.z_low <= self.z_high && self.z_low.is_finite() && self.z_high.is_finite()) {
            return Err(ParamError::new("z_low", "must not exceed z_high"));
        }
        if !(self.v_init >= 0.0 && self.v_init.is_finite()) {
            return Err(ParamError::new("v_init", "must be >= 0"));
        }
        if !(self.min_distance >= 0.0 && self.min_distance.is_finite()) {
            return Err(ParamError::new("min_distance", "must be >= 0"));
        }
        Ok(())
    }
}

/// Places `n` agents around the arena center, each setpoint at its own
/// position.
pub fn init_swarm(
    n: usize,
    init: &InitSpec,
    arena: &ArenaSpec,
    seed: u64,
) -> Result<Vec<AgentState>, SimError> {
    if n < 2 {
        return Err(ParamError::new("n_drones", "a swarm needs at least 2 agents").into());
    }
    init.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agents: Vec<AgentState> = Vec::with_capacity(n);
    let max_attempts = 10_000 * n;
    let mut attempts = 0;
    while agents.len() < n {
        attempts += 1;
        if attempts > max_attempts {
            return Err(SimError::Placement {
                n,
                min_distance: init.min_distance,
            });
        }
        let r = init.r_init * rng.random::<f64>().sqrt();
        let theta = rng.random::<f64>() * 2.0 * PI;
        let z = init.z_low + (init.z_high - init.z_low) * rng.random::<f64>();
        let position = Vector3::new(
            arena.center[0] + r * theta.cos(),
            arena.center[1] + r * theta.sin(),
            z,
        );
        if agents
            .iter()
            .any(|a| (a.position - position).norm() < init.min_distance)
        {
            continue;
        }
        let heading = wrap_angle(PI - 2.0 * PI * rng.random::<f64>());
        agents.push(AgentState {
            id: agents.len(),
            position,
            velocity: Vector3::new(init.v_init * heading.cos(), init.v_init * heading.sin(), 0.0),
            heading,
        });
    }
    Ok(agents)
}

/// Swarm, intruders and setpoints at one instant.
#[derive(Clone, Debug)]
pub struct World {
    pub time: f64,
    pub step: u64,
    pub swarm: Vec<AgentState>,
    pub setpoints: Vec<Vector3<f64>>,
    pub intruders: Vec<AgentState>,
    /// Past swarm snapshots, newest last, used when telemetry is delayed.
    history: VecDeque<Vec<AgentState>>,
}

/// What happened during one physics step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepReport {
    pub control_tick: bool,
    /// Coincident pairs detected while composing commands, `(focal, other)`.
    pub collisions: Vec<(usize, usize)>,
}

impl World {
    pub fn new(swarm: Vec<AgentState>, intruders: Vec<AgentState>) -> Self {
        let setpoints = swarm.iter().map(|a| a.position).collect();
        Self {
            time: 0.0,
            step: 0,
            swarm,
            setpoints,
            intruders,
            history: VecDeque::new(),
        }
    }

    pub fn barycenter(&self) -> Vector3<f64> {
        let sum: Vector3<f64> = self.swarm.iter().map(|a| a.position).sum();
        sum / self.swarm.len() as f64
    }

    fn perceived_swarm(&self, delay_steps: usize) -> &[AgentState] {
        if delay_steps == 0 || self.history.is_empty() {
            return &self.swarm;
        }
        let idx = self.history.len().saturating_sub(delay_steps + 1);
        &self.history[idx]
    }

    /// Refreshes every setpoint from one shared snapshot.
    pub fn control_tick(
        &mut self,
        p: &ModelParams,
        fp: &FlightParams,
        goal: &NavGoal,
        arena: &ArenaSpec,
    ) -> Vec<(usize, usize)> {
        let delay = fp.delay_steps();
        let neighbors = self.perceived_swarm(delay);
        let mut collisions = Vec::new();
        let mut setpoints = Vec::with_capacity(self.swarm.len());
        for focal in &self.swarm {
            let decision = compose_command(focal, neighbors, &self.intruders, goal, arena, p);
            collisions.extend(decision.collisions.iter().map(|&o| (focal.id, o)));
            setpoints.push(command_to_setpoint(focal, &decision.delta, p, fp));
        }
        self.setpoints = setpoints;
        collisions
    }

    /// Advances the world by one `dt_phys`: a control tick first when one is
    /// due, then the plant. Intruders are moved by the caller.
    pub fn step_world(
        &mut self,
        p: &ModelParams,
        fp: &FlightParams,
        goal: &NavGoal,
        arena: &ArenaSpec,
    ) -> Result<StepReport, SimError> {
        let control_tick = self.step.is_multiple_of(fp.steps_per_tick() as u64);
        let collisions = if control_tick {
            self.control_tick(p, fp, goal, arena)
        } else {
            Vec::new()
        };
        for (agent, setpoint) in self.swarm.iter_mut().zip(&self.setpoints) {
            relax_step(agent, setpoint, fp, p.v_min);
        }
        self.step += 1;
        self.time = self.step as f64 * fp.dt_phys;
        if let Some(bad) = self.swarm.iter().find(|a| !a.is_finite()) {
            return Err(SimError::NonFinite {
                agent: bad.id,
                time: self.time,
            });
        }
        let delay = fp.delay_steps();
        if delay > 0 {
            self.history.push_back(self.swarm.clone());
            while self.history.len() > delay + 1 {
                self.history.pop_front();
            }
        }
        Ok(StepReport {
            control_tick,
            collisions,
        })
    }
}
