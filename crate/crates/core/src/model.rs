//! Interaction mathematics of the flocking controller.
//!
//! Everything in here is a pure function of agent snapshots and parameters.
//! A focal agent perceives each neighbor through four relative variables
//! ([`PairGeometry`]), turns them into speed, vertical-speed and heading
//! increments, keeps only its most influential neighbors, and finally adds
//! altitude keeping, vertical damping, intruder avoidance and the arena
//! border.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::ParamError;

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    PI - (PI - angle).rem_euclid(2.0 * PI)
}

/// Interaction gains, equilibrium distances, ranges of action and the
/// controller clamps.
///
/// `Default` reproduces the published parameter table; `gamma_ali` defaults to
/// the lower end of the explored range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub gamma_ali: f64,
    pub gamma_att: f64,
    pub gamma_acc: f64,
    pub gamma_z: f64,
    /// Vertical damping intensity.
    pub gamma_par: f64,
    pub gamma_rep: f64,
    pub gamma_nav: f64,
    /// Vertical navigation (altitude keeping) intensity.
    pub gamma_perp: f64,
    pub d0_v: f64,
    pub d0_z: f64,
    pub d0_ali: f64,
    pub d0_att: f64,
    pub l_acc: f64,
    pub l_z: f64,
    pub l_ali: f64,
    pub l_att: f64,
    pub l_rep: f64,
    pub a_z: f64,
    pub sigma_z: f64,
    pub alpha_ali: f64,
    pub alpha_att: f64,
    pub k_neighbors: usize,
    pub v_min: f64,
    pub v_max: f64,
    /// Largest heading change per control tick, radians.
    pub dphi_max: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            gamma_ali: 0.025,
            gamma_att: 0.5,
            gamma_acc: 0.15,
            gamma_z: 0.55,
            gamma_par: 0.1,
            gamma_rep: 5.5,
            gamma_nav: 0.75,
            gamma_perp: 0.25,
            d0_v: 7.5,
            d0_z: 2.6,
            d0_ali: 8.0,
            d0_att: 6.5,
            l_acc: 9.5,
            l_z: 10.5,
            l_ali: 20.5,
            l_att: 14.0,
            l_rep: 12.0,
            a_z: 0.75,
            sigma_z: std::f64::consts::SQRT_2,
            alpha_ali: 0.6,
            alpha_att: 0.48,
            k_neighbors: 1,
            v_min: 1.0,
            v_max: 2.0,
            dphi_max: 0.2,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        let all = [
            ("gamma_ali", self.gamma_ali),
            ("gamma_att", self.gamma_att),
            ("gamma_acc", self.gamma_acc),
            ("gamma_z", self.gamma_z),
            ("gamma_par", self.gamma_par),
            ("gamma_rep", self.gamma_rep),
            ("gamma_nav", self.gamma_nav),
            ("gamma_perp", self.gamma_perp),
            ("d0_v", self.d0_v),
            ("d0_z", self.d0_z),
            ("d0_ali", self.d0_ali),
            ("d0_att", self.d0_att),
            ("alpha_ali", self.alpha_ali),
            ("alpha_att", self.alpha_att),
            ("dphi_max", self.dphi_max),
        ];
        for (name, value) in all {
            if !value.is_finite() {
                return Err(ParamError::new(name, "must be finite"));
            }
        }
        let ranges = [
            ("l_acc", self.l_acc),
            ("l_z", self.l_z),
            ("l_ali", self.l_ali),
            ("l_att", self.l_att),
            ("l_rep", self.l_rep),
            ("a_z", self.a_z),
        ];
        for (name, value) in ranges {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ParamError::new(name, "must be positive"));
            }
        }
        if !(self.sigma_z >= 1.0 && self.sigma_z.is_finite()) {
            return Err(ParamError::new("sigma_z", "must be >= 1"));
        }
        if !(self.v_min > 0.0 && self.v_min < self.v_max && self.v_max.is_finite()) {
            return Err(ParamError::new("v_min", "need 0 < v_min < v_max"));
        }
        if !(1..=2).contains(&self.k_neighbors) {
            return Err(ParamError::new("k_neighbors", "must be 1 or 2"));
        }
        if self.dphi_max <= 0.0 {
            return Err(ParamError::new("dphi_max", "must be positive"));
        }
        Ok(())
    }

    /// Clamp for the speed fed to the influence score and the damping term.
    fn floor_speed(&self, v: f64) -> f64 {
        v.max(self.v_min)
    }
}

/// Position, velocity and heading (ground course) of one agent.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentState {
    pub id: usize,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub heading: f64,
}

impl AgentState {
    /// Builds a state whose heading is the ground course of `velocity`.
    /// A zero horizontal velocity gives heading 0.
    pub fn new(id: usize, position: Vector3<f64>, velocity: Vector3<f64>) -> Self {
        let heading = if velocity.x == 0.0 && velocity.y == 0.0 {
            0.0
        } else {
            wrap_angle(velocity.y.atan2(velocity.x))
        };
        Self {
            id,
            position,
            velocity,
            heading,
        }
    }

    pub fn horizontal_speed(&self) -> f64 {
        self.velocity.x.hypot(self.velocity.y)
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|c| c.is_finite())
            && self.velocity.iter().all(|c| c.is_finite())
            && self.heading.is_finite()
    }
}

/// Returned when two agents occupy the same point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("agents {focal} and {other} are coincident")]
pub struct DegeneratePair {
    pub focal: usize,
    pub other: usize,
}

/// Relative state of `other` as perceived by `focal`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairGeometry {
    /// Bearing of the neighbor relative to the focal heading.
    pub psi: f64,
    /// Heading difference, neighbor minus focal.
    pub dphi: f64,
    /// Signed vertical separation, neighbor minus focal.
    pub d_z: f64,
    /// Distance with the vertical axis divided by `sigma_z`.
    pub d_c: f64,
}

impl PairGeometry {
    pub fn between(
        focal: &AgentState,
        other: &AgentState,
        sigma_z: f64,
    ) -> Result<Self, DegeneratePair> {
        let delta = other.position - focal.position;
        let d_c = (delta.x * delta.x + delta.y * delta.y + (delta.z / sigma_z).powi(2)).sqrt();
        if d_c == 0.0 {
            return Err(DegeneratePair {
                focal: focal.id,
                other: other.id,
            });
        }
        // Bearing is undefined for a neighbor straight above or below; treat it as dead ahead.
        let bearing = if delta.x == 0.0 && delta.y == 0.0 {
            focal.heading
        } else {
            delta.y.atan2(delta.x)
        };
        Ok(Self {
            psi: wrap_angle(bearing - focal.heading),
            dphi: wrap_angle(other.heading - focal.heading),
            d_z: delta.z,
            d_c,
        })
    }

    /// Horizontal distance recovered from the weighted distance.
    pub fn horizontal_distance(&self, sigma_z: f64) -> f64 {
        (self.d_c * self.d_c - (self.d_z / sigma_z).powi(2))
            .max(0.0)
            .sqrt()
    }
}

fn gaussian(d: f64, range: f64) -> f64 {
    (-(d / range).powi(2)).exp()
}

/// Longitudinal speed increment induced by one neighbor.
pub fn speed_interaction(g: &PairGeometry, p: &ModelParams) -> f64 {
    p.gamma_acc * g.psi.cos() * (p.d0_v - g.d_c) / (1.0 + g.d_c / p.l_acc)
}

/// Vertical speed increment induced by one neighbor.
///
/// The agent is pushed away from a neighbor closer than `d0_z` in altitude and
/// pulled toward one that is farther, so the response is odd in `d_z` and
/// vanishes at `|d_z| = d0_z`.
pub fn vertical_interaction(g: &PairGeometry, p: &ModelParams) -> f64 {
    if g.d_z == 0.0 {
        return 0.0;
    }
    p.gamma_z
        * g.d_z.signum()
        * ((g.d_z.abs() - p.d0_z) / p.a_z).tanh()
        * gaussian(g.d_c, p.l_z)
}

/// Heading increment aligning the focal agent with a neighbor.
pub fn alignment_turn(g: &PairGeometry, p: &ModelParams) -> f64 {
    p.gamma_ali
        * g.dphi.sin()
        * (1.0 + p.alpha_ali * g.psi.cos())
        * (g.d_c + p.d0_ali)
        * gaussian(g.d_c, p.l_ali)
}

/// Heading increment turning the focal agent toward (or away from) a neighbor.
pub fn attraction_turn(g: &PairGeometry, p: &ModelParams) -> f64 {
    p.gamma_att * g.psi.sin() * (1.0 - p.alpha_att * g.psi.cos()) * (g.d_c - p.d0_att)
        / (1.0 + (g.d_c / p.l_att).powi(2))
}

/// The pairwise increments a neighbor would contribute if selected.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PairTerms {
    pub d_speed: f64,
    pub d_vz: f64,
    pub alignment: f64,
    pub attraction: f64,
}

impl PairTerms {
    pub fn evaluate(g: &PairGeometry, p: &ModelParams) -> Self {
        Self {
            d_speed: speed_interaction(g, p),
            d_vz: vertical_interaction(g, p),
            alignment: alignment_turn(g, p),
            attraction: attraction_turn(g, p),
        }
    }

    pub fn d_heading(&self) -> f64 {
        self.alignment + self.attraction
    }
}

/// Magnitude of a neighbor's influence: speed, vertical speed and the lateral
/// speed implied by the heading change, combined as a Euclidean norm.
pub fn pair_influence(d_speed: f64, d_vz: f64, d_heading: f64, speed: f64) -> f64 {
    let lateral = d_heading * speed;
    (d_speed * d_speed + d_vz * d_vz + lateral * lateral).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InfluenceScore {
    pub neighbor_id: usize,
    pub score: f64,
    pub d_c: f64,
    pub terms: PairTerms,
}

/// Ranks candidate neighbors: higher score first, then shorter weighted
/// distance, then lower id.
fn rank(a: &InfluenceScore, b: &InfluenceScore) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.d_c.total_cmp(&b.d_c))
        .then(a.neighbor_id.cmp(&b.neighbor_id))
}

/// Scores every non-degenerate neighbor. Degenerate pairs are reported in the
/// second vector.
pub fn score_neighbors(
    focal: &AgentState,
    others: &[AgentState],
    p: &ModelParams,
) -> (Vec<InfluenceScore>, Vec<usize>) {
    let speed = p.floor_speed(focal.horizontal_speed());
    let mut scores = Vec::with_capacity(others.len());
    let mut degenerate = Vec::new();
    for other in others.iter().filter(|o| o.id != focal.id) {
        match PairGeometry::between(focal, other, p.sigma_z) {
            Ok(g) => {
                let terms = PairTerms::evaluate(&g, p);
                scores.push(InfluenceScore {
                    neighbor_id: other.id,
                    score: pair_influence(terms.d_speed, terms.d_vz, terms.d_heading(), speed),
                    d_c: g.d_c,
                    terms,
                });
            }
            Err(e) => degenerate.push(e.other),
        }
    }
    (scores, degenerate)
}

/// The `k_neighbors` most influential neighbors, best first.
pub fn select_influential(
    focal: &AgentState,
    others: &[AgentState],
    p: &ModelParams,
) -> Vec<InfluenceScore> {
    let (mut scores, _) = score_neighbors(focal, others, p);
    scores.sort_by(rank);
    scores.truncate(p.k_neighbors);
    scores
}

/// Navigation goal: target altitude and an optional desired heading.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NavGoal {
    pub z_alt: f64,
    pub heading_goal: Option<f64>,
}

impl Default for NavGoal {
    fn default() -> Self {
        Self {
            z_alt: 10.0,
            heading_goal: None,
        }
    }
}

/// Altitude keeping: drives `z` back toward `z_alt`.
pub fn nav_vertical(z: f64, goal: &NavGoal, p: &ModelParams) -> f64 {
    -p.gamma_perp * ((z - goal.z_alt) / p.a_z).tanh()
}

pub fn nav_heading(phi: f64, goal: &NavGoal, p: &ModelParams) -> f64 {
    match goal.heading_goal {
        Some(target) => p.gamma_nav * wrap_angle(target - phi).sin(),
        None => 0.0,
    }
}

/// Turn away from an intruder; `g_ik` is the intruder as seen by the agent.
pub fn intruder_turn(g_ik: &PairGeometry, p: &ModelParams) -> f64 {
    let d = g_ik.horizontal_distance(p.sigma_z);
    -p.gamma_rep * g_ik.psi.sin() * (1.0 + g_ik.psi.cos()) * gaussian(d, p.l_rep)
}

/// Vertical escape from an intruder: climb when above it, descend when below.
pub fn intruder_vertical(g_ik: &PairGeometry, p: &ModelParams) -> f64 {
    let away = -g_ik.d_z;
    p.gamma_z * (away / p.a_z).tanh() * gaussian(g_ik.d_c, p.l_z)
}

/// Damps vertical speed relative to the horizontal speed, which is floored at
/// `v_min`.
pub fn vertical_damping(v_z: f64, v: f64, p: &ModelParams) -> f64 {
    let ratio = (v_z / p.floor_speed(v)).clamp(-FRAC_PI_2, FRAC_PI_2);
    -p.gamma_par * ratio.sin()
}

/// Circular arena with an altitude band.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArenaSpec {
    pub center: [f64; 2],
    pub radius: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub wall_gain: f64,
    pub wall_range: f64,
}

impl Default for ArenaSpec {
    fn default() -> Self {
        Self {
            center: [0.0, 0.0],
            radius: 25.0,
            z_min: 5.0,
            z_max: 15.0,
            wall_gain: 5.5,
            wall_range: 10.0,
        }
    }
}

impl ArenaSpec {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(ParamError::new("radius", "must be positive"));
        }
        if !(self.z_min < self.z_max) {
            return Err(ParamError::new("z_min", "must be below z_max"));
        }
        if !(self.wall_range > 0.0) {
            return Err(ParamError::new("wall_range", "must be positive"));
        }
        if !self.wall_gain.is_finite() || !self.center.iter().all(|c| c.is_finite()) {
            return Err(ParamError::new("wall_gain", "must be finite"));
        }
        Ok(())
    }

    /// Horizontal offset from the arena center.
    pub fn offset(&self, position: &Vector3<f64>) -> (f64, f64) {
        (position.x - self.center[0], position.y - self.center[1])
    }

    /// Signed horizontal distance to the wall; negative outside.
    pub fn wall_distance(&self, position: &Vector3<f64>) -> f64 {
        let (dx, dy) = self.offset(position);
        self.radius - dx.hypot(dy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BorderTerms {
    pub d_heading: f64,
    /// Multiplies alignment and attraction.
    pub attenuation: f64,
}

/// Wall repulsion and the attenuation of social turning near the border.
pub fn border_terms(state: &AgentState, arena: &ArenaSpec) -> BorderTerms {
    let (dx, dy) = arena.offset(&state.position);
    let d_wall = arena.wall_distance(&state.position);
    if d_wall <= 0.0 {
        let to_center = (-dy).atan2(-dx);
        return BorderTerms {
            d_heading: wrap_angle(to_center - state.heading),
            attenuation: 0.0,
        };
    }
    let proximity = gaussian(d_wall, arena.wall_range);
    let d_heading = if dx == 0.0 && dy == 0.0 {
        0.0
    } else {
        let psi = wrap_angle(dy.atan2(dx) - state.heading);
        -arena.wall_gain * psi.sin() * (1.0 + psi.cos()) * proximity
    };
    BorderTerms {
        d_heading,
        attenuation: 1.0 - proximity,
    }
}

/// Per-tick increments of speed, vertical speed and heading.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CommandDelta {
    pub d_speed: f64,
    pub d_vz: f64,
    pub d_heading: f64,
}

impl CommandDelta {
    pub fn is_finite(&self) -> bool {
        self.d_speed.is_finite() && self.d_vz.is_finite() && self.d_heading.is_finite()
    }
}

/// A composed command together with what the agent reacted to.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub delta: CommandDelta,
    /// Selected neighbors, most influential first.
    pub neighbors: Vec<usize>,
    /// Neighbors coincident with the focal agent.
    pub collisions: Vec<usize>,
}

/// Composes the full command of `focal` from a simultaneous snapshot.
///
/// `swarm` may contain the focal agent itself; it is skipped by id.
pub fn compose_command(
    focal: &AgentState,
    swarm: &[AgentState],
    intruders: &[AgentState],
    goal: &NavGoal,
    arena: &ArenaSpec,
    p: &ModelParams,
) -> Decision {
    let (mut scores, collisions) = score_neighbors(focal, swarm, p);
    scores.sort_by(rank);
    scores.truncate(p.k_neighbors);

    let mut social = PairTerms::default();
    for s in &scores {
        social.d_speed += s.terms.d_speed;
        social.d_vz += s.terms.d_vz;
        social.alignment += s.terms.alignment;
        social.attraction += s.terms.attraction;
    }

    let speed = focal.horizontal_speed();
    let mut d_vz = social.d_vz
        + vertical_damping(focal.velocity.z, speed, p)
        + nav_vertical(focal.position.z, goal, p);
    let mut d_heading = nav_heading(focal.heading, goal, p);

    for intruder in intruders {
        if let Ok(g) = PairGeometry::between(focal, intruder, p.sigma_z) {
            d_heading += intruder_turn(&g, p);
            d_vz += intruder_vertical(&g, p);
        }
    }

    let border = border_terms(focal, arena);
    d_heading += border.attenuation * social.d_heading() + border.d_heading;

    let reference = speed.clamp(p.v_min, p.v_max);
    let d_speed = (speed + social.d_speed).clamp(p.v_min, p.v_max) - reference;

    Decision {
        delta: CommandDelta {
            d_speed,
            d_vz,
            d_heading: d_heading.clamp(-p.dphi_max, p.dphi_max),
        },
        neighbors: scores.iter().map(|s| s.neighbor_id).collect(),
        collisions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    fn agent(id: usize, pos: [f64; 3], heading: f64, speed: f64) -> AgentState {
        AgentState {
            id,
            position: Vector3::from(pos),
            velocity: Vector3::new(speed * heading.cos(), speed * heading.sin(), 0.0),
            heading,
        }
    }

    fn geom(psi: f64, dphi: f64, d_z: f64, d_c: f64) -> PairGeometry {
        PairGeometry { psi, dphi, d_z, d_c }
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert_eq!(wrap_angle(0.0), 0.0);
    }

    #[test]
    fn defaults_are_valid() {
        ModelParams::default().validate().unwrap();
        ArenaSpec::default().validate().unwrap();
    }

    #[test]
    fn invalid_params_name_the_field() {
        let p = ModelParams {
            k_neighbors: 3,
            ..Default::default()
        };
        assert_eq!(p.validate().unwrap_err().field, "k_neighbors");
        let p = ModelParams {
            l_att: 0.0,
            ..Default::default()
        };
        assert_eq!(p.validate().unwrap_err().field, "l_att");
        let p = ModelParams {
            sigma_z: 0.5,
            ..Default::default()
        };
        assert_eq!(p.validate().unwrap_err().field, "sigma_z");
    }

    #[test]
    fn geometry_axis_aligned_bearing() {
        let i = agent(0, [0.0, 0.0, 0.0], 0.0, 1.0);
        let j = agent(1, [0.0, 5.0, 0.0], 0.0, 1.0);
        let g = PairGeometry::between(&i, &j, SQRT_2).unwrap();
        assert!((g.psi - FRAC_PI_2).abs() < 1e-15);
        assert!((g.d_c - 5.0).abs() < 1e-15);
        assert_eq!(g.dphi, 0.0);
    }

    #[test]
    fn geometry_weighted_distance() {
        let i = agent(0, [0.0, 0.0, 0.0], 0.3, 1.0);
        let j = agent(1, [3.0, 4.0, SQRT_2], 0.3, 1.0);
        let g = PairGeometry::between(&i, &j, SQRT_2).unwrap();
        // 9 + 16 + 1
        assert!((g.d_c - 26f64.sqrt()).abs() < 1e-12);
        assert!((g.d_c - 5.0990).abs() < 1e-4);
        assert_eq!(g.d_z, SQRT_2);
    }

    #[test]
    fn geometry_degenerate() {
        let i = agent(4, [1.0, 2.0, 3.0], 0.0, 1.0);
        let j = agent(7, [1.0, 2.0, 3.0], 1.0, 1.0);
        let e = PairGeometry::between(&i, &j, SQRT_2).unwrap_err();
        assert_eq!(e, DegeneratePair { focal: 4, other: 7 });
    }

    #[test]
    fn speed_interaction_values() {
        let p = ModelParams::default();
        assert_eq!(speed_interaction(&geom(0.4, 0.0, 0.0, 7.5), &p), 0.0);
        assert!(speed_interaction(&geom(FRAC_PI_2, 0.0, 0.0, 3.0), &p).abs() < 1e-16);
        let v = speed_interaction(&geom(0.0, 0.0, 0.0, 17.0), &p);
        assert!((v - (-0.5108)).abs() < 1e-4, "{v}");
    }

    #[test]
    fn vertical_interaction_values() {
        let p = ModelParams::default();
        assert_eq!(vertical_interaction(&geom(0.0, 0.0, 2.6, 3.0), &p), 0.0);
        let v = vertical_interaction(&geom(0.0, 0.0, 3.35, 2.3688), &p);
        assert!((v - 0.3981).abs() < 1e-4, "{v}");
        assert!(vertical_interaction(&geom(0.0, 0.0, 1.0, 1e6), &p).abs() < 1e-300);
        // Below the equilibrium separation the agent moves away from its neighbor.
        assert!(vertical_interaction(&geom(0.0, 0.0, 1.0, 2.0), &p) < 0.0);
        assert!(vertical_interaction(&geom(0.0, 0.0, -1.0, 2.0), &p) > 0.0);
    }

    #[test]
    fn alignment_values() {
        let p = ModelParams {
            gamma_ali: 0.4,
            ..Default::default()
        };
        assert_eq!(alignment_turn(&geom(0.3, 0.0, 0.0, 4.0), &p), 0.0);
        let v = alignment_turn(&geom(0.0, FRAC_PI_2, 0.0, 8.0), &p);
        assert!((v - 8.7935).abs() < 1e-4, "{v}");
        let w = alignment_turn(&geom(0.0, -FRAC_PI_2, 0.0, 8.0), &p);
        assert_eq!(v, -w);
    }

    #[test]
    fn attraction_values() {
        let p = ModelParams::default();
        assert_eq!(attraction_turn(&geom(0.0, 0.0, 0.0, 10.0), &p), 0.0);
        assert_eq!(attraction_turn(&geom(1.0, 0.0, 0.0, 6.5), &p), 0.0);
        let v = attraction_turn(&geom(FRAC_PI_2, 0.0, 0.0, 10.0), &p);
        assert!((v - 1.1588).abs() < 1e-4, "{v}");
    }

    #[test]
    fn influence_values() {
        assert_eq!(pair_influence(0.0, 0.0, 0.0, 1.0), 0.0);
        assert!((pair_influence(0.3, 0.4, 0.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((pair_influence(0.0, 0.0, 0.5, 2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn select_single_neighbor() {
        let p = ModelParams::default();
        let focal = agent(0, [0.0, 0.0, 10.0], 0.0, 1.0);
        let others = vec![agent(1, [4.0, 3.0, 10.0], 1.0, 1.0)];
        let sel = select_influential(&focal, &others, &p);
        assert_eq!(sel.len(), 1);
        assert_eq!(sel[0].neighbor_id, 1);
    }

    #[test]
    fn select_tie_breaks_on_id() {
        let p = ModelParams {
            k_neighbors: 1,
            ..Default::default()
        };
        let focal = agent(0, [0.0, 0.0, 10.0], 0.0, 1.0);
        // Mirror images across the heading axis with mirrored headings give identical
        // scores and distances.
        let others = vec![
            agent(5, [4.0, -3.0, 10.0], -0.5, 1.0),
            agent(2, [4.0, 3.0, 10.0], 0.5, 1.0),
        ];
        let sel = select_influential(&focal, &others, &p);
        assert_eq!(sel[0].neighbor_id, 2);
    }

    #[test]
    fn nav_vertical_values() {
        let p = ModelParams::default();
        let goal = NavGoal::default();
        assert_eq!(nav_vertical(10.0, &goal, &p), 0.0);
        let v = nav_vertical(10.75, &goal, &p);
        assert!((v - (-0.25 * 1f64.tanh())).abs() < 1e-15);
        assert!((v + 0.1904).abs() < 1e-4);
        assert_eq!(nav_vertical(9.25, &goal, &p), -v);
    }

    #[test]
    fn nav_heading_values() {
        let p = ModelParams::default();
        let mut goal = NavGoal {
            z_alt: 10.0,
            heading_goal: Some(0.7),
        };
        assert_eq!(nav_heading(0.7, &goal, &p), 0.0);
        goal.heading_goal = Some(0.2 + FRAC_PI_2);
        assert!((nav_heading(0.2, &goal, &p) - 0.75).abs() < 1e-15);
        goal.heading_goal = None;
        assert_eq!(nav_heading(0.2, &goal, &p), 0.0);
    }

    #[test]
    fn intruder_turn_values() {
        let p = ModelParams::default();
        assert!(intruder_turn(&geom(PI, 0.0, 0.0, 5.0), &p).abs() < 1e-15);
        let v = intruder_turn(&geom(FRAC_PI_2, 0.0, 0.0, 12.0), &p);
        assert!((v.abs() - 2.0233).abs() < 1e-4, "{v}");
        // Intruder on the left makes the agent turn right.
        assert!(v < 0.0);
        assert!(intruder_turn(&geom(1.0, 0.0, 0.0, 1e4), &p).abs() < 1e-300);
    }

    #[test]
    fn intruder_vertical_values() {
        let p = ModelParams::default();
        assert_eq!(intruder_vertical(&geom(0.0, 0.0, 0.0, 3.0), &p), 0.0);
        // Agent 0.75 m above the intruder: d_z (intruder minus agent) is -0.75.
        let v = intruder_vertical(&geom(0.0, 0.0, -0.75, 0.5303), &p);
        assert!((v - 0.4178).abs() < 1e-4, "{v}");
        let w = intruder_vertical(&geom(0.0, 0.0, 0.75, 0.5303), &p);
        assert_eq!(v, -w);
    }

    #[test]
    fn damping_values() {
        let p = ModelParams::default();
        assert_eq!(vertical_damping(0.0, 2.0, &p), 0.0);
        let v = vertical_damping(1.0, 2.0, &p);
        assert!((v - (-0.1 * 0.5f64.sin())).abs() < 1e-15);
        assert!((v + 0.04794).abs() < 1e-5);
        assert_eq!(vertical_damping(-1.0, 2.0, &p), -v);
    }

    #[test]
    fn border_center_and_wall() {
        let arena = ArenaSpec::default();
        let c = border_terms(&agent(0, [0.0, 0.0, 10.0], 0.4, 1.0), &arena);
        assert_eq!(c.d_heading, 0.0);
        assert!((c.attenuation - 1.0).abs() < 2e-3);

        let on_wall = border_terms(&agent(0, [25.0, 0.0, 10.0], 0.0, 1.0), &arena);
        assert_eq!(on_wall.attenuation, 0.0);

        let at_range = border_terms(&agent(0, [15.0, 0.0, 10.0], FRAC_PI_2, 1.0), &arena);
        assert!((at_range.attenuation - (1.0 - (-1f64).exp())).abs() < 1e-12);
        assert!((at_range.attenuation - 0.6321).abs() < 1e-4);
        // Wall on the right of an agent heading north: turn left.
        assert!(at_range.d_heading > 0.0);
    }

    #[test]
    fn border_outside_points_home() {
        let arena = ArenaSpec::default();
        let b = border_terms(&agent(0, [30.0, 0.0, 10.0], FRAC_PI_2, 1.0), &arena);
        assert_eq!(b.attenuation, 0.0);
        assert!((b.d_heading - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn lone_agent_at_rest_point() {
        let p = ModelParams::default();
        let focal = agent(0, [0.0, 0.0, 10.0], 0.3, 1.5);
        let d = compose_command(
            &focal,
            &[],
            &[],
            &NavGoal::default(),
            &ArenaSpec::default(),
            &p,
        );
        assert_eq!(d.delta, CommandDelta::default());
        assert!(d.neighbors.is_empty());
    }

    #[test]
    fn pair_social_terms_pass_through() {
        let p = ModelParams {
            gamma_ali: 0.05,
            dphi_max: 10.0,
            v_max: 100.0,
            v_min: 0.01,
            ..Default::default()
        };
        let arena = ArenaSpec {
            radius: 1e6,
            ..Default::default()
        };
        let focal = agent(0, [0.0, 0.0, 10.0], 0.0, 1.5);
        let other = agent(1, [3.0, 2.0, 11.0], 0.4, 1.0);
        let g = PairGeometry::between(&focal, &other, p.sigma_z).unwrap();
        let t = PairTerms::evaluate(&g, &p);
        let d = compose_command(&focal, &[focal.clone(), other], &[], &NavGoal::default(), &arena, &p);
        assert_eq!(d.neighbors, vec![1]);
        assert!((d.delta.d_speed - t.d_speed).abs() < 1e-12);
        assert!((d.delta.d_heading - t.d_heading()).abs() < 1e-12);
        assert!((d.delta.d_vz - t.d_vz).abs() < 1e-12);
    }

    #[test]
    fn coincident_neighbor_is_flagged() {
        let p = ModelParams::default();
        let focal = agent(0, [0.0, 0.0, 10.0], 0.0, 1.5);
        let twin = agent(1, [0.0, 0.0, 10.0], 0.0, 1.5);
        let d = compose_command(&focal, &[twin], &[], &NavGoal::default(), &ArenaSpec::default(), &p);
        assert_eq!(d.collisions, vec![1]);
        assert!(d.neighbors.is_empty());
        assert!(d.delta.is_finite());
    }

    #[test]
    fn heading_and_speed_clamped() {
        let p = ModelParams {
            gamma_ali: 0.4,
            ..Default::default()
        };
        let focal = agent(0, [0.0, 0.0, 10.0], 0.0, 1.9);
        let other = agent(1, [2.0, 0.0, 10.0], FRAC_PI_2, 1.0);
        let d = compose_command(&focal, &[other], &[], &NavGoal::default(), &ArenaSpec::default(), &p);
        assert_eq!(d.delta.d_heading, p.dphi_max);
        // Neighbor 2 m ahead: accelerate, but only up to v_max.
        assert!((1.9 + d.delta.d_speed - p.v_max).abs() < 1e-12);
    }
}
