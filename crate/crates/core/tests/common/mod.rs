//! Property checks shared by the proptest suite and the acceptance report.
//! Each check returns a description of the first violation.
#![allow(dead_code)]

use std::f64::consts::PI;

use flocksim::flight::{relax_step, FlightParams};
use flocksim::metrics::{dispersion, min_distance, polarization};
use flocksim::model::{
    alignment_turn, attraction_turn, compose_command, pair_influence, select_influential, speed_interaction,
    vertical_interaction, wrap_angle, AgentState, ArenaSpec, ModelParams, NavGoal, PairGeometry, PairTerms,
};
use flocksim::scenario::{run_scenario, RunOptions, ScenarioSpec, SimSetup};
use flocksim::sweep::{run_sweep, transect_csv, SweepSpec};
use flocksim::trajio::{savgol_weights, smooth, write_events, write_log, Akima, LogHeader};
use nalgebra::{Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOL: f64 = 1e-12;

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

pub fn params() -> ModelParams {
    ModelParams {
        gamma_ali: 0.2,
        gamma_att: 0.5,
        ..ModelParams::default()
    }
}

fn geom(psi: f64, dphi: f64, d_z: f64, d_c: f64) -> PairGeometry {
    PairGeometry { psi, dphi, d_z, d_c }
}

/// Agent built from `(x, y, z, heading, speed, vz)`.
pub fn agent(id: usize, s: (f64, f64, f64, f64, f64, f64)) -> AgentState {
    let (x, y, z, h, v, vz) = s;
    AgentState {
        id,
        position: Vector3::new(x, y, z),
        velocity: Vector3::new(v * h.cos(), v * h.sin(), vz),
        heading: h,
    }
}

pub fn random_agent(rng: &mut ChaCha8Rng, id: usize) -> AgentState {
    agent(
        id,
        (
            rng.random_range(-20.0..20.0),
            rng.random_range(-20.0..20.0),
            rng.random_range(5.0..15.0),
            rng.random_range(-PI..PI),
            rng.random_range(0.5..2.5),
            rng.random_range(-0.5..0.5),
        ),
    )
}

pub fn random_swarm(rng: &mut ChaCha8Rng, max: usize) -> Vec<AgentState> {
    let n = rng.random_range(2..=max);
    (0..n).map(|i| random_agent(rng, i)).collect()
}

pub fn interaction_zeros_and_parities(psi: f64, dphi: f64, d_z: f64, d_c: f64) -> Check {
    let p = params();
    let close = |a: f64, b: f64| (a - b).abs() < TOL;

    ensure!(close(speed_interaction(&geom(psi, dphi, d_z, p.d0_v), &p), 0.0), "speed term nonzero at d0_v");
    ensure!(close(speed_interaction(&geom(PI / 2.0, dphi, d_z, d_c), &p), 0.0), "speed term nonzero abeam");
    ensure!(
        close(
            speed_interaction(&geom(psi, dphi, d_z, d_c), &p),
            speed_interaction(&geom(-psi, -dphi, -d_z, d_c), &p)
        ),
        "speed term not even in psi"
    );

    ensure!(close(vertical_interaction(&geom(psi, dphi, p.d0_z, d_c), &p), 0.0), "vertical term nonzero at d0_z");
    ensure!(close(vertical_interaction(&geom(psi, dphi, -p.d0_z, d_c), &p), 0.0), "vertical term nonzero at -d0_z");
    ensure!(close(vertical_interaction(&geom(psi, dphi, 0.0, d_c), &p), 0.0), "vertical term nonzero at d_z = 0");
    ensure!(
        close(
            vertical_interaction(&geom(psi, dphi, d_z, d_c), &p),
            -vertical_interaction(&geom(-psi, dphi, -d_z, d_c), &p)
        ),
        "vertical term not odd in d_z"
    );

    let ali = alignment_turn(&geom(psi, dphi, d_z, d_c), &p);
    ensure!(close(alignment_turn(&geom(psi, 0.0, d_z, d_c), &p), 0.0), "alignment nonzero when parallel");
    ensure!(close(ali, -alignment_turn(&geom(psi, -dphi, d_z, d_c), &p)), "alignment not odd in dphi");
    ensure!(close(ali, alignment_turn(&geom(-psi, dphi, d_z, d_c), &p)), "alignment not even in psi");

    let att = attraction_turn(&geom(psi, dphi, d_z, d_c), &p);
    ensure!(close(attraction_turn(&geom(psi, dphi, d_z, p.d0_att), &p), 0.0), "attraction nonzero at d0_att");
    ensure!(close(attraction_turn(&geom(0.0, dphi, d_z, d_c), &p), 0.0), "attraction nonzero dead ahead");
    ensure!(close(att, -attraction_turn(&geom(-psi, dphi, d_z, d_c), &p)), "attraction not odd in psi");
    Ok(())
}

pub fn metrics_invariant(swarm: &[AgentState], axis: Vector3<f64>, theta: f64, shift: Vector3<f64>) -> Check {
    let rot = Rotation3::from_axis_angle(&Unit::new_normalize(axis), theta);
    let pos: Vec<Vector3<f64>> = swarm.iter().map(|a| a.position).collect();
    let moved: Vec<Vector3<f64>> = pos.iter().map(|p| rot * p + shift).collect();
    let (p0, _) = polarization(swarm.iter().map(|a| a.velocity));
    let (p1, _) = polarization(swarm.iter().map(|a| rot * a.velocity));
    ensure!((p0 - p1).abs() < TOL, "polarization {p0} vs {p1}");
    let (d0, d1) = (dispersion(pos.iter().copied()), dispersion(moved.iter().copied()));
    ensure!((d0 - d1).abs() < TOL, "dispersion {d0} vs {d1}");
    let (m0, m1) = (min_distance(&pos), min_distance(&moved));
    ensure!((m0 - m1).abs() < TOL, "min distance {m0} vs {m1}");
    Ok(())
}

/// Rotating the swarm about the arena center and translating swarm, arena and
/// goal together leaves every agent's command unchanged.
pub fn commands_equivariant(swarm: &[AgentState], theta: f64, shift: Vector3<f64>) -> Check {
    let p = params();
    let goal = NavGoal::default();
    let arena = ArenaSpec::default();
    let c = Vector3::new(arena.center[0], arena.center[1], 0.0);
    let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), theta);
    let moved: Vec<AgentState> = swarm
        .iter()
        .map(|a| AgentState {
            position: rot * (a.position - c) + c + shift,
            velocity: rot * a.velocity,
            heading: wrap_angle(a.heading + theta),
            ..a.clone()
        })
        .collect();
    let moved_arena = ArenaSpec {
        center: [arena.center[0] + shift.x, arena.center[1] + shift.y],
        z_min: arena.z_min + shift.z,
        z_max: arena.z_max + shift.z,
        ..arena.clone()
    };
    let moved_goal = NavGoal {
        z_alt: goal.z_alt + shift.z,
        ..goal.clone()
    };
    for (a, b) in swarm.iter().zip(&moved) {
        let d0 = compose_command(a, swarm, &[], &goal, &arena, &p);
        let d1 = compose_command(b, &moved, &[], &moved_goal, &moved_arena, &p);
        ensure!(d0.neighbors == d1.neighbors, "agent {}: neighbors {:?} vs {:?}", a.id, d0.neighbors, d1.neighbors);
        let diff = [
            d0.delta.d_speed - d1.delta.d_speed,
            d0.delta.d_vz - d1.delta.d_vz,
            d0.delta.d_heading - d1.delta.d_heading,
        ];
        ensure!(diff.iter().all(|d| d.abs() < TOL), "agent {}: command differs by {diff:?}", a.id);
    }
    Ok(())
}

/// Selection against an exhaustive search over all k-subsets of independently
/// scored neighbors.
pub fn selection_matches_brute_force(swarm: &[AgentState], k: usize) -> Check {
    let p = ModelParams {
        k_neighbors: k,
        ..params()
    };
    let focal = &swarm[0];
    let speed = focal.horizontal_speed().max(p.v_min);
    let cands: Vec<(usize, f64, f64)> = swarm[1..]
        .iter()
        .map(|o| {
            let g = PairGeometry::between(focal, o, p.sigma_z).expect("distinct positions");
            let t = PairTerms::evaluate(&g, &p);
            (o.id, pair_influence(t.d_speed, t.d_vz, t.d_heading(), speed), g.d_c)
        })
        .collect();
    let m = cands.len();
    let take = k.min(m);
    let key = |c: &(usize, f64, f64)| (c.1, -c.2, -(c.0 as f64));
    let mut best: Option<Vec<(f64, f64, f64)>> = None;
    let mut best_ids = Vec::new();
    for mask in 0u32..(1 << m) {
        if mask.count_ones() as usize != take {
            continue;
        }
        let mut subset: Vec<&(usize, f64, f64)> = (0..m).filter(|i| mask & (1 << i) != 0).map(|i| &cands[i]).collect();
        subset.sort_by(|a, b| key(b).partial_cmp(&key(a)).unwrap());
        let keys: Vec<(f64, f64, f64)> = subset.iter().map(|c| key(c)).collect();
        if best.as_ref().is_none_or(|b| keys > *b) {
            best = Some(keys);
            best_ids = subset.iter().map(|c| c.0).collect();
        }
    }
    let got: Vec<usize> = select_influential(focal, swarm, &p).iter().map(|s| s.neighbor_id).collect();
    ensure!(got == best_ids, "selected {got:?}, exhaustive search gives {best_ids:?}");
    Ok(())
}

pub fn relax_matches_closed_form(x0: Vector3<f64>, s: Vector3<f64>, steps: usize, tau: f64) -> Check {
    let fp = FlightParams {
        tau,
        ..FlightParams::default()
    };
    let mut a = AgentState::new(0, x0, Vector3::zeros());
    let mut one = a.clone();
    relax_step(&mut one, &s, &fp, 1.0);
    let e = (-fp.dt_phys / tau).exp();
    let err = (one.position - (s + (x0 - s) * e)).amax();
    ensure!(err < TOL, "one step off by {err}");
    for _ in 0..steps {
        relax_step(&mut a, &s, &fp, 1.0);
    }
    let at = |n: usize| s + (x0 - s) * (-(n as f64) * fp.dt_phys / tau).exp();
    let err = (a.position - at(steps)).amax();
    ensure!(err < TOL, "{steps} steps off by {err}");
    let verr = (a.velocity - (at(steps) - at(steps - 1)) / fp.dt_phys).amax();
    ensure!(verr < TOL, "velocity off by {verr}");
    Ok(())
}

fn knots(steps: &[f64]) -> Vec<f64> {
    let mut t = vec![0.0];
    for s in steps {
        t.push(t.last().unwrap() + s);
    }
    t
}

pub fn akima_knots_and_c1(steps: &[f64], values: &[f64]) -> Check {
    let t = knots(steps);
    let y = &values[..t.len()];
    let a = Akima::new(&t, y).map_err(|e| e.to_string())?;
    for (ti, yi) in t.iter().zip(y) {
        ensure!((a.eval(*ti) - yi).abs() < TOL, "misses knot {ti}");
    }
    let h = 1e-10;
    for &ti in &t[1..t.len() - 1] {
        let jump = (a.derivative(ti - h) - a.derivative(ti + h)).abs();
        ensure!(jump < 1e-6, "derivative jumps by {jump} at {ti}");
    }
    Ok(())
}

pub fn akima_reproduces_line(steps: &[f64], slope: f64, icpt: f64) -> Check {
    let t = knots(steps);
    let y: Vec<f64> = t.iter().map(|x| slope * x + icpt).collect();
    let a = Akima::new(&t, &y).map_err(|e| e.to_string())?;
    let end = *t.last().unwrap();
    for i in 0..=50 {
        let x = end * i as f64 / 50.0;
        ensure!((a.eval(x) - (slope * x + icpt)).abs() < 1e-9, "value off at {x}");
        ensure!((a.derivative(x) - slope).abs() < 1e-9, "slope off at {x}");
    }
    Ok(())
}

pub fn savgol_preserves_polynomial(half: usize, degree: usize, coef: &[f64]) -> Check {
    let window = 2 * half + 1;
    let series: Vec<f64> = (0..40)
        .map(|i| {
            let x = i as f64 * 0.1;
            (0..=degree).map(|d| coef[d] * x.powi(d as i32)).sum()
        })
        .collect();
    let out = smooth(&series, window, degree);
    for i in half..series.len() - half {
        ensure!((out[i] - series[i]).abs() < 1e-9, "sample {i} moved by {}", out[i] - series[i]);
    }
    let w = savgol_weights(half, degree);
    for j in 0..w.len() {
        ensure!((w[j] - w[w.len() - 1 - j]).abs() < TOL, "asymmetric weights");
    }
    Ok(())
}

/// Variance of filtered white noise against the sum of squared weights.
pub fn savgol_noise_gain(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (window, degree) in [(5, 2), (9, 2), (11, 3), (7, 0)] {
        let noise: Vec<f64> = (0..20000).map(|_| rng.random::<f64>() - 0.5).collect();
        let out = smooth(&noise, window, degree);
        let half = window / 2;
        let var = |xs: &[f64]| {
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64
        };
        let gain: f64 = savgol_weights(half, degree).iter().map(|w| w * w).sum();
        let ratio = var(&out[half..out.len() - half]) / var(&noise);
        ensure!((ratio / gain - 1.0).abs() < 0.2, "window {window}: ratio {ratio}, gain {gain}");
    }
    Ok(())
}

fn run_bytes(spec: &ScenarioSpec) -> Vec<u8> {
    let out = run_scenario(spec, &SimSetup::default(), &RunOptions::default()).expect("valid scenario");
    let header = LogHeader::new("test", spec.seed, 1.0, 2.0, 0.2);
    let mut bytes = Vec::new();
    write_log(&mut bytes, &header, &out.records).unwrap();
    write_events(&mut bytes, &header, &out.events).unwrap();
    bytes
}

pub fn runs_are_deterministic(seed: u64) -> Check {
    let spec = ScenarioSpec::constant(8, 60.0, 0.15, 0.5, Some(Default::default()), seed);
    ensure!(run_bytes(&spec) == run_bytes(&spec), "two runs with seed {seed} differ");
    Ok(())
}

pub fn sweep_independent_of_workers() -> Check {
    let base = SweepSpec {
        ali_values: vec![0.05, 0.2],
        att_values: vec![0.3, 0.5],
        n_drones: 6,
        runs_per_cell: 3,
        run_duration: 30.0,
        transient_cut: 5.0,
        ..SweepSpec::default()
    };
    let setup = SimSetup::default();
    let mut tables = Vec::new();
    for workers in [1, 2, 4] {
        let spec = SweepSpec { workers, ..base.clone() };
        let cells = run_sweep(&spec, &setup, None).map_err(|e| e.to_string())?;
        tables.push(transect_csv(&cells, "x"));
    }
    ensure!(tables.windows(2).all(|w| w[0] == w[1]), "tables differ between worker counts");
    Ok(())
}
