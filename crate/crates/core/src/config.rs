//! TOML run configuration with dotted-path overrides.
//!
//! Every field has a default, so an empty file is a valid configuration. The
//! materialized form written next to outputs lists every value explicitly.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ParamError;
use crate::flight::{FlightParams, InitSpec};
use crate::model::{ArenaSpec, ModelParams, NavGoal};
use crate::scenario::{
    gain_range, make_baseline, make_switching, GainSchedule, IntruderPolicy, ScenarioKind, ScenarioSpec,
    SimSetup,
};
use crate::sweep::SweepSpec;

/// Scenario description from which a [`ScenarioSpec`] is generated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub n_drones: usize,
    pub seed: u64,
    pub gamma_att: f64,
    /// Baseline: first, last and step of the alignment gain staircase.
    pub ali_start: f64,
    pub ali_end: f64,
    pub ali_step: f64,
    /// Seconds per segment for baseline and switching.
    pub dwell: f64,
    /// Switching: the two alternating alignment gains.
    pub low: f64,
    pub high: f64,
    pub cycles: usize,
    /// Intruder: constant alignment gain and run length.
    pub gamma_ali: f64,
    pub duration: f64,
    pub intruder: IntruderPolicy,
    /// Seconds dropped after each gain change before aggregating.
    pub transient_cut: f64,
    /// Explicit schedule; replaces the generated one when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<GainSchedule>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::Baseline,
            n_drones: 10,
            seed: 1,
            gamma_att: 0.5,
            ali_start: 0.025,
            ali_end: 0.4,
            ali_step: 0.025,
            dwell: 60.0,
            low: 0.075,
            high: 0.4,
            cycles: 5,
            gamma_ali: 0.225,
            duration: 300.0,
            intruder: IntruderPolicy::default(),
            transient_cut: 10.0,
            schedule: None,
        }
    }
}

impl ScenarioConfig {
    pub fn to_spec(&self) -> Result<ScenarioSpec, ParamError> {
        let mut spec = match self.kind {
            ScenarioKind::Baseline => make_baseline(
                self.n_drones,
                self.gamma_att,
                (self.ali_start, self.ali_end),
                self.ali_step,
                self.dwell,
            )?,
            ScenarioKind::Switching => make_switching(
                self.n_drones,
                self.gamma_att,
                self.low,
                self.high,
                self.dwell,
                self.cycles,
            )?,
            ScenarioKind::Intruder => ScenarioSpec::constant(
                self.n_drones,
                self.duration,
                self.gamma_ali,
                self.gamma_att,
                Some(self.intruder.clone()),
                self.seed,
            ),
        };
        if let Some(schedule) = &self.schedule {
            spec.schedule = schedule.clone();
            spec.duration = schedule.total_duration();
        }
        spec.seed = self.seed;
        spec.validate()?;
        if !(self.transient_cut >= 0.0) {
            return Err(ParamError::new("scenario.transient_cut", "must be >= 0"));
        }
        Ok(spec)
    }
}

/// Axis of a sweep grid: an explicit list or an inclusive range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridAxis {
    List(Vec<f64>),
    Range { start: f64, end: f64, step: f64 },
}

impl GridAxis {
    pub fn values(&self) -> Result<Vec<f64>, ParamError> {
        match self {
            GridAxis::List(v) => Ok(v.clone()),
            GridAxis::Range { start, end, step } => {
                if !(*step > 0.0 && start <= end) {
                    return Err(ParamError::new("sweep.grid", "range needs step > 0 and start <= end"));
                }
                Ok(gain_range(*start, *end, *step))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub ali: GridAxis,
    pub att: GridAxis,
    pub n_drones: usize,
    pub runs_per_cell: usize,
    pub run_duration: f64,
    pub base_seed: u64,
    pub workers: usize,
    pub transient_cut: f64,
    pub sample_rate: f64,
    pub with_intruder: bool,
    pub intruder: IntruderPolicy,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let s = SweepSpec::default();
        Self {
            ali: GridAxis::Range {
                start: 0.025,
                end: 0.4,
                step: 0.025,
            },
            att: GridAxis::List(s.att_values),
            n_drones: s.n_drones,
            runs_per_cell: s.runs_per_cell,
            run_duration: s.run_duration,
            base_seed: s.base_seed,
            workers: s.workers,
            transient_cut: s.transient_cut,
            sample_rate: s.sample_rate,
            with_intruder: false,
            intruder: IntruderPolicy::default(),
        }
    }
}

impl SweepConfig {
    pub fn to_spec(&self) -> Result<SweepSpec, ParamError> {
        let spec = SweepSpec {
            ali_values: self.ali.values()?,
            att_values: self.att.values()?,
            n_drones: self.n_drones,
            runs_per_cell: self.runs_per_cell,
            run_duration: self.run_duration,
            base_seed: self.base_seed,
            workers: self.workers,
            transient_cut: self.transient_cut,
            sample_rate: self.sample_rate,
            intruder: self.with_intruder.then(|| self.intruder.clone()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    /// Trajectory log rate, Hz.
    pub log_rate: f64,
    /// Rate of the observables used for statistics, Hz.
    pub sample_rate: f64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            log_rate: 1.0,
            sample_rate: 10.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelParams,
    pub flight: FlightParams,
    pub arena: ArenaSpec,
    pub init: InitSpec,
    pub goal: NavGoal,
    pub scenario: ScenarioConfig,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("override `{0}`: expected key=value")]
    Override(String),
    #[error(transparent)]
    Param(#[from] ParamError),
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))
    }

    /// Parses `text` and applies `key.path=value` overrides in order.
    pub fn load(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut value: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: RunConfig = value
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        cfg.setup().validate()?;
        Ok(cfg)
    }

    /// Every value spelled out.
    pub fn materialized(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    /// Short stable digest of the materialized configuration.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.materialized().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn setup(&self) -> SimSetup {
        SimSetup {
            model: self.model.clone(),
            flight: self.flight.clone(),
            arena: self.arena.clone(),
            init: self.init.clone(),
            goal: self.goal.clone(),
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_override(root: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(spec.to_string()))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(ConfigError::Override(spec.to_string()));
    }
    let mut table = root;
    for k in &keys[..keys.len() - 1] {
        let entry = table
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::Override(spec.to_string()))?;
    }
    table.insert(keys[keys.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_defaults() {
        let cfg = RunConfig::load("", &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn materialized_round_trip() {
        let cfg = RunConfig::load("[model]\ngamma_ali = 0.3\n", &["scenario.kind=switching".into()]).unwrap();
        let text = cfg.materialized();
        let back = RunConfig::load(&text, &[]).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.materialized(), text);
        assert_eq!(back.hash(), cfg.hash());
        assert!(text.contains("gamma_perp"));
    }

    #[test]
    fn overrides_apply_and_validate() {
        let cfg = RunConfig::load("", &["model.gamma_att=0.7".into(), "scenario.seed=42".into()]).unwrap();
        assert_eq!(cfg.model.gamma_att, 0.7);
        assert_eq!(cfg.scenario.seed, 42);
        let e = RunConfig::load("", &["model.k_neighbors=5".into()]).unwrap_err();
        assert!(matches!(e, ConfigError::Param(ref p) if p.field == "k_neighbors"));
        let e = RunConfig::load("", &["model.gamma_bogus=1".into()]).unwrap_err();
        assert!(e.to_string().contains("gamma_bogus"));
        assert!(RunConfig::load("", &["nonsense".into()]).is_err());
    }

    #[test]
    fn scenario_generators() {
        let mut s = ScenarioConfig::default();
        assert_eq!(s.to_spec().unwrap().schedule.segments.len(), 16);
        s.kind = ScenarioKind::Switching;
        s.cycles = 3;
        assert_eq!(s.to_spec().unwrap().schedule.segments.len(), 6);
        s.kind = ScenarioKind::Intruder;
        let spec = s.to_spec().unwrap();
        assert!(spec.intruder.is_some());
        assert_eq!(spec.duration, 300.0);
    }

    #[test]
    fn sweep_axes() {
        let cfg = RunConfig::load(
            "[sweep]\nali = { start = 0.0, end = 0.4, step = 0.025 }\natt = [0.2, 0.5]\n",
            &[],
        )
        .unwrap();
        let spec = cfg.sweep.to_spec().unwrap();
        assert_eq!(spec.ali_values.len(), 17);
        assert_eq!(spec.att_values, vec![0.2, 0.5]);
    }
}
