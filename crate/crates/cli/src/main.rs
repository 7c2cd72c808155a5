//! Command-line front end: single scenario runs, parameter sweeps, and
//! re-analysis of existing trajectory logs.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flocksim::analysis::{
    analyze_records, recoveries, recoveries_csv, schedule_from_samples, stats_csv, timeseries_csv,
    transitions, transitions_csv, AnalysisOptions, direction_name,
};
use flocksim::config::{ConfigError, RunConfig};
use flocksim::metrics::segment_stats;
use flocksim::scenario::{intrusion_windows, run_scenario, RunOptions, ScenarioKind};
use flocksim::sweep::{emit_tables, run_sweep};
use flocksim::trajio::{read_log, write_events, write_log, LogHeader, ResampleSpec, Role, TrajError};
use flocksim::SimError;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_PARTIAL: u8 = 4;

#[derive(Parser)]
#[command(name = "flocksim", version, about = "3D drone-swarm flocking simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; every missing value takes its default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed of the scenario run, or base seed of a sweep.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Sweep worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Trajectory log rate in Hz.
    #[arg(long, global = true)]
    log_rate: Option<f64>,
    /// Validate and print the materialized configuration without running.
    #[arg(long, global = true)]
    dry_run: bool,
    /// Dotted-path override such as `model.gamma_att=0.7`; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured scenario once.
    Run,
    /// Run the configured parameter sweep and write heatmap/transect tables.
    Sweep,
    /// Recompute observables from existing trajectory logs.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Trajectory logs to analyze.
    #[arg(required = true)]
    logs: Vec<PathBuf>,
    /// Resampling rate in Hz.
    #[arg(long, default_value_t = 10.0)]
    rate: f64,
    /// Savitzky-Golay window in samples (odd, 1 disables smoothing).
    #[arg(long, default_value_t = 1)]
    smooth_window: usize,
    #[arg(long, default_value_t = 0)]
    smooth_degree: usize,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Numeric(String),
    Partial(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Numeric(_) => EXIT_NUMERIC,
            Failure::Partial(_) => EXIT_PARTIAL,
            Failure::Other(_) => EXIT_FAILURE,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Numeric(m) | Failure::Partial(m) | Failure::Other(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

impl From<TrajError> for Failure {
    fn from(e: TrajError) -> Self {
        match e {
            TrajError::Io(e) => Failure::Other(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

/// Loads the configuration, folding the command-line flags in as overrides so
/// the materialized copy records them.
fn load_config(common: &Common, sweep: bool) -> Result<RunConfig, Failure> {
    let text = match &common.config {
        Some(p) => fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut overrides = common.overrides.clone();
    if let Some(s) = common.seed {
        overrides.push(if sweep {
            format!("sweep.base_seed={s}")
        } else {
            format!("scenario.seed={s}")
        });
    }
    if let Some(w) = common.workers {
        overrides.push(format!("sweep.workers={w}"));
    }
    if let Some(o) = &common.out {
        overrides.push(format!("output.dir={:?}", o.display().to_string()));
    }
    if let Some(r) = common.log_rate {
        overrides.push(format!("output.log_rate={r:?}"));
    }
    Ok(RunConfig::load(&text, &overrides)?)
}

fn prepare_out(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let dir = PathBuf::from(&cfg.output.dir);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.toml"), cfg.materialized())?;
    Ok(dir)
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "none".into(), |v| format!("{v:.1}"))
}

fn cmd_run(common: &Common) -> Result<(), Failure> {
    let cfg = load_config(common, false)?;
    let spec = cfg.scenario.to_spec().map_err(|e| Failure::Config(e.to_string()))?;
    if common.dry_run {
        print!("{}", cfg.materialized());
        println!(
            "# {} scenario, {} drones, {} s, {} segments",
            spec.kind.name(),
            spec.n_drones,
            spec.duration,
            spec.schedule.segments.len()
        );
        return Ok(());
    }
    let setup = cfg.setup();
    let opts = RunOptions {
        log_rate: (cfg.output.log_rate > 0.0).then_some(cfg.output.log_rate),
        sample_rate: cfg.output.sample_rate,
    };
    let out = run_scenario(&spec, &setup, &opts).map_err(|e| match e {
        SimError::Param(p) => Failure::Config(p.to_string()),
        other => Failure::Numeric(other.to_string()),
    })?;

    let dir = prepare_out(&cfg)?;
    let hash = cfg.hash();
    let mut header = LogHeader::new(
        &hash,
        spec.seed,
        setup.model.v_min,
        setup.model.v_max,
        setup.model.dphi_max,
    );
    header.set("scenario", spec.kind.name());
    header.set("n_drones", spec.n_drones);
    header.set("duration", spec.duration);
    header.set("log_rate", cfg.output.log_rate);

    let stem = format!("{}_{}", spec.kind.name(), spec.seed);
    let traj = dir.join(format!("{stem}.traj"));
    let mut w = BufWriter::new(fs::File::create(&traj)?);
    write_log(&mut w, &header, &out.records)?;
    w.flush()?;
    eprintln!("wrote {}", traj.display());
    let events = dir.join(format!("{stem}.events"));
    let mut w = BufWriter::new(fs::File::create(&events)?);
    write_events(&mut w, &header, &out.events)?;
    w.flush()?;
    eprintln!("wrote {}", events.display());

    let (stats, _) = segment_stats(
        &out.samples,
        &spec.schedule,
        cfg.scenario.transient_cut,
        spec.n_drones,
        false,
    );
    write_text(&dir.join("stats.csv"), &stats_csv(&stats, &hash))?;
    write_text(&dir.join("timeseries.csv"), &timeseries_csv(&out.samples, &hash))?;
    for s in &stats {
        println!(
            "gamma_ali={} gamma_att={} P={:.3} chi={:.3} D={:.2}",
            s.gamma_ali, s.gamma_att, s.mean_p, s.chi_p, s.mean_d
        );
    }
    match spec.kind {
        ScenarioKind::Switching => {
            let rows = transitions(&out.samples, &spec.schedule, spec.n_drones);
            write_text(&dir.join("transitions.csv"), &transitions_csv(&rows, &hash))?;
            for r in &rows {
                println!("t={} {} transition_time={}", r.t_switch, direction_name(r.direction), fmt_opt(r.time));
            }
        }
        ScenarioKind::Intruder => {
            let rows = recoveries(&out.samples, &intrusion_windows(&out.events));
            write_text(&dir.join("recovery.csv"), &recoveries_csv(&rows, &hash))?;
            for r in &rows {
                println!("window {:.1}-{:.1} recovery_time={}", r.open, r.close, fmt_opt(r.time));
            }
        }
        ScenarioKind::Baseline => {}
    }
    match out.failure {
        Some(e) => Err(Failure::Numeric(e.to_string())),
        None => Ok(()),
    }
}

fn cmd_sweep(common: &Common) -> Result<(), Failure> {
    let cfg = load_config(common, true)?;
    let spec = cfg.sweep.to_spec().map_err(|e| Failure::Config(e.to_string()))?;
    if common.dry_run {
        print!("{}", cfg.materialized());
        println!(
            "# {} cells x {} runs = {} tasks",
            spec.cell_count(),
            spec.runs_per_cell,
            spec.task_count()
        );
        return Ok(());
    }
    let progress = |done: usize, total: usize| {
        if done == total || done.is_multiple_of(10) {
            eprintln!("{done}/{total} runs");
        }
    };
    let results = run_sweep(&spec, &cfg.setup(), Some(&progress)).map_err(|e| Failure::Config(e.to_string()))?;
    let dir = prepare_out(&cfg)?;
    let (heat, tran) = emit_tables(&results, &dir, &cfg.hash())?;
    eprintln!("wrote {}\nwrote {}", heat.display(), tran.display());
    let failed: usize = results.iter().map(|c| c.failures.len()).sum();
    let empty = results.iter().filter(|c| c.is_complete_failure()).count();
    if failed > 0 {
        for c in &results {
            for (run, msg) in &c.failures {
                eprintln!("gamma_ali={} gamma_att={} run {run}: {msg}", c.gamma_ali, c.gamma_att);
            }
        }
        return Err(Failure::Partial(format!("{failed} runs failed, {empty} cells without results")));
    }
    Ok(())
}

fn cmd_analyze(common: &Common, args: &AnalyzeArgs) -> Result<(), Failure> {
    let cfg = load_config(common, false)?;
    let opts = AnalysisOptions {
        resample: ResampleSpec {
            rate: args.rate,
            smooth_window: args.smooth_window,
            smooth_degree: args.smooth_degree,
        },
        window_radius: cfg.scenario.intruder.approach_start_distance,
    };
    opts.resample.validate().map_err(|e| Failure::Config(e.to_string()))?;
    if common.dry_run {
        print!("{}", cfg.materialized());
        return Ok(());
    }
    let dir = PathBuf::from(&cfg.output.dir);
    fs::create_dir_all(&dir)?;
    for path in &args.logs {
        let file = fs::File::open(path).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))?;
        let (header, records) = read_log(BufReader::new(file))
            .map_err(|e| Failure::from(e).with_context(path))?;
        let samples = analyze_records(&records, &opts).map_err(|e| Failure::from(e).with_context(path))?;
        let n = records
            .iter()
            .filter(|r| r.role == Role::Swarm)
            .map(|r| r.agent_id)
            .collect::<std::collections::BTreeSet<_>>()
            .len();
        let end = header
            .get("duration")
            .and_then(|d| d.parse().ok())
            .unwrap_or_else(|| samples.last().map_or(0.0, |s| s.time));
        let schedule = schedule_from_samples(&samples, end);
        let (stats, _) = segment_stats(&samples, &schedule, cfg.scenario.transient_cut, n, false);
        let hash = header.get("config_hash").unwrap_or("").to_string();
        let stem = path.file_stem().map_or("log".into(), |s| s.to_string_lossy().into_owned());
        write_text(&dir.join(format!("{stem}.timeseries.csv")), &timeseries_csv(&samples, &hash))?;
        write_text(&dir.join(format!("{stem}.stats.csv")), &stats_csv(&stats, &hash))?;
    }
    Ok(())
}

impl Failure {
    fn with_context(self, path: &Path) -> Self {
        let add = |m: String| format!("{}: {m}", path.display());
        match self {
            Failure::Config(m) => Failure::Config(add(m)),
            Failure::Numeric(m) => Failure::Numeric(add(m)),
            Failure::Partial(m) => Failure::Partial(add(m)),
            Failure::Other(m) => Failure::Other(add(m)),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run => cmd_run(&cli.common),
        Command::Sweep => cmd_sweep(&cli.common),
        Command::Analyze(args) => cmd_analyze(&cli.common, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
