//! `mtbe`: calibrate charts, estimate ATS, reproduce the comparison grid and
//! replay event logs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mtbe::charts::Direction;
use mtbe::config::{ConfigError, FamilyName, ModeName, MonitorChart, RunConfig};
use mtbe::scenarios::{parse_event_log, replay_event_log, ReplayChart, ScenarioError, ShiftSpec};
use mtbe::simulation::{
    derive_seed, shift_direction, AtsEstimate, CalibrationRequest, CalibrationResult, ChartFamily, Engine,
    ExperimentSpec, Limits, ScenarioSpec, SimulationError, Table1,
};
use mtbe::GumbelBveParams;

const EXIT_CONFIG: u8 = 3;
const EXIT_INPUT: u8 = 4;
const EXIT_CALIBRATION: u8 = 5;
const EXIT_ESTIMATE: u8 = 6;

#[derive(Parser, Debug)]
#[command(name = "mtbe", version, about = "Multivariate time-between-events monitoring")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Base seed (overrides MTBE_SEED and the file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (overrides MTBE_WORKERS and the file).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,
    /// Quick mode: 10 000 runs, 2 000 per calibration step.
    #[arg(long, global = true)]
    quick: bool,
    #[arg(long, global = true)]
    n_reps: Option<usize>,
    #[arg(long, global = true)]
    reps_per_eval: Option<usize>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    target: Option<f64>,
    #[arg(long, global = true, value_enum)]
    family: Option<FamilyArg>,
    #[arg(long, global = true, value_enum)]
    direction: Option<DirectionArg>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, global = true)]
    burn_in: Option<u64>,
    /// Restrict to one model of the configuration.
    #[arg(long, global = true)]
    model: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Calibrate control limits to the target in-control ATS.
    Calibrate {
        /// CSV output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the ATS of a chart under the configured shifts.
    Ats {
        /// Shift multipliers `m1,m2`; repeatable. Defaults to the config's shifts.
        #[arg(long = "shift", value_parser = parse_shift)]
        shifts: Vec<ShiftSpec>,
        /// Fixed MEWMA limit instead of calibrating.
        #[arg(long)]
        h: Option<f64>,
        /// Fixed PEWMA scale instead of calibrating.
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the MEWMA vs PEWMA comparison grid.
    Table1 {
        #[arg(long)]
        table_csv: Option<PathBuf>,
        #[arg(long)]
        scatter_csv: Option<PathBuf>,
    },
    /// Replay an event log (`timestamp,stream_id` per line) through a chart.
    Monitor { log: PathBuf },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FamilyArg {
    Mewma,
    Pewma,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DirectionArg {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    InControl,
    ZeroState,
    SteadyState,
}

fn parse_shift(s: &str) -> Result<ShiftSpec, String> {
    let (a, b) = s.split_once(',').ok_or("expected `m1,m2`")?;
    let a: f64 = a.trim().parse().map_err(|_| format!("bad multiplier `{a}`"))?;
    let b: f64 = b.trim().parse().map_err(|_| format!("bad multiplier `{b}`"))?;
    ShiftSpec::new(a, b).map_err(|e| e.to_string())
}

#[derive(Debug, thiserror::Error)]
enum AppError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
}

impl From<ScenarioError> for AppError {
    fn from(e: ScenarioError) -> Self {
        AppError::Input(e.to_string())
    }
}

impl From<mtbe::charts::ChartError> for AppError {
    fn from(e: mtbe::charts::ChartError) -> Self {
        AppError::Config(ConfigError::Invalid(e.to_string()))
    }
}

impl AppError {
    fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(_) => EXIT_CONFIG,
            AppError::Input(_) => EXIT_INPUT,
            AppError::Simulation(e) => match e {
                SimulationError::Censored { .. } | SimulationError::Regeneration { .. } => EXIT_ESTIMATE,
                SimulationError::Bracketing { .. } => EXIT_CALIBRATION,
                SimulationError::InvalidRequest(_) | SimulationError::Chart(_) => EXIT_CONFIG,
                _ => 1,
            },
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), AppError> {
    let mut cfg = match &cli.global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply_env(|k| std::env::var(k).ok())?;
    apply_flags(&mut cfg, &cli.global, &cli.command);
    cfg.validate()?;
    if let Some(name) = &cli.global.model {
        let (n, _) = cfg.model(name)?;
        cfg.models.retain(|m| m.name == n);
    }

    let workers = cfg
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let engine = Engine::new(workers)?;

    match &cli.command {
        Command::Calibrate { out } => cmd_calibrate(&cfg, &engine, out.as_deref().or(cfg.output.calibration_csv.as_deref())),
        Command::Ats { shifts, out, .. } => {
            let shifts = if shifts.is_empty() { cfg.shifts.clone() } else { shifts.clone() };
            cmd_ats(&cfg, &engine, &shifts, out.as_deref().or(cfg.output.ats_csv.as_deref()))
        }
        Command::Table1 { table_csv, scatter_csv } => cmd_table1(
            &cfg,
            &engine,
            table_csv.as_deref().or(cfg.output.table_csv.as_deref()),
            scatter_csv.as_deref().or(cfg.output.scatter_csv.as_deref()),
        ),
        Command::Monitor { log } => cmd_monitor(&cfg, log),
    }
}

fn apply_flags(cfg: &mut RunConfig, g: &GlobalArgs, command: &Command) {
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(w) = g.workers {
        cfg.workers = Some(w as usize);
    }
    cfg.quick |= g.quick;
    if g.n_reps.is_some() || g.reps_per_eval.is_some() {
        // Explicit counts win over quick mode.
        let (n, r) = cfg.reps();
        cfg.quick = false;
        cfg.simulation.n_reps = g.n_reps.unwrap_or(n);
        cfg.simulation.reps_per_eval = g.reps_per_eval.unwrap_or(r);
    }
    if let Some(l) = g.lambda {
        cfg.chart.lambda = l;
    }
    if let Some(t) = g.target {
        cfg.simulation.target_ats0 = t;
    }
    if let Some(f) = g.family {
        cfg.chart.family = match f {
            FamilyArg::Mewma => FamilyName::Mewma,
            FamilyArg::Pewma => FamilyName::Pewma,
        };
    }
    if let Some(d) = g.direction {
        cfg.chart.direction = Some(match d {
            DirectionArg::Lower => Direction::Lower,
            DirectionArg::Upper => Direction::Upper,
        });
    }
    if let Some(m) = g.mode {
        cfg.simulation.mode = match m {
            ModeArg::InControl => ModeName::InControl,
            ModeArg::ZeroState => ModeName::ZeroState,
            ModeArg::SteadyState => ModeName::SteadyState,
        };
    }
    if let Some(b) = g.burn_in {
        cfg.simulation.burn_in = b;
    }
    if let Command::Ats { h, scale, .. } = command {
        if h.is_some() {
            cfg.chart.h = *h;
        }
        if scale.is_some() {
            cfg.chart.scale = *scale;
        }
    }
}

fn families(cfg: &RunConfig) -> Vec<ChartFamily> {
    match (cfg.chart.family, cfg.chart.direction) {
        (FamilyName::Mewma, _) => vec![ChartFamily::Mewma],
        (FamilyName::Pewma, Some(d)) => vec![ChartFamily::Pewma(d)],
        (FamilyName::Pewma, None) => vec![ChartFamily::Pewma(Direction::Lower), ChartFamily::Pewma(Direction::Upper)],
    }
}

fn calibration_request(cfg: &RunConfig, name: &str, model: GumbelBveParams, family: ChartFamily) -> CalibrationRequest {
    let (n_reps, reps_per_eval) = cfg.reps();
    CalibrationRequest {
        model,
        family,
        lambda: cfg.chart.lambda,
        target_ats0: cfg.simulation.target_ats0,
        rel_tol: cfg.simulation.rel_tol,
        reps_per_eval,
        n_reps,
        base_seed: derive_seed(cfg.seed, &format!("{name}/calibrate/{family}")),
        mode: cfg.simulation.ats_mode(),
        options: cfg.simulation.run_options(),
    }
}

fn write_output(path: Option<&Path>, contents: &str) -> Result<(), AppError> {
    if let Some(p) = path {
        std::fs::write(p, contents).map_err(|e| AppError::Input(format!("cannot write {}: {e}", p.display())))?;
    }
    Ok(())
}

fn fmt_se(e: &AtsEstimate) -> String {
    e.std_error.map_or_else(|| "-".into(), |s| format!("{s:.4}"))
}

const CALIBRATION_CSV_HEADER: &str = "model,family,lambda,limit_spec,achieved_ats0,stderr,n_runs,n_discarded,n_censored,iterations,reps_per_eval";

fn cmd_calibrate(cfg: &RunConfig, engine: &Engine, out: Option<&Path>) -> Result<(), AppError> {
    let mut csv = format!("{CALIBRATION_CSV_HEADER}\n");
    println!(
        "{:<10} {:<12} {:>7} {:<26} {:>10} {:>8} {:>6}",
        "model", "family", "lambda", "limits", "ATS0", "SE", "evals"
    );
    for (name, model) in cfg.named_models()? {
        for family in families(cfg) {
            let r = engine.calibrate(&calibration_request(cfg, &name, model, family))?;
            println!(
                "{:<10} {:<12} {:>7.4} {:<26} {:>10.3} {:>8} {:>6}",
                name,
                family.to_string(),
                cfg.chart.lambda,
                r.limits.to_string(),
                r.achieved_ats0,
                fmt_se(&r.estimate),
                r.iterations
            );
            calibration_csv_row(&mut csv, &name, family, cfg.chart.lambda, &r);
        }
    }
    write_output(out, &csv)
}

fn calibration_csv_row(csv: &mut String, name: &str, family: ChartFamily, lambda: f64, r: &CalibrationResult) {
    let e = &r.estimate;
    let se = e.std_error.map_or(String::new(), |s| format!("{s:.4}"));
    let _ = writeln!(
        csv,
        "{name},{family},{lambda},{},{:.4},{se},{},{},{},{},{}",
        r.limits, r.achieved_ats0, e.n_runs, e.n_discarded, e.n_censored, r.iterations, r.reps_per_eval
    );
}

fn fixed_limits(cfg: &RunConfig, model: &GumbelBveParams, family: ChartFamily) -> Option<Limits> {
    match family {
        ChartFamily::Mewma => cfg.chart.h.map(|h| Limits::Mewma { h }),
        ChartFamily::Pewma(direction) => cfg.chart.scale.map(|c| Limits::Pewma {
            direction,
            scale: c,
            limits: [c * model.theta1(), c * model.theta2()],
        }),
    }
}

fn cmd_ats(cfg: &RunConfig, engine: &Engine, shifts: &[ShiftSpec], out: Option<&Path>) -> Result<(), AppError> {
    let (n_reps, _) = cfg.reps();
    let mode = cfg.simulation.ats_mode();
    let mut csv = format!("{}\n", mtbe::simulation::TABLE_CSV_HEADER);
    println!(
        "{:<10} {:<14} {:<6} {:<26} {:>10} {:>8} {:>9}",
        "model", "shift", "method", "limits", "ATS", "SE", "discarded"
    );
    for (name, model) in cfg.named_models()? {
        let mut limits_cache: Vec<(ChartFamily, Limits)> = Vec::new();
        for shift in shifts {
            let family = match (cfg.chart.family, cfg.chart.direction) {
                (FamilyName::Mewma, _) => ChartFamily::Mewma,
                (FamilyName::Pewma, Some(d)) => ChartFamily::Pewma(d),
                (FamilyName::Pewma, None) => ChartFamily::Pewma(shift_direction(shift)?),
            };
            let limits = match limits_cache.iter().find(|(f, _)| *f == family) {
                Some((_, l)) => *l,
                None => {
                    let l = match fixed_limits(cfg, &model, family) {
                        Some(l) => l,
                        None => engine.calibrate(&calibration_request(cfg, &name, model, family))?.limits,
                    };
                    limits_cache.push((family, l));
                    l
                }
            };
            let chart = family.chart_for(&model, cfg.chart.lambda, &limits)?;
            let spec = ScenarioSpec::Vector {
                model,
                shift: *shift,
                chart,
                options: cfg.simulation.run_options(),
            };
            let seed = derive_seed(cfg.seed, &format!("{name}/{}", shift.label()));
            let e = engine.estimate_ats(&spec, &mode, n_reps, seed)?;
            let (method, direction) = match family {
                ChartFamily::Mewma => ("MEWMA", shift_direction(shift).map_or("mixed".into(), |d| d.to_string())),
                ChartFamily::Pewma(d) => ("PEWMA", d.to_string()),
            };
            println!(
                "{:<10} {:<14} {:<6} {:<26} {:>10.3} {:>8} {:>9}",
                name,
                shift.label(),
                method,
                limits.to_string(),
                e.mean_ats,
                fmt_se(&e),
                e.n_discarded
            );
            let [s1, s2] = shift.multipliers();
            let se = e.std_error.map_or(String::new(), |s| format!("{s:.4}"));
            let _ = writeln!(
                csv,
                "{name},{s1},{s2},{direction},{method},{},{limits},{:.4},{se},{},{},{}",
                cfg.chart.lambda, e.mean_ats, e.n_runs, e.n_discarded, e.n_censored
            );
        }
    }
    write_output(out, &csv)
}

fn experiments(cfg: &RunConfig) -> Result<Vec<ExperimentSpec>, AppError> {
    let (n_reps, reps_per_eval) = cfg.reps();
    Ok(cfg
        .named_models()?
        .into_iter()
        .map(|(name, model)| ExperimentSpec {
            name,
            model,
            lambda: cfg.chart.lambda,
            shifts: cfg.shifts.clone(),
            target_ats0: cfg.simulation.target_ats0,
            n_reps,
            reps_per_eval,
            rel_tol: cfg.simulation.rel_tol,
            steady_state: cfg.simulation.steady_state(),
            options: cfg.simulation.run_options(),
            base_seed: cfg.seed,
        })
        .collect())
}

fn cmd_table1(cfg: &RunConfig, engine: &Engine, table_csv: Option<&Path>, scatter_csv: Option<&Path>) -> Result<(), AppError> {
    let table = engine.run_table1(&experiments(cfg)?)?;
    print_table1(&table);
    write_output(table_csv, &table.to_csv())?;
    write_output(scatter_csv, &table.scatter_csv())
}

fn print_table1(table: &Table1) {
    println!("{:<10} {:<14} {:<6} {:>11} {:>11}", "model", "shift", "side", "MEWMA", "PEWMA");
    for (name, family, r) in &table.calibrations {
        println!("{:<10} limits {:<12} {}", name, family.to_string(), r.limits);
    }
    let mut in_control = table.rows.iter().filter(|r| r.shift.is_null());
    while let (Some(m), Some(p)) = (in_control.next(), in_control.next()) {
        println!(
            "{:<10} {:<14} {:<6} {:>11.2} {:>11.2}",
            m.model,
            "in-control",
            m.direction.to_string(),
            m.estimate.mean_ats,
            p.estimate.mean_ats
        );
    }
    for pt in &table.scatter {
        let side = shift_direction(&pt.shift).map_or("-".to_string(), |d| d.to_string());
        let mark = |mine: f64, other: f64| if mine <= other { format!("{mine:.2}*") } else { format!("{mine:.2} ") };
        println!(
            "{:<10} {:<14} {:<6} {:>11} {:>11}",
            pt.model,
            pt.shift.label(),
            side,
            mark(pt.mewma_ats, pt.pewma_ats),
            mark(pt.pewma_ats, pt.mewma_ats)
        );
    }
    let (wins, total) = table.pewma_wins();
    println!("* lowest ATS in the cell");
    println!("PEWMA ≤ MEWMA in {wins} of {total} cells");
}

fn cmd_monitor(cfg: &RunConfig, log_path: &Path) -> Result<(), AppError> {
    let m = cfg
        .monitor
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("the monitor command needs a [monitor] section".into()))?;
    let chart = match m.chart {
        MonitorChart::Shewhart => ReplayChart::Shewhart(m.limits.clone().expect("validated")),
        MonitorChart::Vector => {
            let (_, model) = match &m.model {
                Some(name) => cfg.model(name)?,
                None => cfg.named_models()?.swap_remove(0),
            };
            let family = match cfg.chart.family {
                FamilyName::Mewma => ChartFamily::Mewma,
                FamilyName::Pewma => ChartFamily::Pewma(cfg.chart.direction.expect("validated")),
            };
            let limits = fixed_limits(cfg, &model, family).expect("validated");
            ReplayChart::Vector(family.chart_for(&model, cfg.chart.lambda, &limits)?)
        }
    };
    let text = std::fs::read_to_string(log_path)
        .map_err(|e| AppError::Input(format!("cannot read {}: {e}", log_path.display())))?;
    let log = parse_event_log(&text, &m.streams)?;
    let alarms = replay_event_log(&log, &chart, m.grouping, m.streams.len())?;
    for (i, a) in alarms.iter().enumerate() {
        let source = a.source.map_or("-", |s| m.streams[s].as_str());
        println!(
            "alarm {}: t={} source={} statistic={:.4} observation={}",
            i + 1,
            a.time,
            source,
            a.statistic,
            a.observation
        );
    }
    let n = alarms.len();
    println!("{n} alarm{}", if n == 1 { "" } else { "s" });
    Ok(())
}
