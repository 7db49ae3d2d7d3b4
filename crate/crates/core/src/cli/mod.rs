//! The `fieldsim` command line: flags, config files and scenario runs.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, Parser, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::simulator::{ConfigError, MetricsSeries, SimConfig, SimError, Simulator};
use crate::warehouse::WarehouseScenario;

mod demos;

pub use demos::{GradientDemo, SpawnDemo};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// Pallets and forklifts running collision, routing and log services.
    Warehouse,
    /// Static grid computing a hop-count gradient from one corner.
    GradientDemo,
    /// Line of devices where one end repeatedly spawns and ends a process.
    SpawnDemo,
}

/// Runs a simulation and writes one CSV row of metrics per simulated second.
///
/// Settings come from the defaults, then `--config`, then the flags.
#[derive(Debug, Clone, Default, Parser)]
#[command(name = "fieldsim", version, allow_negative_numbers = true)]
pub struct CliArgs {
    /// What to simulate [default: warehouse]
    #[arg(long, value_enum)]
    pub scenario: Option<ScenarioKind>,
    /// Seed of every random choice in the run [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Simulated seconds [default: 500]
    #[arg(long)]
    pub duration: Option<f64>,
    /// Radio range, metres [default: 10]
    #[arg(long)]
    pub comm_radius: Option<f64>,
    /// Probability that one copy of a message is lost [default: 0]
    #[arg(long)]
    pub drop_rate: Option<f64>,
    /// Seconds between two rounds of a device [default: 1]
    #[arg(long)]
    pub period: Option<f64>,
    /// Own rounds a received message stays usable [default: 3]
    #[arg(long)]
    pub staleness: Option<u32>,
    /// Rounds a terminated process key stays quarantined [default: 5]
    #[arg(long)]
    pub quarantine: Option<u32>,
    /// Aisle rows of the warehouse [default: 6]
    #[arg(long)]
    pub rows: Option<u32>,
    /// Aisle columns of the warehouse [default: 2]
    #[arg(long)]
    pub cols: Option<u32>,
    /// Number of forklifts [default: 4]
    #[arg(long)]
    pub forklifts: Option<u32>,
    /// Metrics CSV path [default: metrics.csv]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Flat `key = value` file with any of the settings above
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write every device's state after each round as JSON lines
    #[arg(long, value_name = "PATH")]
    pub dump_state: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{line}: {reason}")]
    ConfigFile {
        path: String,
        line: usize,
        reason: String,
    },
    #[error(transparent)]
    Invalid(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("writing metrics: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Whether the problem is in the user's settings.
    pub fn is_usage(&self) -> bool {
        matches!(self, CliError::ConfigFile { .. } | CliError::Invalid(_))
    }
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub scenario: ScenarioKind,
    pub config: SimConfig,
    pub out: PathBuf,
    pub dump_state: Option<PathBuf>,
}

/// Settings read from a `key = value` file. Keys are the long flag names
/// with `_` or `-`; `#` starts a comment.
pub fn parse_config_file(text: &str, path: &str) -> Result<CliArgs, CliError> {
    let mut args = CliArgs::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| CliError::ConfigFile {
            path: path.to_string(),
            line: i + 1,
            reason,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        fn num<T: std::str::FromStr>(value: &str) -> Result<Option<T>, String> {
            value
                .parse()
                .map(Some)
                .map_err(|_| format!("`{value}` is not a valid number"))
        }
        let parsed: Result<(), String> = (|| {
            match key.as_str() {
                "scenario" => {
                    args.scenario = Some(ScenarioKind::from_str(value, true)?);
                }
                "seed" => args.seed = num(value)?,
                "duration" => args.duration = num(value)?,
                "comm_radius" => args.comm_radius = num(value)?,
                "drop_rate" => args.drop_rate = num(value)?,
                "period" => args.period = num(value)?,
                "staleness" => args.staleness = num(value)?,
                "quarantine" => args.quarantine = num(value)?,
                "rows" => args.rows = num(value)?,
                "cols" => args.cols = num(value)?,
                "forklifts" => args.forklifts = num(value)?,
                "out" => args.out = Some(value.into()),
                "dump_state" => args.dump_state = Some(value.into()),
                other => return Err(format!("unknown key `{other}`")),
            }
            Ok(())
        })();
        parsed.map_err(err)?;
    }
    Ok(args)
}

impl CliArgs {
    /// Applies the config file, if any, under the flags and validates.
    pub fn resolve(&self) -> Result<RunSettings, CliError> {
        let base = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                parse_config_file(&text, &path.display().to_string())?
            }
            None => CliArgs::default(),
        };
        let d = SimConfig::default();
        macro_rules! pick {
            ($field:ident) => {
                self.$field.or(base.$field).unwrap_or(d.$field)
            };
        }
        let config = SimConfig {
            seed: pick!(seed),
            duration: pick!(duration),
            comm_radius: pick!(comm_radius),
            drop_rate: pick!(drop_rate),
            period: pick!(period),
            staleness: pick!(staleness),
            quarantine: pick!(quarantine),
            rows: pick!(rows),
            cols: pick!(cols),
            forklifts: pick!(forklifts),
        };
        config.validate()?;
        Ok(RunSettings {
            scenario: self
                .scenario
                .or(base.scenario)
                .unwrap_or(ScenarioKind::Warehouse),
            config,
            out: self
                .out
                .clone()
                .or(base.out)
                .unwrap_or_else(|| "metrics.csv".into()),
            dump_state: self.dump_state.clone().or(base.dump_state),
        })
    }
}

/// What a run produced, for the one-line summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub scenario: ScenarioKind,
    pub seed: u64,
    /// Simulated seconds, one metrics row each.
    pub seconds: usize,
    pub logs_created: usize,
    pub logs_collected: usize,
    pub max_message_size: usize,
    pub over_budget: u64,
    pub messages: u64,
    pub warnings: u32,
}

impl std::fmt::Display for RunSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = self.scenario.to_possible_value().expect("no skipped variants");
        write!(
            f,
            "{} seed {}: {} s simulated, {} logs created, {} collected, max message {} B \
             ({} of {} over budget), {} warnings",
            name.get_name(),
            self.seed,
            self.seconds,
            self.logs_created,
            self.logs_collected,
            self.max_message_size,
            self.over_budget,
            self.messages,
            self.warnings
        )
    }
}

/// Runs a scenario and returns its metrics without writing anything.
pub fn simulate(
    kind: ScenarioKind,
    config: &SimConfig,
    dump: Option<Box<dyn Write>>,
) -> Result<(MetricsSeries, RunSummary), CliError> {
    fn go<S: crate::simulator::Scenario>(
        config: &SimConfig,
        scenario: S,
        dump: Option<Box<dyn Write>>,
    ) -> Result<(MetricsSeries, S), CliError> {
        let mut sim = Simulator::new(config.clone(), scenario)?;
        if let Some(out) = dump {
            sim = sim.with_dump(out);
        }
        let series = sim.run()?;
        Ok((series, sim.into_scenario()))
    }
    let (series, logs_created, logs_collected, warnings) = match kind {
        ScenarioKind::Warehouse => {
            let (series, s) = go(config, WarehouseScenario::new(config), dump)?;
            let report = s.report(f64::INFINITY);
            let collected = s.log_receipts().filter(|l| l.3.iter().any(Option::is_some)).count();
            (series, report.logs_created, collected, report.warning_onsets)
        }
        ScenarioKind::GradientDemo => (go(config, GradientDemo::new(config), dump)?.0, 0, 0, 0),
        ScenarioKind::SpawnDemo => (go(config, SpawnDemo::new(config), dump)?.0, 0, 0, 0),
    };
    let summary = RunSummary {
        scenario: kind,
        seed: config.seed,
        seconds: series.rows.len(),
        logs_created,
        logs_collected,
        max_message_size: series.max_message_size,
        over_budget: series.messages_over_budget,
        messages: series.messages_sent,
        warnings,
    };
    Ok((series, summary))
}

/// Writes `series` to `path` through a temporary file in the same
/// directory, so a failed run leaves no partial output.
pub fn write_metrics(series: &MetricsSeries, path: &Path) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(path, e))?;
    series.write_csv(BufWriter::new(tmp.as_file()))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// Resolves the settings, runs the scenario and writes the metrics.
pub fn run(args: &CliArgs) -> Result<RunSummary, CliError> {
    let settings = args.resolve()?;
    let dump: Option<Box<dyn Write>> = match &settings.dump_state {
        Some(path) => {
            let file = File::create(path).map_err(|e| CliError::io(path, e))?;
            Some(Box::new(BufWriter::new(file)))
        }
        None => None,
    };
    let (series, summary) = simulate(settings.scenario, &settings.config, dump)?;
    write_metrics(&series, &settings.out)?;
    Ok(summary)
}

/// Entry point of the `fieldsim` binary.
pub fn main_from<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match CliArgs::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    match run(&args) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) if e.is_usage() => {
            eprintln!("error: {e}\n\n{}", CliArgs::command().render_usage());
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
