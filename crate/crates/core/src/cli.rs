//! Command-line front end and the on-disk output formats.
//!
//! Subcommands: `run` (one experiment), `grid` (GAR x attack matrix with
//! accuracy drops), `validate` (feasibility only), `oracle` (brute-force GAR
//! cross-check). The binary is a thin wrapper around [`main_with_args`].

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::AttackSpec;
use crate::gar::GarRule;
use crate::harness::{self, DatasetSource, ExperimentConfig, GridSummary, HarnessError, RoundRecord, MNIST_DIR_ENV};
use crate::reference;

pub const CSV_HEADER: &str = "round,epoch,train_loss,test_accuracy,selected_indices,byzantine_selected,aggregate_norm";
pub const SERIES_HEADER: &str = "round,epoch,test_accuracy";
pub const DROP_TABLE_HEADER: &str = "gar,attack,seed,final_accuracy,baseline_accuracy,drop_pp,error";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("config {path}: {message}")]
    ConfigFile { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("csv line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("oracle suite failed: {0:?}")]
    OracleFailed(reference::OracleReport),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Parser)]
#[command(name = "garlab", version, about = "Byzantine attacks on gradient aggregation rules")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment and write metrics.csv, summary.json, manifest.json.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Run a GAR x attack grid and write the drop table and plot series.
    Grid {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Check a configuration's feasibility without training.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Cross-check Krum, trimmed mean, median and FABA against brute force.
    Oracle {
        #[arg(long, default_value_t = 1000)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    /// TOML experiment config; unspecified fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated GAR names (run/validate use exactly one).
    #[arg(long, value_delimiter = ',')]
    pub gars: Vec<String>,
    /// Comma-separated attack names (run/validate use exactly one).
    #[arg(long, value_delimiter = ',')]
    pub attacks: Vec<String>,
    /// `mnist` or `synthetic`.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub mnist_dir: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub f: Option<usize>,
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    toml::from_str(&text).map_err(|e| CliError::ConfigFile { path: path.to_path_buf(), message: e.to_string() })
}

pub fn parse_gar(name: &str) -> Result<GarRule, CliError> {
    GarRule::from_name(name.trim()).ok_or_else(|| CliError::Usage(format!("unknown gar `{name}`")))
}

/// Attack by name; keeps `base`'s parameters when the strategy matches.
pub fn parse_attack(name: &str, base: &AttackSpec) -> Result<AttackSpec, CliError> {
    let spec = AttackSpec::from_name(name.trim()).ok_or_else(|| CliError::Usage(format!("unknown attack `{name}`")))?;
    Ok(if spec.name() == base.name() { *base } else { spec })
}

impl CommonArgs {
    /// Loads the config file (or defaults) and applies flag overrides.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => load_config(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(epochs) = self.epochs {
            config.epochs = epochs;
        }
        if let Some(n) = self.n {
            config.n = n;
        }
        if let Some(f) = self.f {
            config.f = f;
        }
        match self.dataset.as_deref() {
            None => {}
            Some("synthetic") => {
                if !matches!(config.dataset, DatasetSource::Synthetic { .. }) {
                    config.dataset = DatasetSource::default();
                }
            }
            Some("mnist") => {
                if !matches!(config.dataset, DatasetSource::Mnist { .. }) {
                    config.dataset = DatasetSource::Mnist { dir: None, limit: None };
                }
            }
            Some(other) => return Err(CliError::Usage(format!("unknown dataset `{other}` (mnist|synthetic)"))),
        }
        if let DatasetSource::Mnist { dir, .. } = &mut config.dataset {
            if let Some(flag) = &self.mnist_dir {
                *dir = Some(flag.clone());
            } else if dir.is_none() {
                *dir = std::env::var_os(MNIST_DIR_ENV).map(PathBuf::from);
            }
        }
        Ok(config)
    }

    fn resolve_single(&self) -> Result<ExperimentConfig, CliError> {
        let mut config = self.resolve()?;
        match self.gars.as_slice() {
            [] => {}
            [one] => config.gar = parse_gar(one)?,
            _ => return Err(CliError::Usage("--gars takes a single value here; use `grid` for several".into())),
        }
        match self.attacks.as_slice() {
            [] => {}
            [one] => config.attack = parse_attack(one, &config.attack)?,
            _ => return Err(CliError::Usage("--attacks takes a single value here; use `grid` for several".into())),
        }
        Ok(config)
    }

    /// Cartesian product of `--gars` x `--attacks` over the resolved base config.
    pub fn grid_configs(&self) -> Result<Vec<ExperimentConfig>, CliError> {
        let base = self.resolve()?;
        let gars = if self.gars.is_empty() {
            vec![base.gar]
        } else {
            self.gars.iter().map(|g| parse_gar(g)).collect::<Result<_, _>>()?
        };
        let attacks = if self.attacks.is_empty() {
            vec![AttackSpec::None, base.attack]
        } else {
            self.attacks.iter().map(|a| parse_attack(a, &base.attack)).collect::<Result<_, _>>()?
        };
        Ok(gars
            .iter()
            .flat_map(|&gar| attacks.iter().map(move |&attack| (gar, attack)))
            .map(|(gar, attack)| ExperimentConfig { gar, attack, ..base.clone() })
            .collect())
    }
}

/// Real number with 9 significant digits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.8e}")
}

pub fn metrics_csv(records: &[RoundRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let selected: Vec<String> = r.selected_indices.iter().map(usize::to_string).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.round,
            r.epoch,
            fmt_real(r.train_loss),
            r.test_accuracy.map(fmt_real).unwrap_or_default(),
            selected.join(";"),
            r.byzantine_selected,
            fmt_real(r.aggregate_norm),
        );
    }
    out
}

/// Writes `bytes` to a sibling temp file, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let file_name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn emit_csv(records: &[RoundRecord], path: &Path) -> Result<(), CliError> {
    write_atomic(path, metrics_csv(records).as_bytes())
}

/// Parses text produced by [`metrics_csv`].
pub fn parse_metrics_csv(text: &str) -> Result<Vec<RoundRecord>, CliError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(CSV_HEADER) => {}
        other => {
            return Err(CliError::Csv { line: 1, message: format!("unexpected header {other:?}") });
        }
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let line_no = i + 2;
            let bad = |message: String| CliError::Csv { line: line_no, message };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 7 {
                return Err(bad(format!("expected 7 fields, found {}", fields.len())));
            }
            let real = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
            let int = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("{s:?}: {e}")));
            Ok(RoundRecord {
                round: int(fields[0])?,
                epoch: int(fields[1])?,
                train_loss: real(fields[2])?,
                test_accuracy: if fields[3].is_empty() { None } else { Some(real(fields[3])?) },
                selected_indices: if fields[4].is_empty() {
                    Vec::new()
                } else {
                    fields[4].split(';').map(int).collect::<Result<_, _>>()?
                },
                byzantine_selected: fields[5].parse().map_err(|e| bad(format!("{:?}: {e}", fields[5])))?,
                aggregate_norm: real(fields[6])?,
            })
        })
        .collect()
}

pub fn series_file_name(config: &ExperimentConfig) -> String {
    format!("series_{}_{}_s{}.csv", config.gar.name(), config.attack.name(), config.seed)
}

/// Writes one accuracy-vs-round series per grid entry plus `drop_table.csv`.
/// Returns the written paths, series first.
pub fn emit_plot_data(summary: &GridSummary, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for entry in &summary.entries {
        let mut text = String::from(SERIES_HEADER);
        text.push('\n');
        for r in &entry.records {
            if let Some(acc) = r.test_accuracy {
                let _ = writeln!(text, "{},{},{}", r.round, r.epoch, fmt_real(acc));
            }
        }
        let path = dir.join(series_file_name(&entry.config));
        write_atomic(&path, text.as_bytes())?;
        written.push(path);
    }
    let mut table = String::from(DROP_TABLE_HEADER);
    table.push('\n');
    for e in &summary.entries {
        let opt = |x: Option<f64>| x.map(fmt_real).unwrap_or_default();
        let _ = writeln!(
            table,
            "{},{},{},{},{},{},{}",
            e.config.gar.name(),
            e.config.attack.name(),
            e.config.seed,
            opt(e.final_accuracy),
            opt(e.baseline_accuracy),
            opt(e.accuracy_drop.map(|d| d * 100.0)),
            e.error.as_deref().unwrap_or("").replace([',', '\n'], " "),
        );
    }
    let path = dir.join("drop_table.csv");
    write_atomic(&path, table.as_bytes())?;
    written.push(path);
    Ok(written)
}

/// Provenance written next to every run's outputs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub configs: Vec<ExperimentConfig>,
    pub outputs: Vec<PathBuf>,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Debug, Serialize)]
struct RunSummary<'a> {
    gar: &'static str,
    attack: &'static str,
    n: usize,
    f: usize,
    seed: u64,
    rounds: usize,
    final_accuracy: Option<f64>,
    final_train_loss: Option<f64>,
    byzantine_selected_rate: f64,
    config: &'a ExperimentConfig,
}

#[derive(Debug, Serialize)]
struct GridRow {
    gar: &'static str,
    attack: &'static str,
    seed: u64,
    final_accuracy: Option<f64>,
    baseline_accuracy: Option<f64>,
    drop_pp: Option<f64>,
    error: Option<String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn print_warnings(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

pub fn cmd_run(config: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let started = unix_now();
    print_warnings(&config.validate()?);
    let records = harness::run_experiment(config)?;
    fs::create_dir_all(out).map_err(io_err(out))?;

    let metrics = out.join("metrics.csv");
    emit_csv(&records, &metrics)?;
    let resolved = out.join("config.toml");
    write_atomic(&resolved, toml::to_string(config).expect("config serializes").as_bytes())?;
    let summary_path = out.join("summary.json");
    let selected = records.iter().filter(|r| r.byzantine_selected).count();
    write_json(
        &summary_path,
        &RunSummary {
            gar: config.gar.name(),
            attack: config.attack.name(),
            n: config.n,
            f: config.f,
            seed: config.seed,
            rounds: records.len(),
            final_accuracy: harness::final_accuracy(&records),
            final_train_loss: records.last().map(|r| r.train_loss),
            byzantine_selected_rate: if records.is_empty() { 0.0 } else { selected as f64 / records.len() as f64 },
            config,
        },
    )?;
    let mut outputs = vec![metrics, resolved, summary_path];
    let manifest = out.join("manifest.json");
    outputs.push(manifest.clone());
    write_json(
        &manifest,
        &RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: started,
            finished_unix: unix_now(),
            configs: vec![config.clone()],
            outputs: outputs.clone(),
        },
    )?;
    if let Some(acc) = harness::final_accuracy(&records) {
        println!("{} rounds, final test accuracy {:.4}", records.len(), acc);
    }
    Ok(outputs)
}

pub fn cmd_grid(configs: &[ExperimentConfig], out: &Path) -> Result<GridSummary, CliError> {
    let started = unix_now();
    for c in configs {
        print_warnings(&c.validate()?);
    }
    let summary = harness::run_grid(configs);
    let mut outputs = emit_plot_data(&summary, out)?;

    for e in &summary.entries {
        let path =
            out.join(format!("metrics_{}_{}_s{}.csv", e.config.gar.name(), e.config.attack.name(), e.config.seed));
        emit_csv(&e.records, &path)?;
        outputs.push(path);
    }
    let rows: Vec<GridRow> = summary
        .entries
        .iter()
        .map(|e| GridRow {
            gar: e.config.gar.name(),
            attack: e.config.attack.name(),
            seed: e.config.seed,
            final_accuracy: e.final_accuracy,
            baseline_accuracy: e.baseline_accuracy,
            drop_pp: e.accuracy_drop.map(|d| d * 100.0),
            error: e.error.clone(),
        })
        .collect();
    let summary_path = out.join("summary.json");
    write_json(&summary_path, &rows)?;
    outputs.push(summary_path);
    let manifest = out.join("manifest.json");
    outputs.push(manifest.clone());
    write_json(
        &manifest,
        &RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: started,
            finished_unix: unix_now(),
            configs: configs.to_vec(),
            outputs,
        },
    )?;

    println!("{:<18} {:<14} {:>10} {:>10} {:>9}", "gar", "attack", "accuracy", "baseline", "drop(pp)");
    for r in &rows {
        let show = |x: Option<f64>, scale: f64| x.map(|v| format!("{:.3}", v * scale)).unwrap_or_else(|| "-".into());
        println!(
            "{:<18} {:<14} {:>10} {:>10} {:>9}{}",
            r.gar,
            r.attack,
            show(r.final_accuracy, 1.0),
            show(r.baseline_accuracy, 1.0),
            show(r.drop_pp, 1.0),
            r.error.as_deref().map(|e| format!("  error: {e}")).unwrap_or_default()
        );
    }
    Ok(summary)
}

/// Full feasibility check, including loading the dataset when its size is
/// not known statically.
pub fn cmd_validate(config: &ExperimentConfig) -> Result<Vec<String>, CliError> {
    let warnings = config.validate()?;
    if config.dataset.known_size().is_none() {
        harness::prepare(config)?;
    }
    Ok(warnings)
}

pub fn cmd_oracle(instances: usize, seed: u64) -> Result<reference::OracleReport, CliError> {
    let report = reference::run_oracle_suite(instances, seed);
    let line = |name: &str, mismatches: usize| {
        println!("{} {name} ({mismatches} mismatches)", if mismatches == 0 { "PASS" } else { "FAIL" });
    };
    println!("{instances} random instances, seed {seed}");
    line("krum", report.krum_mismatches);
    line("trimmed_mean", report.trimmed_mean_mismatches);
    line("median", report.median_mismatches);
    line("faba", report.faba_mismatches);
    if report.passed() {
        Ok(report)
    } else {
        Err(CliError::OracleFailed(report))
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { common, out } => cmd_run(&common.resolve_single()?, &out).map(drop),
        Command::Grid { common, out } => cmd_grid(&common.grid_configs()?, &out).map(drop),
        Command::Validate { common } => {
            let config = common.resolve_single()?;
            let warnings = cmd_validate(&config)?;
            print_warnings(&warnings);
            println!(
                "ok: n = {}, f = {}, gar = {}, attack = {}",
                config.n,
                config.f,
                config.gar.name(),
                config.attack.name()
            );
            Ok(())
        }
        Command::Oracle { instances, seed } => cmd_oracle(instances, seed).map(drop),
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
