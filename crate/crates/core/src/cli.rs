//! Command-line front end.
//!
//! Every subcommand reads one TOML configuration (unknown keys are rejected),
//! applies `--set dotted.path=value` overrides, runs, and writes its results
//! (CSV with 17 significant digits, plus JSON) and a `manifest.json` echoing
//! the resolved configuration. Data files are a pure function of the
//! configuration; `--jobs` changes only the wall time recorded in the manifest.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::detectors::{detect_with, DetectorOptions, DetectorReport, Panel};
use crate::error::{Error, Result};
use crate::harness::{
    calibrate_threshold, run_null, run_roc, scan_likelihood_image, simulate_scenario, validate_threshold,
    ExperimentSpec, ScanGrid, Scenario, Statistic,
};
use crate::io::{read_measurement, write_atomic, write_json, write_measurement};

#[derive(Debug, Parser)]
#[command(name = "mcglr", version, about = "Multi-channel GLR detectors")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Override a configuration entry, e.g. `--set scenario.snapshots=8`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize one data set into a measurement directory.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// SNR in dB; omit for noise only.
        #[arg(long, allow_negative_numbers = true)]
        snr_db: Option<f64>,
        #[arg(long, default_value_t = 0)]
        trial: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the configured panel on a measurement directory.
    Detect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Panel to run instead of the configured one, or `all`.
        #[arg(long)]
        panel: Option<String>,
        /// Output directory (default: JSON on stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Empirical ROC curves at the configured SNRs.
    Roc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// H0 distribution of a statistic against its analytic law.
    Null {
        #[command(flatten)]
        common: Common,
        /// `composite` or a channel index.
        #[arg(long, default_value = "composite")]
        statistic: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Likelihood image over the configured delay/Doppler grid.
    Scan {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Calibrate a threshold and check it on holdout data.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pfa: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// A grid axis: explicit values or `count` points from `start` by `step`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    Values(Vec<f64>),
    Range { start: f64, step: f64, count: usize },
}

impl Axis {
    pub fn points(&self) -> Vec<f64> {
        match self {
            Axis::Values(v) => v.clone(),
            Axis::Range { start, step, count } => (0..*count).map(|k| start + k as f64 * step).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub tau0_s: Axis,
    pub doppler_hz: Axis,
}

fn default_trials() -> usize {
    1000
}

/// The configuration file schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub panel: Panel,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub snr_db: Vec<f64>,
    #[serde(default)]
    pub pfa_targets: Vec<f64>,
    #[serde(default)]
    pub options: DetectorOptions,
    pub scenario: Scenario,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanConfig>,
}

impl Config {
    pub fn experiment(&self) -> ExperimentSpec {
        ExperimentSpec {
            panel: self.panel,
            scenario: self.scenario.clone(),
            snr_db: self.snr_db.clone(),
            trials: self.trials,
            seed: self.seed,
            pfa_targets: self.pfa_targets.clone(),
            options: self.options,
        }
    }

    pub fn grid(&self) -> Result<ScanGrid> {
        let s = self
            .scan
            .as_ref()
            .ok_or_else(|| Error::Config("missing [scan] section".into()))?;
        Ok(ScanGrid {
            tau0_s: s.tau0_s.points(),
            doppler_hz: s.doppler_hz.points(),
        })
    }
}

fn parse_value(text: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {text}")) {
        Ok(mut t) => t.remove("v").expect("key just parsed"),
        Err(_) => toml::Value::String(text.to_string()),
    }
}

/// Applies `path.to.key=value`; numeric segments index arrays.
pub fn apply_override(root: &mut toml::Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not PATH=VALUE")))?;
    let segments: Vec<&str> = path.trim().split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(Error::Config(format!("override path `{path}` has an empty segment")));
    }
    let mut node = root;
    for (depth, seg) in segments.iter().enumerate() {
        let last = depth + 1 == segments.len();
        node = match node {
            toml::Value::Table(t) => {
                if last {
                    t.insert(seg.to_string(), parse_value(raw.trim()));
                    return Ok(());
                }
                t.entry(seg.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            }
            toml::Value::Array(a) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| Error::Config(format!("override `{path}`: `{seg}` is not an array index")))?;
                let len = a.len();
                let slot = a
                    .get_mut(idx)
                    .ok_or_else(|| Error::Config(format!("override `{path}`: index {idx} out of range ({len})")))?;
                if last {
                    *slot = parse_value(raw.trim());
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(Error::Config(format!(
                    "override `{path}`: `{}` is not a table",
                    segments[..depth].join(".")
                )))
            }
        };
    }
    unreachable!("loop returns on the last segment")
}

/// Parses configuration text and applies overrides in order.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<Config> {
    let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
    let mut value = toml::Value::Table(table);
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    value.try_into().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))
}

pub fn load_config(common: &Common) -> Result<Config> {
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", common.config.display())))?;
    parse_config(&text, &common.overrides)
}

/// Formats a number with 17 significant digits, independent of locale.
pub fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn join_nums(v: &[f64]) -> String {
    v.iter().map(|x| fmt_num(*x)).collect::<Vec<_>>().join(";")
}

/// CSV text from a header and rows of already formatted fields.
fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config: &'a Config,
    #[serde(skip_serializing_if = "Option::is_none")]
    hypothesis: Option<serde_json::Value>,
    outputs: Vec<String>,
    wall_time_s: f64,
}

struct Output<'a> {
    dir: &'a Path,
    command: &'a str,
    config: &'a Config,
    started: Instant,
    files: Vec<String>,
    hypothesis: Option<serde_json::Value>,
}

impl<'a> Output<'a> {
    fn new(dir: &'a Path, command: &'a str, config: &'a Config, started: Instant) -> Self {
        Output {
            dir,
            command,
            config,
            started,
            files: Vec::new(),
            hypothesis: None,
        }
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        write_json(&self.dir.join(name), value)?;
        self.files.push(name.into());
        Ok(())
    }

    fn text(&mut self, name: &str, contents: &str) -> Result<()> {
        write_atomic(&self.dir.join(name), contents.as_bytes())?;
        self.files.push(name.into());
        Ok(())
    }

    fn finish(self) -> Result<()> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            seed: self.config.seed,
            config: self.config,
            hypothesis: self.hypothesis,
            outputs: self.files,
            wall_time_s: self.started.elapsed().as_secs_f64(),
        };
        write_json(&self.dir.join("manifest.json"), &manifest)
    }
}

fn print_stdout(text: &str) -> Result<()> {
    use std::io::Write;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn parse_statistic(s: &str) -> Result<Statistic> {
    if s.eq_ignore_ascii_case("composite") {
        return Ok(Statistic::Composite);
    }
    s.parse()
        .map(Statistic::PerChannel)
        .map_err(|_| Error::Config(format!("statistic `{s}` is neither `composite` nor a channel index")))
}

fn parse_panels(s: &str) -> Result<Vec<Panel>> {
    if s.eq_ignore_ascii_case("all") {
        Ok(Panel::ALL.to_vec())
    } else {
        Ok(vec![s.parse()?])
    }
}

/// Tolerance of the output-time recheck of `composite = Σ α Λ − V`.
pub const DECOMPOSITION_TOLERANCE: f64 = 1e-9;

fn report_rows(reports: &[DetectorReport]) -> String {
    csv(
        &[
            "panel",
            "composite",
            "weighted_sum",
            "cross_validation",
            "decomposition_residual",
            "degenerate",
            "alphas",
            "per_channel",
        ],
        reports.iter().map(|r| {
            vec![
                r.panel.to_string(),
                fmt_num(r.composite),
                fmt_num(r.weighted_sum()),
                fmt_num(r.cross_validation),
                fmt_num(r.decomposition_residual()),
                r.is_degenerate().to_string(),
                join_nums(&r.alphas),
                join_nums(&r.per_channel),
            ]
        }),
    )
}

#[derive(Serialize)]
struct CalibrationOutput {
    calibration: crate::harness::Calibration,
    holdout: crate::harness::Holdout,
}

#[derive(Serialize)]
struct ScanOutput {
    image: crate::harness::LikelihoodImage,
    local_maxima: Vec<(usize, usize)>,
}

/// Executes a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let started = Instant::now();
    match cli.command {
        Command::Simulate { common, snr_db, trial, out } => {
            let config = load_config(&common)?;
            let (z, amplitudes) = simulate_scenario(&config.scenario, snr_db, config.seed, trial)?;
            write_measurement(&out, &z)?;
            let mut o = Output::new(&out, "simulate", &config, started);
            o.files = (0..z.channels()).map(|l| format!("block_{l}.csv")).collect();
            o.files.push("measurement.json".into());
            o.hypothesis = Some(match amplitudes {
                None => serde_json::json!({ "kind": "null", "trial": trial }),
                Some(a) => {
                    let m = a.matrix();
                    let rows: Vec<Vec<[f64; 2]>> = (0..m.rows())
                        .map(|i| (0..m.cols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
                        .collect();
                    serde_json::json!({ "kind": "signal", "trial": trial, "snr_db": snr_db, "amplitudes": rows })
                }
            });
            o.finish()
        }
        Command::Detect { common, data, panel, out } => {
            let config = load_config(&common)?;
            let panels = match panel {
                Some(p) => parse_panels(&p)?,
                None => vec![config.panel],
            };
            let z = read_measurement(&data)?;
            let channels = config.scenario.build_channels()?;
            let reports = panels
                .iter()
                .map(|&p| detect_with(p, &channels, &z, &config.options))
                .collect::<Result<Vec<_>>>()?;
            if let Some(bad) = reports.iter().find(|r| !(r.decomposition_residual() <= DECOMPOSITION_TOLERANCE)) {
                return Err(Error::Degenerate(format!(
                    "{}: composite differs from the weighted sum minus V by {:e}",
                    bad.panel,
                    bad.decomposition_residual()
                )));
            }
            match out {
                Some(dir) => {
                    let mut o = Output::new(&dir, "detect", &config, started);
                    o.json("report.json", &reports)?;
                    o.text("report.csv", &report_rows(&reports))?;
                    o.finish()
                }
                None => print_stdout(&serde_json::to_string_pretty(&reports)?),
            }
        }
        Command::Roc { common, out } => {
            let config = load_config(&common)?;
            let curves = run_roc(&config.experiment())?;
            let rows = curves.iter().flat_map(|c| {
                (0..c.thresholds.len()).map(move |k| {
                    vec![
                        fmt_num(c.snr_db),
                        fmt_num(c.thresholds[k]),
                        fmt_num(c.pfa[k]),
                        fmt_num(c.pfa_halfwidth[k]),
                        fmt_num(c.pd[k]),
                        fmt_num(c.pd_halfwidth[k]),
                        fmt_num(c.auc),
                    ]
                })
            });
            let mut o = Output::new(&out, "roc", &config, started);
            o.text(
                "roc.csv",
                &csv(&["snr_db", "threshold", "pfa", "pfa_halfwidth", "pd", "pd_halfwidth", "auc"], rows),
            )?;
            o.json("roc.json", &curves)?;
            o.finish()
        }
        Command::Null { common, statistic, out } => {
            let config = load_config(&common)?;
            let summary = run_null(&config.experiment(), parse_statistic(&statistic)?)?;
            if let Some(w) = &summary.warning {
                eprintln!("warning: {w}");
            }
            let reference = summary.reference;
            let rows = summary.empirical_cdf().into_iter().map(|(x, f)| {
                vec![
                    fmt_num(x),
                    fmt_num(f),
                    reference.map(|r| fmt_num(r.cdf(x))).unwrap_or_default(),
                ]
            });
            let mut o = Output::new(&out, "null", &config, started);
            o.text("null.csv", &csv(&["value", "empirical_cdf", "reference_cdf"], rows))?;
            o.json("null.json", &summary)?;
            o.finish()?;
            match summary.ks {
                Some(ks) => print_stdout(&format!(
                    "ks statistic={} p_value={} n={}",
                    fmt_num(ks.statistic),
                    fmt_num(ks.p_value),
                    summary.samples.len()
                )),
                None => print_stdout(&format!("no analytic reference; n={}", summary.samples.len())),
            }
        }
        Command::Scan { common, data, out } => {
            let config = load_config(&common)?;
            let z = read_measurement(&data)?;
            let image = scan_likelihood_image(config.panel, &config.scenario, &z, &config.grid()?, &config.options)?;
            let local_maxima = image.local_maxima();
            let nn = image.doppler_hz.len();
            let rows = (0..image.values.len()).map(|k| {
                let cell = (k / nn, k % nn);
                vec![
                    fmt_num(image.tau0_s[cell.0]),
                    fmt_num(image.doppler_hz[cell.1]),
                    fmt_num(image.values[k]),
                    (cell == image.argmax).to_string(),
                    local_maxima.contains(&cell).to_string(),
                ]
            });
            let table = csv(&["tau0_s", "doppler_hz", "value", "argmax", "local_max"], rows);
            let mut o = Output::new(&out, "scan", &config, started);
            o.text("scan.csv", &table)?;
            o.json("scan.json", &ScanOutput { image, local_maxima })?;
            o.finish()
        }
        Command::Calibrate { common, pfa, out } => {
            let config = load_config(&common)?;
            let spec = config.experiment();
            let calibration = calibrate_threshold(&spec, pfa)?;
            let holdout = validate_threshold(&spec, calibration.threshold, 1.0)?;
            let row = vec![
                fmt_num(calibration.pfa_target),
                fmt_num(calibration.threshold),
                calibration.trials.to_string(),
                calibration.exceedances.to_string(),
                fmt_num(calibration.achieved_pfa),
                holdout.exceedances.to_string(),
                fmt_num(holdout.achieved_pfa),
                fmt_num(holdout.interval.0),
                fmt_num(holdout.interval.1),
            ];
            let table = csv(
                &[
                    "pfa_target",
                    "threshold",
                    "trials",
                    "exceedances",
                    "calibration_pfa",
                    "holdout_exceedances",
                    "holdout_pfa",
                    "holdout_lower",
                    "holdout_upper",
                ],
                [row],
            );
            let mut o = Output::new(&out, "calibrate", &config, started);
            o.text("calibration.csv", &table)?;
            o.json("calibration.json", &CalibrationOutput { calibration, holdout })?;
            o.finish()
        }
    }
}

/// Entry point shared by the binary: parses `args`, runs on a pool of
/// `--jobs` threads, and maps errors to a one-line message and exit code 1.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        pool = pool.num_threads(n.max(1));
    }
    let result = match pool.build() {
        Ok(pool) => pool.install(|| run(cli)),
        Err(e) => Err(Error::Config(format!("cannot start worker pool: {e}"))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(1)
        }
    }
}

