//! Command-line experiment runner.
//!
//! Exit status: 0 when every gated report passes (or nothing is gated), 1 when
//! a gate fails, 2 on a usage error, 3 on an I/O failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bethe_sim::{sample_ball, Colour, RealizationDump};
use crate::dist::{cdf_f, fixed_point_residual, zero_solution_cdf};
use crate::error::{Error, Result};
use crate::estimators::{
    self, estimate_fn_curve, fn_limsup_check, mc_covariance_table, mc_event, mc_events,
    mc_generation_counts, EstimateReport, Quantity, QuantityKind, DEFAULT_Z_THRESHOLD,
};
use crate::tree::{parse_site_set, SiteId};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_GATE_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// Version of the JSON envelope.
pub const JSON_SCHEMA_VERSION: u32 = 1;

const MAX_GRID_POINTS: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "frozen-perc", version, about = "Frozen percolation on the Bethe lattice: sampler and Monte Carlo checks")]
pub struct RunConfig {
    /// Master seed for all replicas.
    #[arg(long, global = true, env = "FROZEN_PERC_SEED", default_value_t = 1)]
    pub seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    pub output_path: Option<PathBuf>,
    /// Gate threshold in standard errors.
    #[arg(long, global = true, default_value_t = DEFAULT_Z_THRESHOLD)]
    pub threshold: f64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Residual of the freeze-time law under the integral equation.
    FixedPoint {
        #[arg(long, default_value_t = 100_000)]
        steps: usize,
        /// Times as `start:stop:step` or a comma list.
        #[arg(long, default_value = "0.5:1.0:0.05")]
        grid: String,
        /// Largest acceptable absolute residual.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Estimate one quantity.
    Estimate(EstimateArgs),
    /// Mean size of the green generation reached from the root.
    Generation {
        /// Generations as `a:b` or a comma list.
        #[arg(long, default_value = "3,6,9")]
        depths: String,
        #[arg(long, default_value = "0.5,0.75,1.0")]
        t: String,
        #[arg(long = "n", default_value_t = 100_000)]
        n: u64,
    },
    /// Containment probabilities of connected site sets.
    Containment {
        /// A site set; repeat for several. Defaults to a pair, a 3-path and a star.
        #[arg(long = "set")]
        sets: Vec<String>,
        #[arg(long, default_value = "0.4,0.6,0.8,1.0")]
        t: String,
        #[arg(long = "n", default_value_t = 1_000_000)]
        n: u64,
    },
    /// Colour covariances between the root and a distant site.
    Covariance {
        /// Numbers of intermediate sites, as `a:b` or a comma list.
        #[arg(long, default_value = "4,12,24")]
        distance: String,
        #[arg(long, default_value = "0.4,0.7,0.9")]
        t: String,
        #[arg(long = "n", default_value_t = 1_000_000)]
        n: u64,
    },
    /// Root-red probability on finite directed binary trees.
    DirectedFn {
        #[arg(long, default_value = "0.8")]
        t: String,
        #[arg(long, default_value = "2:20")]
        levels: String,
        #[arg(long = "n", default_value_t = 100_000)]
        n: u64,
    },
    /// Sample one ball and print every U, Y and Z as JSON.
    DumpRealization {
        #[arg(long, default_value_t = 3)]
        radius: u32,
    },
    /// Re-check a realization dump produced by `dump-realization`.
    CheckDump {
        /// Dump file; reads stdin when absent.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub quantity: String,
    #[arg(long)]
    pub t: Option<f64>,
    /// Site set for `containment`.
    #[arg(long)]
    pub sites: Option<String>,
    #[arg(long)]
    pub from: Option<String>,
    #[arg(long)]
    pub to: Option<String>,
    #[arg(long)]
    pub depth: Option<u32>,
    #[arg(long)]
    pub distance: Option<u32>,
    /// Colour pair `first/second` for `covariance`.
    #[arg(long)]
    pub colours: Option<String>,
    #[arg(long = "n", default_value_t = 1_000_000)]
    pub n: u64,
}

/// Parses `start:stop:step` (inclusive) or a comma-separated list of reals.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = |why: &str| Error::InvalidParameter(format!("grid {spec:?}: {why}"));
    let number = |s: &str| -> Result<f64> {
        let v: f64 = s.trim().parse().map_err(|_| bad("not a number"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(bad("not finite"))
        }
    };
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let [a, b, step] = parts[..] else {
            return Err(bad("expected start:stop:step"));
        };
        let (a, b, step) = (number(a)?, number(b)?, number(step)?);
        if step <= 0.0 || b < a {
            return Err(bad("need step > 0 and stop >= start"));
        }
        let count = ((b - a) / step + 1e-9).floor();
        if count >= MAX_GRID_POINTS as f64 {
            return Err(bad("too many points"));
        }
        Ok((0..=count as usize).map(|k| a + k as f64 * step).collect())
    } else {
        spec.split(',').map(number).collect()
    }
}

/// Parses `a:b` (inclusive) or a comma-separated list of integers.
pub fn parse_range(spec: &str) -> Result<Vec<u32>> {
    let bad = || Error::InvalidParameter(format!("range {spec:?}: expected a:b or a comma list"));
    let number = |s: &str| s.trim().parse::<u32>().map_err(|_| bad());
    match spec.split_once(':') {
        Some((a, b)) => {
            let (a, b) = (number(a)?, number(b)?);
            if b < a || (b - a) as usize >= MAX_GRID_POINTS {
                return Err(bad());
            }
            Ok((a..=b).collect())
        }
        None => spec.split(',').map(number).collect(),
    }
}

fn parse_colour_pair(spec: &str) -> Result<(Colour, Colour)> {
    let (a, b) = spec
        .split_once('/')
        .ok_or_else(|| Error::InvalidParameter(format!("colour pair {spec:?}: expected first/second")))?;
    Ok((a.parse()?, b.parse()?))
}

fn require<T>(value: Option<T>, flag: &str, quantity: &str) -> Result<T> {
    value.ok_or_else(|| Error::InvalidParameter(format!("{quantity} needs --{flag}")))
}

fn estimate(args: &EstimateArgs, seed: u64) -> Result<EstimateReport> {
    let kind: QuantityKind = args.quantity.parse()?;
    let id = kind.id();
    let t = || require(args.t, "t", id);
    let quantity = match kind {
        QuantityKind::GreenFinal => Quantity::GreenFinal,
        QuantityKind::RedFinal => Quantity::RedFinal,
        QuantityKind::DistinctFrozenPair => Quantity::DistinctFrozenPair,
        QuantityKind::SingleSiteGreen => Quantity::SingleSiteGreen { t: t()? },
        QuantityKind::Containment => Quantity::Containment {
            sites: parse_site_set(&require(args.sites.clone(), "sites", id)?)?,
            t: t()?,
        },
        QuantityKind::PathGreen => Quantity::PathGreen {
            from: require(args.from.as_deref(), "from", id)?.parse()?,
            to: require(args.to.as_deref(), "to", id)?.parse()?,
            t: t()?,
        },
        QuantityKind::GenerationMean => {
            let depth = require(args.depth, "depth", id)?;
            return Ok(mc_generation_counts(&[t()?], depth, args.n, seed)?.remove(0));
        }
        QuantityKind::Covariance => {
            let distance = require(args.distance, "distance", id)?;
            let (first, second) = parse_colour_pair(&require(args.colours.clone(), "colours", id)?)?;
            return estimators::mc_covariance(distance, t()?, first, second, args.n, seed);
        }
        QuantityKind::DirectedFn => {
            let depth = require(args.depth, "depth", id)?;
            return estimators::estimate_fn(depth, t()?, args.n, seed);
        }
        QuantityKind::DecayBound => {
            return Err(Error::InvalidParameter(
                "decay_bound is a closed form; the covariance command reports it as the oracle".into(),
            ))
        }
    };
    mc_event(&quantity, args.n, seed)
}

#[derive(Serialize)]
struct ResidualRow {
    t: f64,
    steps: usize,
    residual: f64,
    zero_solution_residual: f64,
    tol: f64,
    pass: bool,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    command: &'a str,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    reports: Option<&'a [EstimateReport]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rows: Option<&'a [T]>,
}

enum Output {
    Reports(Vec<EstimateReport>),
    Residuals(Vec<ResidualRow>),
    Json(String),
}

/// Errors surfaced by [`execute`].
#[derive(Debug)]
pub enum RunError {
    Usage(Error),
    Io(io::Error),
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Usage(e)
    }
}

impl From<io::Error> for RunError {
    fn from(e: io::Error) -> Self {
        RunError::Io(e)
    }
}

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::FixedPoint { .. } => "fixed-point",
        Command::Estimate(_) => "estimate",
        Command::Generation { .. } => "generation",
        Command::Containment { .. } => "containment",
        Command::Covariance { .. } => "covariance",
        Command::DirectedFn { .. } => "directed-fn",
        Command::DumpRealization { .. } => "dump-realization",
        Command::CheckDump { .. } => "check-dump",
    }
}

fn default_sets() -> Vec<Vec<SiteId>> {
    ["O,0", "0,O,1", "O,0,1,2"]
        .iter()
        .map(|s| parse_site_set(s).expect("valid default set"))
        .collect()
}

fn compute(config: &RunConfig) -> std::result::Result<(Output, bool), RunError> {
    let seed = config.seed;
    let output = match &config.command {
        Command::FixedPoint { steps, grid, tol } => {
            if *steps < 100 {
                return Err(Error::InvalidParameter("--steps must be at least 100".into()).into());
            }
            let ts = parse_grid(grid)?;
            if let Some(t) = ts.iter().find(|t| !(0.5 - 1e-12..=1.0 + 1e-12).contains(*t)) {
                return Err(Error::InvalidParameter(format!("grid time {t} outside [0.5, 1]")).into());
            }
            let rows: Vec<ResidualRow> = ts
                .iter()
                .map(|&t| {
                    let t = t.clamp(0.5, 1.0);
                    let residual = fixed_point_residual(t, cdf_f, *steps);
                    let zero = fixed_point_residual(t, zero_solution_cdf, *steps);
                    ResidualRow {
                        t,
                        steps: *steps,
                        residual,
                        zero_solution_residual: zero,
                        tol: *tol,
                        pass: residual.abs() < *tol && zero == 0.0,
                    }
                })
                .collect();
            let ok = rows.iter().all(|r| r.pass);
            return Ok((Output::Residuals(rows), ok));
        }
        Command::Estimate(args) => Output::Reports(vec![estimate(args, seed)?]),
        Command::Generation { depths, t, n } => {
            let (depths, ts) = (parse_range(depths)?, parse_grid(t)?);
            let mut reports = Vec::new();
            for d in depths {
                reports.extend(mc_generation_counts(&ts, d, *n, estimators::mix_seed(seed, d as u64))?);
            }
            reports.iter_mut().for_each(|r| r.seed = seed);
            Output::Reports(reports)
        }
        Command::Containment { sets, t, n } => {
            let ts = parse_grid(t)?;
            let shapes = if sets.is_empty() {
                default_sets()
            } else {
                sets.iter().map(|s| parse_site_set(s)).collect::<Result<_>>()?
            };
            let quantities: Vec<Quantity> = shapes
                .iter()
                .flat_map(|s| ts.iter().map(|&t| Quantity::Containment { sites: s.clone(), t }))
                .collect();
            Output::Reports(mc_events(&quantities, *n, seed)?)
        }
        Command::Covariance { distance, t, n } => {
            let (distances, ts) = (parse_range(distance)?, parse_grid(t)?);
            let mut reports = Vec::new();
            for d in distances {
                reports.extend(mc_covariance_table(d, &ts, *n, estimators::mix_seed(seed, d as u64))?);
            }
            reports.iter_mut().for_each(|r| r.seed = seed);
            Output::Reports(reports)
        }
        Command::DirectedFn { t, levels, n } => {
            let (ts, levels) = (parse_grid(t)?, parse_range(levels)?);
            let mut reports = Vec::new();
            for (k, &t) in ts.iter().enumerate() {
                let curve = estimate_fn_curve(&levels, t, *n, estimators::mix_seed(seed, 1 << 32 | k as u64))?;
                let summary = fn_limsup_check(&curve, t, config.threshold)?;
                reports.extend(curve.into_iter().map(|mut r| {
                    r.seed = seed;
                    r
                }));
                reports.push(EstimateReport { seed, ..summary });
            }
            Output::Reports(reports)
        }
        Command::DumpRealization { radius } => {
            let mut rng = estimators::replica_rng(seed, 0);
            let mut realization = sample_ball(*radius, &mut rng)?;
            realization.propagate()?;
            let dump = realization.dump()?;
            Output::Json(dump.to_json())
        }
        Command::CheckDump { input } => {
            let text = match input {
                Some(path) => std::fs::read_to_string(path)?,
                None => io::read_to_string(io::stdin())?,
            };
            let check = RealizationDump::from_json(&text)?.validate()?;
            let summary = serde_json::json!({
                "schema_version": JSON_SCHEMA_VERSION,
                "command": "check-dump",
                "sites": check.sites,
                "edges": check.edges,
                "valid": true,
            });
            Output::Json(serde_json::to_string_pretty(&summary).expect("serializable"))
        }
    };
    let ok = match &output {
        Output::Reports(reports) => reports.iter().all(|r| r.passes(config.threshold) != Some(false)),
        _ => true,
    };
    Ok((output, ok))
}

fn emit(config: &RunConfig, output: &Output, out: &mut dyn Write) -> io::Result<()> {
    let command = command_name(&config.command);
    match (output, config.format) {
        (Output::Json(text), _) => writeln!(out, "{text}"),
        (Output::Reports(reports), OutputFormat::Csv) => {
            estimators::write_csv(&mut *out, reports, config.threshold)
        }
        (Output::Residuals(rows), OutputFormat::Csv) => {
            let mut w = csv::Writer::from_writer(&mut *out);
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()
        }
        (Output::Reports(reports), OutputFormat::Json) => {
            let env = Envelope::<()> {
                schema_version: JSON_SCHEMA_VERSION,
                command,
                seed: config.seed,
                reports: Some(reports),
                rows: None,
            };
            writeln!(out, "{}", serde_json::to_string_pretty(&env).expect("serializable"))
        }
        (Output::Residuals(rows), OutputFormat::Json) => {
            let env = Envelope {
                schema_version: JSON_SCHEMA_VERSION,
                command,
                seed: config.seed,
                reports: None,
                rows: Some(rows),
            };
            writeln!(out, "{}", serde_json::to_string_pretty(&env).expect("serializable"))
        }
    }
}

/// Runs a parsed configuration, writing to `--output-path` or `stdout`.
/// Returns whether every gate passed.
pub fn execute(config: &RunConfig, stdout: &mut dyn Write) -> std::result::Result<bool, RunError> {
    if !(config.threshold > 0.0 && config.threshold.is_finite()) {
        return Err(Error::InvalidParameter("--threshold must be positive".into()).into());
    }
    let (output, ok) = compute(config)?;
    match &config.output_path {
        Some(path) => {
            let mut file = BufWriter::new(File::create(path)?);
            emit(config, &output, &mut file)?;
            file.flush()?;
        }
        None => emit(config, &output, stdout)?,
    }
    Ok(ok)
}

/// Parses arguments, runs, and maps the outcome to an exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    match execute(&config, &mut lock) {
        Ok(true) => EXIT_PASS,
        Ok(false) => EXIT_GATE_FAILED,
        Err(RunError::Usage(e)) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
        Err(RunError::Io(e)) => {
            eprintln!("error: {e}");
            EXIT_IO
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_to_string(args: &[&str]) -> (bool, String) {
        let config = RunConfig::try_parse_from(std::iter::once("frozen-perc").chain(args.iter().copied())).unwrap();
        let mut buf = Vec::new();
        let ok = execute(&config, &mut buf).unwrap();
        (ok, String::from_utf8(buf).unwrap())
    }

    #[test]
    fn grids_and_ranges() {
        let g = parse_grid("0.5:1.0:0.05").unwrap();
        assert_eq!(g.len(), 11);
        assert!((g[10] - 1.0).abs() < 1e-12);
        assert_eq!(parse_grid("0.4,0.6").unwrap(), vec![0.4, 0.6]);
        assert_eq!(parse_grid("0.7").unwrap(), vec![0.7]);
        for bad in ["", "1:0:0.1", "0:1:0", "0:1", "a", "nan", "0:1:1e-9"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
        assert_eq!(parse_range("2:5").unwrap(), vec![2, 3, 4, 5]);
        assert_eq!(parse_range("3,6,9").unwrap(), vec![3, 6, 9]);
        for bad in ["", "5:2", "-1", "1:x"] {
            assert!(parse_range(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn fixed_point_table() {
        let (ok, text) = run_to_string(&["fixed-point", "--steps", "100000"]);
        assert!(ok);
        assert_eq!(text.lines().count(), 12);
        assert!(text.starts_with("t,steps,residual,zero_solution_residual,tol,pass"));
    }

    #[test]
    fn fixed_point_rejects_times_below_half() {
        let config = RunConfig::try_parse_from(["x", "fixed-point", "--grid", "0.2:1:0.1"]).unwrap();
        assert!(matches!(execute(&config, &mut Vec::new()), Err(RunError::Usage(_))));
    }

    #[test]
    fn estimate_is_deterministic() {
        let args = ["--seed", "3", "estimate", "--quantity", "green_final", "--n", "20000"];
        let (ok, a) = run_to_string(&args);
        let (_, b) = run_to_string(&args);
        assert!(ok);
        assert_eq!(a, b);
        assert!(a.contains("green_final"));
    }

    #[test]
    fn estimate_requires_parameters() {
        let config = RunConfig::try_parse_from(["x", "estimate", "--quantity", "containment"]).unwrap();
        assert!(matches!(execute(&config, &mut Vec::new()), Err(RunError::Usage(_))));
        let config = RunConfig::try_parse_from(["x", "estimate", "--quantity", "bogus"]).unwrap();
        assert!(matches!(
            execute(&config, &mut Vec::new()),
            Err(RunError::Usage(Error::UnknownQuantity(_)))
        ));
    }

    #[test]
    fn json_envelope() {
        let (_, text) = run_to_string(&["--format", "json", "directed-fn", "--levels", "2:3", "--n", "500"]);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["command"], "directed-fn");
        let reports = v["reports"].as_array().unwrap();
        assert_eq!(reports.len(), 3);
        assert_eq!(reports[2]["quantity"], "directed_fn_limsup");
        assert_eq!(reports[2]["gate"], "lower_bound");
    }

    #[test]
    fn dump_round_trips_through_checker() {
        let (_, text) = run_to_string(&["--seed", "5", "dump-realization", "--radius", "2"]);
        let check = RealizationDump::from_json(&text).unwrap().validate().unwrap();
        assert_eq!(check.sites, 10);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(["x", "--bogus"]), EXIT_USAGE);
        assert_eq!(run(["x", "estimate", "--quantity", "bogus"]), EXIT_USAGE);
        let dir = std::env::temp_dir().join("frozen-perc-no-such-dir").join("out.csv");
        assert_eq!(
            run(["x", "--output-path", dir.to_str().unwrap(), "estimate", "--quantity", "green_final", "--n", "10"]),
            EXIT_IO
        );
    }
}
